#!/usr/bin/env python3
"""Regenerate fixtures/golden-frames.bin and its documentation sidecar.

The fixture pins the wire format: every implementation must decode these
exact bytes to the documented values.  Output is deterministic, so rerunning
this script must be a no-op unless the protocol itself changed.
"""

import json
import struct
from pathlib import Path

import numpy as np

from relexi import wire

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def golden_entries():
    t_f64 = wire.Tensor(wire.Dtype.F64, (2, 3),
                        np.arange(6, dtype="<f8").tobytes())
    t_f32 = wire.Tensor(wire.Dtype.F32, (4,),
                        np.array([0.5, -1.5, 2 ** -20, 3e8], "<f4").tobytes())
    t_u8 = wire.Tensor(wire.Dtype.U8, (2, 2, 2), bytes(range(8)))
    t_scalar = wire.Tensor(wire.Dtype.F64, (1,), struct.pack("<d", 0.0))

    msgs = [
        ("message", wire.Message(wire.Opcode.PING, "x")),
        ("message", wire.Message(wire.Opcode.GET, "run.env0.state.0")),
        ("message", wire.Message(wire.Opcode.EXISTS, "k")),
        ("message", wire.Message(wire.Opcode.DEL, "gone")),
        ("message", wire.Message(wire.Opcode.PUT, "zero", t_scalar)),
        ("message", wire.Message(wire.Opcode.PUT, "mat", t_f64)),
        ("message", wire.Message(wire.Opcode.PUT, "vec32", t_f32)),
        ("message", wire.Message(wire.Opcode.PUT, "cube", t_u8)),
        ("response", wire.Response(wire.Status.OK)),
        ("response", wire.Response(wire.Status.NOT_FOUND)),
        ("response", wire.Response(wire.Status.BAD_REQUEST)),
        ("response", wire.Response(wire.Status.OK, payload=t_f64)),
        ("response", wire.Response(wire.Status.OK, exists_flag=1)),
        ("response", wire.Response(wire.Status.OK, exists_flag=0)),
    ]
    return msgs


def describe_tensor(t):
    if t is None:
        return None
    return {"dtype": int(t.dtype), "shape": list(t.shape),
            "data_hex": t.data.hex()}


def main():
    FIXTURE_DIR.mkdir(exist_ok=True)
    blob = bytearray()
    doc = []
    for kind, obj in golden_entries():
        if kind == "message":
            frame = wire.encode_message(obj)
            entry = {"kind": kind, "offset": len(blob), "length": len(frame),
                     "opcode": int(obj.opcode), "key": obj.key,
                     "payload": describe_tensor(obj.payload)}
        else:
            frame = wire.encode_response(obj)
            entry = {"kind": kind, "offset": len(blob), "length": len(frame),
                     "status": int(obj.status),
                     "payload": describe_tensor(obj.payload),
                     "exists_flag": obj.exists_flag}
        entry["frame_hex"] = frame.hex()
        blob.extend(frame)
        doc.append(entry)

    (FIXTURE_DIR / "golden-frames.bin").write_bytes(bytes(blob))
    with open(FIXTURE_DIR / "golden-frames.json", "w") as fh:
        json.dump({"format": "relexi wire fixture", "version": 1,
                   "frames": doc}, fh, indent=2)
    print(f"wrote {len(doc)} frames, {len(blob)} bytes")


if __name__ == "__main__":
    main()
