"""Codec round trips, byte-layout pins, malformed-frame handling."""

import json
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relexi import wire
from relexi.wire import (BadKey, BadMagic, Dtype, Message, Opcode, OversizedKey,
                         OversizedTensor, Response, Status, Tensor,
                         TruncatedFrame, UnknownDtype, UnknownOpcode,
                         decode_message, decode_response, encode_message,
                         encode_response)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def test_ping_layout_is_pinned():
    frame = encode_message(Message(Opcode.PING, "x"))
    assert frame == b"RLXB" + b"\x05" + b"\x01\x00\x00\x00" + b"x"
    assert len(frame) == 10


def test_put_zero_scalar_layout():
    t = Tensor(Dtype.F64, (1,), struct.pack("<d", 0.0))
    frame = encode_message(Message(Opcode.PUT, "k", t))
    header = b"RLXB" + b"\x01" + b"\x01\x00\x00\x00" + b"k"
    tensor = b"\x02" + b"\x01" + (1).to_bytes(8, "little") + b"\x00" * 8
    assert frame == header + tensor


def test_response_layouts():
    assert encode_response(Response(Status.OK)) == b"\x00\x00"
    assert encode_response(Response(Status.NOT_FOUND)) == b"\x01\x00"
    assert encode_response(Response(Status.OK, exists_flag=1)) == b"\x00\x02\x01"


def test_bad_magic():
    with pytest.raises(BadMagic):
        decode_message(b"XXXX\x05\x01\x00\x00\x00x")


def test_truncated_frame():
    t = Tensor(Dtype.F64, (4,), np.arange(4.0).tobytes())
    frame = encode_message(Message(Opcode.PUT, "k", t))
    with pytest.raises(TruncatedFrame):
        decode_message(frame[:-5])


def test_unknown_opcode_and_dtype():
    frame = bytearray(encode_message(Message(Opcode.PING, "x")))
    frame[4] = 99
    with pytest.raises(UnknownOpcode):
        decode_message(bytes(frame))
    t = Tensor(Dtype.F64, (1,), struct.pack("<d", 1.0))
    frame = bytearray(encode_message(Message(Opcode.PUT, "k", t)))
    frame[10] = 77                               # dtype byte
    with pytest.raises(UnknownDtype):
        decode_message(bytes(frame))


def test_key_validation():
    with pytest.raises(BadKey):
        encode_message(Message(Opcode.GET, ""))
    with pytest.raises(BadKey):
        encode_message(Message(Opcode.GET, "has space"))
    with pytest.raises(OversizedKey):
        encode_message(Message(Opcode.GET, "k" * 257))
    assert encode_message(Message(Opcode.GET, "k" * 256))


def test_oversized_tensor_rejected_before_allocation():
    # declared dims imply ~10^18 bytes; decode must bail on the header
    frame = (b"RLXB" + b"\x01" + b"\x01\x00\x00\x00" + b"k"
             + b"\x02" + b"\x02"
             + (2**30).to_bytes(8, "little") + (2**30).to_bytes(8, "little"))
    with pytest.raises(OversizedTensor):
        decode_message(frame)
    with pytest.raises(OversizedTensor):
        Tensor(Dtype.U8, tuple([2] * 9), bytes(2))


_dtypes = st.sampled_from([Dtype.F32, Dtype.F64, Dtype.U8])
_keys = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N"), max_codepoint=0x2FF),
    min_size=1, max_size=32)


@st.composite
def tensors(draw):
    dtype = draw(_dtypes)
    shape = tuple(draw(st.lists(st.integers(1, 5), min_size=0, max_size=4)))
    n = int(np.prod(shape)) if shape else 1
    np_dtype = {Dtype.F32: "<f4", Dtype.F64: "<f8", Dtype.U8: "u1"}[dtype]
    if dtype == Dtype.U8:
        arr = draw(st.binary(min_size=n, max_size=n))
        return Tensor(dtype, shape, arr)
    vals = draw(st.lists(st.floats(-float(2.0**100), float(2.0**100), allow_nan=False, width=32),
                         min_size=n, max_size=n))
    return Tensor(dtype, shape, np.array(vals, dtype=np_dtype).tobytes())


@st.composite
def messages(draw):
    opcode = draw(st.sampled_from(list(Opcode)))
    key = draw(_keys)
    payload = draw(tensors()) if opcode == Opcode.PUT else None
    return Message(opcode, key, payload)


@st.composite
def responses(draw):
    status = draw(st.sampled_from(list(Status)))
    variant = draw(st.integers(0, 2))
    if variant == 1:
        return Response(status, payload=draw(tensors()))
    if variant == 2:
        return Response(status, exists_flag=draw(st.integers(0, 1)))
    return Response(status)


@settings(max_examples=1000, deadline=None)
@given(messages())
def test_message_roundtrip(msg):
    assert decode_message(encode_message(msg)) == msg


@settings(max_examples=1000, deadline=None)
@given(responses())
def test_response_roundtrip(resp):
    assert decode_response(encode_response(resp)) == resp


@settings(max_examples=300, deadline=None)
@given(messages(), messages())
def test_encoding_injective(m1, m2):
    if m1 != m2:
        assert encode_message(m1) != encode_message(m2)


def test_tensor_numpy_roundtrip_bitwise():
    rng = np.random.default_rng(3)
    for dtype in ("float32", "float64", "uint8"):
        arr = (rng.random((3, 4)) * 100).astype(dtype)
        back = Tensor.from_numpy(arr).to_numpy()
        assert back.dtype == arr.dtype
        assert back.tobytes() == arr.tobytes()


def test_golden_frames_decode():
    blob = (FIXTURES / "golden-frames.bin").read_bytes()
    doc = json.loads((FIXTURES / "golden-frames.json").read_text())
    assert doc["version"] == 1
    for entry in doc["frames"]:
        frame = blob[entry["offset"]:entry["offset"] + entry["length"]]
        assert frame.hex() == entry["frame_hex"]
        if entry["kind"] == "message":
            msg = decode_message(frame)
            assert int(msg.opcode) == entry["opcode"]
            assert msg.key == entry["key"]
            if entry["payload"] is not None:
                assert int(msg.payload.dtype) == entry["payload"]["dtype"]
                assert list(msg.payload.shape) == entry["payload"]["shape"]
                assert msg.payload.data.hex() == entry["payload"]["data_hex"]
        else:
            resp = decode_response(frame)
            assert int(resp.status) == entry["status"]
            assert resp.exists_flag == entry["exists_flag"]
            if entry["payload"] is not None:
                assert resp.payload.data.hex() == entry["payload"]["data_hex"]


def test_golden_fixture_is_stable(tmp_path, monkeypatch):
    """Regenerating the fixture must reproduce the committed bytes."""
    import importlib.util
    spec = importlib.util.spec_from_file_location(
        "gen_golden_frames",
        FIXTURES.parent / "scripts" / "gen_golden_frames.py")
    gen = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(gen)
    monkeypatch.setattr(gen, "FIXTURE_DIR", tmp_path)
    gen.main()
    assert ((tmp_path / "golden-frames.bin").read_bytes()
            == (FIXTURES / "golden-frames.bin").read_bytes())
