"""Frame codec for the tensor broker protocol, written from the byte-layout
contract (see the broker repo's fixtures/golden-frames.json):

    message  = "RLXB" opcode:u8 keylen:u32le key [tensor if PUT]
    response = status:u8 kind:u8 [tensor if kind=1] [flag:u8 if kind=2]
    tensor   = dtype:u8 ndim:u8 dims:u64le*ndim data

All integers little-endian; tensor data is little-endian row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"RLXB"
MAX_KEY = 256
MAX_NDIM = 8
MAX_DATA = 2 ** 31


class Opcode(IntEnum):
    PUT = 1
    GET = 2
    EXISTS = 3
    DEL = 4
    PING = 5


class Status(IntEnum):
    OK = 0
    NOT_FOUND = 1
    BAD_REQUEST = 2
    INTERNAL = 3


class Dtype(IntEnum):
    F32 = 1
    F64 = 2
    U8 = 3


ITEM_SIZE = {Dtype.F32: 4, Dtype.F64: 8, Dtype.U8: 1}
PACK_CHAR = {Dtype.F32: "f", Dtype.F64: "d", Dtype.U8: "B"}


class WireError(ValueError):
    pass


@dataclass(frozen=True)
class Tensor:
    dtype: Dtype
    shape: tuple
    data: bytes

    def __post_init__(self):
        if len(self.shape) > MAX_NDIM:
            raise WireError("too many dimensions")
        n = 1
        for d in self.shape:
            n *= d
        if n * ITEM_SIZE[Dtype(self.dtype)] != len(self.data):
            raise WireError("shape/data size mismatch")

    @property
    def count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    def values(self) -> list:
        """Flat list of Python numbers (little-endian decode)."""
        return list(struct.unpack(
            "<%d%s" % (self.count, PACK_CHAR[Dtype(self.dtype)]), self.data))

    @classmethod
    def from_values(cls, dtype: Dtype, shape: tuple, values) -> "Tensor":
        data = struct.pack("<%d%s" % (len(values), PACK_CHAR[Dtype(dtype)]),
                           *values)
        return cls(dtype, tuple(shape), data)


@dataclass(frozen=True)
class Message:
    opcode: Opcode
    key: str
    payload: Tensor | None = None


@dataclass(frozen=True)
class Response:
    status: Status
    payload: Tensor | None = None
    exists_flag: int | None = None


def _check_key(raw: bytes):
    if not raw:
        raise WireError("empty key")
    if len(raw) > MAX_KEY:
        raise WireError("key too long")
    if any(c in b" \t\n\r\x0b\x0c" for c in raw):
        raise WireError("key contains whitespace")


def _pack_tensor(t: Tensor) -> bytes:
    parts = [struct.pack("<BB", t.dtype, len(t.shape))]
    for d in t.shape:
        parts.append(struct.pack("<Q", d))
    parts.append(t.data)
    return b"".join(parts)


def encode_message(msg: Message) -> bytes:
    raw = msg.key.encode("utf-8")
    _check_key(raw)
    out = MAGIC + struct.pack("<BI", msg.opcode, len(raw)) + raw
    if msg.opcode == Opcode.PUT:
        if msg.payload is None:
            raise WireError("PUT needs a payload")
        out += _pack_tensor(msg.payload)
    elif msg.payload is not None:
        raise WireError("only PUT carries a payload")
    return out


def encode_response(resp: Response) -> bytes:
    if resp.payload is not None:
        return struct.pack("<BB", resp.status, 1) + _pack_tensor(resp.payload)
    if resp.exists_flag is not None:
        return struct.pack("<BBB", resp.status, 2, resp.exists_flag)
    return struct.pack("<BB", resp.status, 0)


class Reader:
    """Incremental parser over any `read_exact(n) -> bytes` source."""

    def __init__(self, read_exact):
        self.read_exact = read_exact

    def tensor(self) -> Tensor:
        dtype_b, ndim = struct.unpack("<BB", self.read_exact(2))
        try:
            dtype = Dtype(dtype_b)
        except ValueError:
            raise WireError(f"unknown dtype {dtype_b}") from None
        if ndim > MAX_NDIM:
            raise WireError("too many dimensions")
        shape = tuple(struct.unpack("<Q", self.read_exact(8))[0]
                      for _ in range(ndim))
        n = 1
        for d in shape:
            n *= d
            if n * ITEM_SIZE[dtype] > MAX_DATA:
                raise WireError("tensor too large")
        return Tensor(dtype, shape, self.read_exact(n * ITEM_SIZE[dtype]))

    def message(self) -> Message:
        if self.read_exact(4) != MAGIC:
            raise WireError("bad magic")
        opcode_b = self.read_exact(1)[0]
        try:
            opcode = Opcode(opcode_b)
        except ValueError:
            raise WireError(f"unknown opcode {opcode_b}") from None
        (keylen,) = struct.unpack("<I", self.read_exact(4))
        if keylen > MAX_KEY:
            raise WireError("key too long")
        raw = self.read_exact(keylen)
        _check_key(raw)
        payload = self.tensor() if opcode == Opcode.PUT else None
        return Message(opcode, raw.decode("utf-8"), payload)

    def response(self) -> Response:
        status_b, kind = struct.unpack("<BB", self.read_exact(2))
        status = Status(status_b)
        if kind == 0:
            return Response(status)
        if kind == 1:
            return Response(status, payload=self.tensor())
        if kind == 2:
            return Response(status, exists_flag=self.read_exact(1)[0])
        raise WireError(f"unknown response kind {kind}")


def _buffer_reader(data: bytes):
    pos = [0]

    def read_exact(n):
        end = pos[0] + n
        if end > len(data):
            raise WireError("truncated frame")
        chunk = data[pos[0]:end]
        pos[0] = end
        return chunk

    return read_exact, pos


def decode_message(data: bytes) -> Message:
    read_exact, pos = _buffer_reader(data)
    msg = Reader(read_exact).message()
    if pos[0] != len(data):
        raise WireError("trailing bytes")
    return msg


def decode_response(data: bytes) -> Response:
    read_exact, pos = _buffer_reader(data)
    resp = Reader(read_exact).response()
    if pos[0] != len(data):
        raise WireError("trailing bytes")
    return resp
