"""Binary message codec for the tensor broker.

All participants (broker server, trainer client, environment workers and the
out-of-tree client) speak exactly this framing, so the byte layout is frozen:

Message frame (all integers little-endian):

    magic   4 bytes  ASCII "RLXB"
    opcode  u8       PUT=1 GET=2 EXISTS=3 DEL=4 PING=5
    keylen  u32
    key     keylen bytes, UTF-8, non-empty, no whitespace, <= 256 bytes
    tensor  only for PUT (layout below)

Response frame:

    status  u8       OK=0 NOT_FOUND=1 BAD_REQUEST=2 INTERNAL=3
    kind    u8       0 = nothing follows, 1 = tensor follows, 2 = exists flag
    tensor  only for kind 1
    flag    u8, only for kind 2

Tensor layout:

    dtype   u8       F32=1 F64=2 U8=3
    ndim    u8       0..8
    dims    ndim x u64
    data    prod(dims) * itemsize bytes, little-endian, row-major

Frames are self-delimiting: the payload length is implied by the dims, so a
stream of frames can be parsed incrementally.  `fixtures/golden-frames.bin`
holds reference frames that every implementation must decode identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

MAGIC = b"RLXB"
MAX_KEY_BYTES = 256
MAX_TENSOR_BYTES = 2**31
MAX_NDIM = 8

_WHITESPACE = set(b" \t\n\r\x0b\x0c")

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


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


_DTYPE_NP = {Dtype.F32: np.dtype("<f4"), Dtype.F64: np.dtype("<f8"),
             Dtype.U8: np.dtype("u1")}
_NP_DTYPE = {np.dtype("float32"): Dtype.F32, np.dtype("float64"): Dtype.F64,
             np.dtype("uint8"): Dtype.U8}


class ProtocolError(ValueError):
    """Base class for malformed frames."""


class BadMagic(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class UnknownOpcode(ProtocolError):
    pass


class UnknownDtype(ProtocolError):
    pass


class OversizedKey(ProtocolError):
    pass


class OversizedTensor(ProtocolError):
    pass


class BadKey(ProtocolError):
    pass


@dataclass(frozen=True)
class Tensor:
    """Dtype-tagged n-dimensional array, the broker's unit of exchange."""

    dtype: Dtype
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if len(self.shape) > MAX_NDIM:
            raise OversizedTensor(f"ndim {len(self.shape)} > {MAX_NDIM}")
        n = 1
        for d in self.shape:
            n *= d
        expect = n * _DTYPE_NP[Dtype(self.dtype)].itemsize
        if expect > MAX_TENSOR_BYTES:
            raise OversizedTensor(f"{expect} bytes > {MAX_TENSOR_BYTES}")
        if expect != len(self.data):
            raise ProtocolError(
                f"shape {self.shape} implies {expect} bytes, got {len(self.data)}")

    @classmethod
    def from_numpy(cls, arr: np.ndarray) -> "Tensor":
        arr = np.ascontiguousarray(arr)
        try:
            code = _NP_DTYPE[arr.dtype]
        except KeyError:
            raise UnknownDtype(f"unsupported dtype {arr.dtype}") from None
        little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        return cls(code, arr.shape, little.tobytes())

    def to_numpy(self) -> np.ndarray:
        arr = np.frombuffer(self.data, dtype=_DTYPE_NP[Dtype(self.dtype)])
        return arr.reshape(self.shape).copy()


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


def _check_key(key_bytes: bytes):
    if not key_bytes:
        raise BadKey("empty key")
    if len(key_bytes) > MAX_KEY_BYTES:
        raise OversizedKey(f"key is {len(key_bytes)} bytes, max {MAX_KEY_BYTES}")
    if any(b in _WHITESPACE for b in key_bytes):
        raise BadKey("key contains whitespace")


def _encode_tensor(t: Tensor, out: list[bytes]):
    out.append(bytes([t.dtype, len(t.shape)]))
    for d in t.shape:
        out.append(_U64.pack(d))
    out.append(t.data)


def encode_message(msg: Message) -> bytes:
    key_bytes = msg.key.encode("utf-8")
    _check_key(key_bytes)
    out = [MAGIC, bytes([msg.opcode]), _U32.pack(len(key_bytes)), key_bytes]
    if msg.opcode == Opcode.PUT:
        if msg.payload is None:
            raise ProtocolError("PUT requires a tensor payload")
        _encode_tensor(msg.payload, out)
    elif msg.payload is not None:
        raise ProtocolError(f"{Opcode(msg.opcode).name} carries no payload")
    return b"".join(out)


def encode_response(resp: Response) -> bytes:
    if resp.payload is not None:
        out = [bytes([resp.status, 1])]
        _encode_tensor(resp.payload, out)
        return b"".join(out)
    if resp.exists_flag is not None:
        return bytes([resp.status, 2, resp.exists_flag])
    return bytes([resp.status, 0])


class _Cursor:
    """Reads exact byte counts from a buffer, raising TruncatedFrame on underrun."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise TruncatedFrame(f"needed {n} bytes at offset {self.pos}")
        chunk = self.buf[self.pos:end]
        self.pos = end
        return chunk

    def done(self):
        if self.pos != len(self.buf):
            raise ProtocolError(f"{len(self.buf) - self.pos} trailing bytes")


def _decode_tensor(cur: _Cursor) -> Tensor:
    dtype_b, ndim = cur.take(2)
    try:
        dtype = Dtype(dtype_b)
    except ValueError:
        raise UnknownDtype(f"dtype code {dtype_b}") from None
    if ndim > MAX_NDIM:
        raise OversizedTensor(f"ndim {ndim} > {MAX_NDIM}")
    shape = tuple(_U64.unpack(cur.take(8))[0] for _ in range(ndim))
    n = 1
    for d in shape:
        n *= d
        if n * _DTYPE_NP[dtype].itemsize > MAX_TENSOR_BYTES:
            raise OversizedTensor("declared payload exceeds 2 GiB cap")
    nbytes = n * _DTYPE_NP[dtype].itemsize
    return Tensor(dtype, shape, cur.take(nbytes))


def _decode_message_at(cur: _Cursor) -> Message:
    if cur.take(4) != MAGIC:
        raise BadMagic("bad magic")
    (op_b,) = cur.take(1)
    try:
        opcode = Opcode(op_b)
    except ValueError:
        raise UnknownOpcode(f"opcode {op_b}") from None
    (keylen,) = _U32.unpack(cur.take(4))
    if keylen > MAX_KEY_BYTES:
        raise OversizedKey(f"declared key length {keylen}")
    key_bytes = cur.take(keylen)
    _check_key(key_bytes)
    payload = _decode_tensor(cur) if opcode == Opcode.PUT else None
    return Message(opcode, key_bytes.decode("utf-8"), payload)


def _decode_response_at(cur: _Cursor) -> Response:
    status_b, kind = cur.take(2)
    try:
        status = Status(status_b)
    except ValueError:
        raise ProtocolError(f"status {status_b}") from None
    if kind == 0:
        return Response(status)
    if kind == 1:
        return Response(status, payload=_decode_tensor(cur))
    if kind == 2:
        (flag,) = cur.take(1)
        return Response(status, exists_flag=flag)
    raise ProtocolError(f"response kind {kind}")


def decode_message(data: bytes) -> Message:
    cur = _Cursor(data)
    msg = _decode_message_at(cur)
    cur.done()
    return msg


def decode_response(data: bytes) -> Response:
    cur = _Cursor(data)
    resp = _decode_response_at(cur)
    cur.done()
    return resp


class FrameReader:
    """Incremental frame parser over a `recv_exact(n) -> bytes` callable.

    Used by the socket endpoints; raises the same errors as the one-shot
    decoders.  `recv_exact` must either return exactly n bytes or raise.
    """

    def __init__(self, recv_exact):
        self._recv = recv_exact

    def _tensor(self) -> Tensor:
        head = self._recv(2)
        dtype_b, ndim = head
        try:
            dtype = Dtype(dtype_b)
        except ValueError:
            raise UnknownDtype(f"dtype code {dtype_b}") from None
        if ndim > MAX_NDIM:
            raise OversizedTensor(f"ndim {ndim} > {MAX_NDIM}")
        shape = tuple(_U64.unpack(self._recv(8))[0] for _ in range(ndim))
        n = 1
        for d in shape:
            n *= d
            if n * _DTYPE_NP[dtype].itemsize > MAX_TENSOR_BYTES:
                raise OversizedTensor("declared payload exceeds 2 GiB cap")
        return Tensor(dtype, shape, self._recv(n * _DTYPE_NP[dtype].itemsize))

    def read_message(self) -> Message:
        if self._recv(4) != MAGIC:
            raise BadMagic("bad magic")
        (op_b,) = self._recv(1)
        try:
            opcode = Opcode(op_b)
        except ValueError:
            raise UnknownOpcode(f"opcode {op_b}") from None
        (keylen,) = _U32.unpack(self._recv(4))
        if keylen > MAX_KEY_BYTES:
            raise OversizedKey(f"declared key length {keylen}")
        key_bytes = self._recv(keylen)
        _check_key(key_bytes)
        payload = self._tensor() if opcode == Opcode.PUT else None
        return Message(opcode, key_bytes.decode("utf-8"), payload)

    def read_response(self) -> Response:
        status_b, kind = self._recv(2)
        try:
            status = Status(status_b)
        except ValueError:
            raise ProtocolError(f"status {status_b}") from None
        if kind == 0:
            return Response(status)
        if kind == 1:
            return Response(status, payload=self._tensor())
        if kind == 2:
            (flag,) = self._recv(1)
            return Response(status, exists_flag=flag)
        raise ProtocolError(f"response kind {kind}")
