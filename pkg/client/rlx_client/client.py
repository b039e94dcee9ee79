"""Socket client mirroring the primary broker client's contracts."""

from __future__ import annotations

import socket
import time

from .wire import Dtype, Message, Opcode, Reader, Response, Status, Tensor

DEFAULT_POLL_INTERVAL = 0.005


class BrokerUnavailable(ConnectionError):
    pass


class PollTimeout(TimeoutError):
    pass


class BrokerClient:
    """Single-connection client; one instance per thread."""

    def __init__(self, address: str, connect_timeout: float = 5.0):
        host, _, port = address.rpartition(":")
        try:
            self._sock = socket.create_connection((host, int(port)),
                                                  timeout=connect_timeout)
        except OSError as exc:
            raise BrokerUnavailable(f"{address}: {exc}") from exc
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = Reader(self._read_exact)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise BrokerUnavailable("connection closed")
            buf.extend(chunk)
        return bytes(buf)

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, msg: Message) -> Response:
        from .wire import encode_message
        self._sock.sendall(encode_message(msg))
        return self._reader.response()

    def put(self, key: str, tensor: Tensor) -> None:
        resp = self._call(Message(Opcode.PUT, key, tensor))
        if resp.status != Status.OK:
            raise RuntimeError(f"PUT {key}: {resp.status.name}")

    def get(self, key: str) -> Tensor | None:
        resp = self._call(Message(Opcode.GET, key))
        if resp.status == Status.NOT_FOUND:
            return None
        if resp.status != Status.OK:
            raise RuntimeError(f"GET {key}: {resp.status.name}")
        return resp.payload

    def exists(self, key: str) -> bool:
        resp = self._call(Message(Opcode.EXISTS, key))
        if resp.status != Status.OK:
            raise RuntimeError(f"EXISTS {key}: {resp.status.name}")
        return bool(resp.exists_flag)

    def delete(self, key: str) -> None:
        resp = self._call(Message(Opcode.DEL, key))
        if resp.status != Status.OK:
            raise RuntimeError(f"DEL {key}: {resp.status.name}")

    def ping(self) -> None:
        resp = self._call(Message(Opcode.PING, "ping"))
        if resp.status != Status.OK:
            raise RuntimeError(f"PING: {resp.status.name}")

    def poll(self, key: str, interval: float = DEFAULT_POLL_INTERVAL,
             timeout: float = 30.0) -> Tensor:
        """GET until the key appears; the key is left in place."""
        deadline = time.monotonic() + timeout
        while True:
            tensor = self.get(key)
            if tensor is not None:
                return tensor
            if time.monotonic() >= deadline:
                raise PollTimeout(f"{key} not available after {timeout}s")
            time.sleep(interval)
