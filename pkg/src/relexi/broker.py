"""In-memory key -> tensor datastore shared by the trainer and its workers.

One process runs the server (either standalone through the ``broker`` console
script or embedded in the trainer); every other participant connects with a
:class:`Client`.  A GET on a missing key is a normal NOT_FOUND response, which
is what makes client-side polling cheap.
"""

from __future__ import annotations

import argparse
import json
import signal
import socket
import threading
import time

import numpy as np

from . import wire
from .wire import Message, Opcode, Response, Status, Tensor

DEFAULT_POLL_INTERVAL = 0.005


class BrokerError(Exception):
    pass


class BindFailure(BrokerError):
    pass


class ConnectionLost(BrokerError):
    pass


class PollTimeout(BrokerError):
    """poll() gave up; distinct from protocol failures so callers can retry."""


class Store:
    """Key->Tensor map with per-operation atomicity and monotone counters."""

    def __init__(self):
        self._data: dict[str, Tensor] = {}
        self._lock = threading.Lock()
        self.puts = 0
        self.gets = 0
        self.get_misses = 0
        self.bytes_in = 0
        self.bytes_out = 0

    def put(self, key: str, tensor: Tensor):
        with self._lock:
            self._data[key] = tensor
            self.puts += 1

    def get(self, key: str) -> Tensor | None:
        with self._lock:
            self.gets += 1
            t = self._data.get(key)
            if t is None:
                self.get_misses += 1
            return t

    def exists(self, key: str) -> bool:
        with self._lock:
            return key in self._data

    def delete(self, key: str):
        with self._lock:
            self._data.pop(key, None)

    def __len__(self):
        with self._lock:
            return len(self._data)

    def counters(self) -> dict:
        with self._lock:
            return {"puts": self.puts, "gets": self.gets,
                    "get_misses": self.get_misses,
                    "bytes_in": self.bytes_in, "bytes_out": self.bytes_out,
                    "keys": len(self._data)}


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionLost("peer closed the connection")
        buf.extend(chunk)
    return bytes(buf)


class Server:
    """Threaded TCP server; one handler thread per connection."""

    def __init__(self, bind: str = "127.0.0.1:0", max_connections: int = 256):
        host, _, port = bind.rpartition(":")
        self.store = Store()
        self.max_connections = max_connections
        self._conn_count = 0
        self._conn_lock = threading.Lock()
        self._shutdown = threading.Event()
        self._threads: list[threading.Thread] = []
        try:
            self._sock = socket.create_server((host or "127.0.0.1", int(port)))
        except OSError as exc:
            raise BindFailure(f"cannot bind {bind}: {exc}") from exc
        self.address = "%s:%d" % self._sock.getsockname()[:2]

    def serve_forever(self):
        """Accept loop; returns after :meth:`shutdown`."""
        self._sock.settimeout(0.2)
        while not self._shutdown.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._conn_lock:
                if self._conn_count >= self.max_connections:
                    conn.close()
                    continue
                self._conn_count += 1
            t = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)
        self._sock.close()

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t

    def shutdown(self):
        self._shutdown.set()

    def _handle(self, conn: socket.socket):
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        store = self.store
        try:
            reader = wire.FrameReader(lambda n: self._recv_counted(conn, n))
            while not self._shutdown.is_set():
                try:
                    msg = reader.read_message()
                except wire.ProtocolError:
                    # Malformed traffic (including bad magic) kills only this
                    # connection; the store and other clients are unaffected.
                    break
                resp = self._dispatch(store, msg)
                out = wire.encode_response(resp)
                store.bytes_out += len(out)
                conn.sendall(out)
        except (ConnectionLost, OSError):
            pass
        finally:
            conn.close()
            with self._conn_lock:
                self._conn_count -= 1

    def _recv_counted(self, conn, n):
        data = _recv_exact(conn, n)
        self.store.bytes_in += len(data)
        return data

    @staticmethod
    def _dispatch(store: Store, msg: Message) -> Response:
        op = msg.opcode
        if op == Opcode.PUT:
            store.put(msg.key, msg.payload)
            return Response(Status.OK)
        if op == Opcode.GET:
            t = store.get(msg.key)
            if t is None:
                return Response(Status.NOT_FOUND)
            return Response(Status.OK, payload=t)
        if op == Opcode.EXISTS:
            return Response(Status.OK, exists_flag=int(store.exists(msg.key)))
        if op == Opcode.DEL:
            store.delete(msg.key)
            return Response(Status.OK)
        if op == Opcode.PING:
            return Response(Status.OK)
        return Response(Status.BAD_REQUEST)


class Client:
    """Single-connection client; not safe to share between threads."""

    def __init__(self, address: str, connect_timeout: float = 5.0):
        host, _, port = address.rpartition(":")
        try:
            self._sock = socket.create_connection((host, int(port)),
                                                  timeout=connect_timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot reach broker at {address}: {exc}") from exc
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._reader = wire.FrameReader(lambda n: _recv_exact(self._sock, n))

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, msg: Message) -> Response:
        try:
            self._sock.sendall(wire.encode_message(msg))
            return self._reader.read_response()
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc

    def put(self, key: str, value) -> None:
        tensor = value if isinstance(value, Tensor) else Tensor.from_numpy(np.asarray(value))
        resp = self._roundtrip(Message(Opcode.PUT, key, tensor))
        if resp.status != Status.OK:
            raise BrokerError(f"PUT {key}: {resp.status.name}")

    def get(self, key: str) -> np.ndarray | None:
        resp = self._roundtrip(Message(Opcode.GET, key))
        if resp.status == Status.NOT_FOUND:
            return None
        if resp.status != Status.OK:
            raise BrokerError(f"GET {key}: {resp.status.name}")
        return resp.payload.to_numpy()

    def get_tensor(self, key: str) -> Tensor | None:
        resp = self._roundtrip(Message(Opcode.GET, key))
        if resp.status == Status.NOT_FOUND:
            return None
        if resp.status != Status.OK:
            raise BrokerError(f"GET {key}: {resp.status.name}")
        return resp.payload

    def exists(self, key: str) -> bool:
        resp = self._roundtrip(Message(Opcode.EXISTS, key))
        if resp.status != Status.OK:
            raise BrokerError(f"EXISTS {key}: {resp.status.name}")
        return bool(resp.exists_flag)

    def delete(self, key: str) -> None:
        resp = self._roundtrip(Message(Opcode.DEL, key))
        if resp.status != Status.OK:
            raise BrokerError(f"DEL {key}: {resp.status.name}")

    def ping(self) -> None:
        resp = self._roundtrip(Message(Opcode.PING, "ping"))
        if resp.status != Status.OK:
            raise BrokerError(f"PING: {resp.status.name}")

    def poll(self, key: str, interval: float = DEFAULT_POLL_INTERVAL,
             timeout: float = 30.0) -> np.ndarray:
        """GET every `interval` seconds until the key appears.

        The key is left in place on success; deleting it is the caller's
        job.  Raises :class:`PollTimeout` after `timeout` seconds.
        """
        deadline = time.monotonic() + timeout
        while True:
            value = self.get(key)
            if value is not None:
                return value
            if time.monotonic() >= deadline:
                raise PollTimeout(f"{key} did not appear within {timeout}s")
            time.sleep(interval)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="broker", description="in-memory tensor datastore server")
    parser.add_argument("--bind", default="127.0.0.1:6970",
                        metavar="ADDR:PORT")
    parser.add_argument("--max-conn", type=int, default=256)
    parser.add_argument("--stats-json", metavar="PATH",
                        help="write counters to this file on shutdown")
    args = parser.parse_args(argv)

    try:
        server = Server(args.bind, max_connections=args.max_conn)
    except BindFailure as exc:
        print(exc)
        return 1
    print(f"broker listening on {server.address}", flush=True)

    def stop(signum, frame):
        server.shutdown()

    signal.signal(signal.SIGTERM, stop)
    signal.signal(signal.SIGINT, stop)
    server.serve_forever()
    if args.stats_json:
        with open(args.stats_json, "w") as fh:
            json.dump(server.store.counters(), fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
