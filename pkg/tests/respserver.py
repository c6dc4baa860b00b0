"""In-process Redis-subset server for exercising the RESP client.

Speaks just the commands the oracle uses (PING, PFADD, PFCOUNT, DEL)
plus SET so wrong-type replies can be provoked. HLL keys are backed by
the library's own sketch, which makes a full attack-over-TCP run
checkable end to end. ``drop_after`` closes the connection once after
the N-th reply to exercise the client's reconnect path.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from contextlib import contextmanager

from hllrt.remote import ErrorReply, ProtocolError, RespArray, RespStream, SimpleString, encode_value
from hllrt.sketch import HllParams, HllSketch

WRONGTYPE = "WRONGTYPE Operation against a key holding the wrong kind of value"


class _Handler(socketserver.BaseRequestHandler):
    def setup(self):
        self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def handle(self):
        stream = RespStream(self.request)
        while True:
            try:
                command = stream.read_value()
            except (ProtocolError, ConnectionError, OSError):
                return
            reply = self.server.dispatch(command)
            try:
                self.request.sendall(encode_value(reply))
            except (ConnectionError, OSError):
                return
            if self.server.should_drop():
                return  # simulate a dying connection


class MiniRedisServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, register_count=16384, register_width=6, drop_after=None):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.params = HllParams(register_count, register_width)
        self.keys: dict[bytes, object] = {}
        self.lock = threading.Lock()
        self.commands_seen: list[bytes] = []
        self._drop_after = drop_after
        self._replies = 0

    @property
    def port(self) -> int:
        return self.server_address[1]

    def url(self, key: str = "k") -> str:
        return f"redis://127.0.0.1:{self.port}/{key}"

    def should_drop(self) -> bool:
        with self.lock:
            self._replies += 1
            if self._drop_after is not None and self._replies >= self._drop_after:
                self._drop_after = None  # only once
                return True
        return False

    def dispatch(self, command):
        if not isinstance(command, RespArray) or not command.items:
            return ErrorReply("ERR expected a command array")
        parts = []
        for item in command.items:
            if not hasattr(item, "value") or not isinstance(item.value, bytes):
                return ErrorReply("ERR command arguments must be bulk strings")
            parts.append(item.value)
        name = parts[0].upper()
        with self.lock:
            self.commands_seen.append(name)
            if name == b"PING":
                return SimpleString("PONG")
            if name == b"PFADD":
                if len(parts) < 2:
                    return ErrorReply("ERR wrong number of arguments for 'pfadd'")
                entry = self.keys.get(parts[1])
                if entry is None:
                    entry = HllSketch(self.params)
                    self.keys[parts[1]] = entry
                if not isinstance(entry, HllSketch):
                    return ErrorReply(WRONGTYPE)
                changed = 0
                for element in parts[2:]:
                    if entry.insert(element):
                        changed = 1
                return changed
            if name == b"PFCOUNT":
                if len(parts) != 2:
                    return ErrorReply("ERR wrong number of arguments for 'pfcount'")
                entry = self.keys.get(parts[1])
                if entry is None:
                    return 0
                if not isinstance(entry, HllSketch):
                    return ErrorReply(WRONGTYPE)
                return entry.estimate()
            if name == b"DEL":
                removed = 0
                for key in parts[1:]:
                    if key in self.keys:
                        del self.keys[key]
                        removed += 1
                return removed
            if name == b"SET":
                if len(parts) != 3:
                    return ErrorReply("ERR wrong number of arguments for 'set'")
                self.keys[parts[1]] = parts[2]
                return SimpleString("OK")
        return ErrorReply(f"ERR unknown command '{parts[0].decode('utf-8', 'replace')}'")


@contextmanager
def running_server(**kwargs):
    server = MiniRedisServer(**kwargs)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
