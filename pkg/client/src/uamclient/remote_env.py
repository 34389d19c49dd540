"""Socket client for the uamsim environment server.

Speaks the server's wire format directly with only the standard library:
each frame is a 4-byte little-endian unsigned length N followed by N bytes
of a JSON object whose `type` field names the message. The handshake
declares all array shapes; every array that later crosses the wire is
validated against it, and the client never sends a message that is invalid
for the current protocol state.
"""

import json
import socket
import struct

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
ACTION_DIM = 3
_LEN = struct.Struct("<I")


class RemoteEnvError(Exception):
    """Base error for client-side failures."""


class ProtocolStateError(RemoteEnvError):
    """A call that would violate the protocol state machine."""


class ServerError(RemoteEnvError):
    """The server answered with an error message."""

    def __init__(self, code, message=""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class ShapeMismatch(RemoteEnvError):
    """A received array does not match the handshake-declared shape."""


def _send(sock, doc):
    data = json.dumps(doc, separators=(",", ":")).encode()
    if len(data) > MAX_FRAME_BYTES:
        raise RemoteEnvError(f"outgoing frame of {len(data)} bytes exceeds the cap")
    sock.sendall(_LEN.pack(len(data)) + data)


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise RemoteEnvError("connection closed by server")
        buf += chunk
    return buf


def _recv(sock):
    (n,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
    if n > MAX_FRAME_BYTES:
        raise RemoteEnvError(f"incoming frame of {n} bytes exceeds the cap")
    try:
        doc = json.loads(_recv_exact(sock, n))
    except json.JSONDecodeError as e:
        raise RemoteEnvError(f"server sent invalid JSON: {e}")
    if not isinstance(doc, dict) or "type" not in doc:
        raise RemoteEnvError("server frame has no type field")
    if doc["type"] == "error":
        raise ServerError(doc.get("code", "unknown"), doc.get("message", ""))
    return doc


def _expect(sock, expected_type):
    doc = _recv(sock)
    if doc["type"] != expected_type:
        raise RemoteEnvError(f"expected {expected_type!r}, got {doc['type']!r}")
    return doc


class RemoteEnv:
    """A batch of remote environments behind one session; see connect()."""

    def __init__(self, sock, obs_dim, action_dim, n_envs, dt, max_steps):
        self._sock = sock
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.n_envs = n_envs
        self.dt = dt
        self.max_steps = max_steps
        self._did_reset = False
        self._closed = False

    def _check_open(self):
        if self._closed:
            raise ProtocolStateError("session is closed")

    def _check_matrix(self, rows, width, name):
        if (not isinstance(rows, list) or len(rows) != self.n_envs
                or any(not isinstance(r, list) or len(r) != width for r in rows)):
            raise ShapeMismatch(
                f"{name} must be {self.n_envs} rows of {width} values")

    def _check_vector(self, values, name):
        if not isinstance(values, list) or len(values) != self.n_envs:
            raise ShapeMismatch(f"{name} must have one entry per environment")

    def reset(self, seed):
        """Reseed and reset every environment; returns the observation rows."""
        self._check_open()
        _send(self._sock, {"type": "reset", "seed": int(seed)})
        doc = _expect(self._sock, "observations")
        self._check_matrix(doc["obs"], self.obs_dim, "obs")
        self._did_reset = True
        return doc["obs"]

    def step(self, actions):
        """Apply one action row per environment.

        Returns (obs, rewards, dones, terms); environments that finished are
        auto-reset server-side and their obs row is the post-reset one.
        """
        self._check_open()
        if not self._did_reset:
            raise ProtocolStateError("step() before the first reset()")
        actions = [[float(v) for v in row] for row in actions]
        if len(actions) != self.n_envs or any(len(r) != self.action_dim
                                              for r in actions):
            raise ShapeMismatch(
                f"actions must be {self.n_envs} rows of {self.action_dim} numbers")
        _send(self._sock, {"type": "step", "actions": actions})
        doc = _expect(self._sock, "transition")
        self._check_matrix(doc["obs"], self.obs_dim, "obs")
        for name in ("rewards", "dones", "terms"):
            self._check_vector(doc[name], name)
        return doc["obs"], doc["rewards"], doc["dones"], doc["terms"]

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            _send(self._sock, {"type": "close"})
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(host="127.0.0.1", port=9000, timeout=10.0) -> RemoteEnv:
    """Dial the server and perform the version-1 handshake."""
    sock = socket.create_connection((host, port), timeout=timeout)
    try:
        _send(sock, {"type": "handshake", "version": PROTOCOL_VERSION})
        ack = _expect(sock, "handshake_ack")
        return RemoteEnv(sock, obs_dim=int(ack["obs_dim"]),
                         action_dim=int(ack["action_dim"]),
                         n_envs=int(ack["n_envs"]), dt=float(ack["dt"]),
                         max_steps=int(ack["max_steps"]))
    except Exception:
        sock.close()
        raise
