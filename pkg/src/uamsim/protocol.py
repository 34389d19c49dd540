"""Length-prefixed JSON wire protocol for driving environment batches over TCP.

A frame is a 4-byte little-endian unsigned length N followed by N bytes of a
JSON object whose `type` field names the message; remaining fields are the
message payload. Frames above 16 MiB are rejected.
"""

import json
import struct
from dataclasses import asdict, dataclass, field, fields

from .errors import FrameTooLarge, ProtocolError

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
_LEN = struct.Struct("<I")


@dataclass
class Handshake:
    version: int = PROTOCOL_VERSION


@dataclass
class HandshakeAck:
    obs_dim: int
    action_dim: int
    n_envs: int
    dt: float
    max_steps: int


@dataclass
class Reset:
    seed: int


@dataclass
class Observations:
    obs: list  # n_envs x obs_dim


@dataclass
class Step:
    actions: list  # n_envs x 3


@dataclass
class Transition:
    obs: list       # n_envs x obs_dim (post-reset rows where done)
    rewards: list   # n_envs
    dones: list     # n_envs bools
    terms: list     # n_envs termination kind strings


@dataclass
class Close:
    pass


@dataclass
class Error:
    code: str
    message: str = ""


_MESSAGE_TYPES = (Handshake, HandshakeAck, Reset, Observations, Step,
                  Transition, Close, Error)
_TAGS = {Handshake: "handshake", HandshakeAck: "handshake_ack", Reset: "reset",
         Observations: "observations", Step: "step", Transition: "transition",
         Close: "close", Error: "error"}
_BY_TAG = {tag: cls for cls, tag in _TAGS.items()}
_FIELDS = {cls: tuple(f.name for f in fields(cls)) for cls in _MESSAGE_TYPES}


def encode(msg) -> bytes:
    """Serialize a message into a full frame (length prefix included)."""
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise ProtocolError(f"not a protocol message: {type(msg).__name__}")
    body = {"type": tag, **asdict(msg)}
    data = json.dumps(body, separators=(",", ":")).encode()
    if len(data) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame body of {len(data)} bytes exceeds the cap")
    return _LEN.pack(len(data)) + data


def decode(frame: bytes):
    """Parse a full frame back into its message; inverse of encode."""
    if len(frame) < _LEN.size:
        raise ProtocolError("frame shorter than its length prefix")
    (n,) = _LEN.unpack(frame[:_LEN.size])
    if n > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared frame length {n} exceeds the cap")
    body = frame[_LEN.size:]
    if len(body) != n:
        raise ProtocolError(f"frame declares {n} bytes but carries {len(body)}")
    return decode_body(body)


def decode_body(body: bytes):
    try:
        doc = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"invalid JSON frame: {e}")
    if not isinstance(doc, dict) or "type" not in doc:
        raise ProtocolError("frame has no type field")
    tag = doc.pop("type")
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise ProtocolError(f"unknown message type {tag!r}")
    if set(doc) != set(_FIELDS[cls]) and not set(doc) <= set(_FIELDS[cls]):
        extra = set(doc) - set(_FIELDS[cls])
        raise ProtocolError(f"unexpected fields for {tag!r}: {sorted(extra)}")
    try:
        return cls(**doc)
    except TypeError as e:
        raise ProtocolError(f"bad fields for {tag!r}: {e}")


def read_exact(sock, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ProtocolError("connection closed mid-frame")
            return b""
        buf += chunk
    return buf


def read_message(sock):
    """Blocking read of one message; None on clean EOF between frames."""
    prefix = read_exact(sock, _LEN.size)
    if not prefix:
        return None
    (n,) = _LEN.unpack(prefix)
    if n > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared frame length {n} exceeds the cap")
    return decode_body(read_exact(sock, n))


def write_message(sock, msg):
    sock.sendall(encode(msg))
