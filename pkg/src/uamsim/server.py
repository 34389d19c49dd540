"""TCP session server hosting an environment batch behind the wire protocol.

One client at a time drives the batch through handshake / reset / step;
extra connections during a session are answered with Error{busy} and closed.
The serve call returns when the session ends (Close, disconnect, or protocol
violation), making results a pure function of (config, seeds, messages).
"""

import selectors
import socket
from dataclasses import dataclass, field as dc_field

import numpy as np

from .env import EnvConfig, UamEnv, obs_dim
from .errors import ProtocolError
from .protocol import (Close, Error, Handshake, HandshakeAck, Observations,
                       PROTOCOL_VERSION, Reset, Step, Transition, _LEN,
                       MAX_FRAME_BYTES, decode_body, encode)
from .world import World

DEFAULT_PORT = 9000
ACTION_DIM = 3


@dataclass
class ServeConfig:
    world: World
    env_cfg: EnvConfig = dc_field(default_factory=EnvConfig)
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    n_envs: int = 8
    master_seed: int = 0


class _Session:
    """Protocol state machine for one connected client."""

    def __init__(self, cfg: ServeConfig):
        self.cfg = cfg
        self.envs = [UamEnv(cfg.world, cfg.env_cfg, cfg.master_seed ^ i)
                     for i in range(cfg.n_envs)]
        self.shaken = False
        self.did_reset = False

    def handle(self, msg):
        """Returns (reply-or-None, close_session)."""
        if isinstance(msg, Close):
            return None, True
        if not self.shaken:
            if not isinstance(msg, Handshake):
                return Error("bad_state", "expected handshake"), True
            if msg.version != PROTOCOL_VERSION:
                return Error("bad_version",
                             f"server speaks version {PROTOCOL_VERSION}"), True
            self.shaken = True
            return HandshakeAck(obs_dim=obs_dim(self.cfg.env_cfg),
                                action_dim=ACTION_DIM,
                                n_envs=self.cfg.n_envs,
                                dt=self.cfg.env_cfg.dt,
                                max_steps=self.cfg.env_cfg.max_steps), False
        if isinstance(msg, Reset):
            seed = int(msg.seed)
            rows = []
            for i, env in enumerate(self.envs):
                env.reseed(seed ^ i)
                rows.append(env.reset().tolist())
            self.did_reset = True
            return Observations(obs=rows), False
        if isinstance(msg, Step):
            if not self.did_reset:
                return Error("bad_state", "step before first reset"), True
            actions = msg.actions
            if (not isinstance(actions, list) or len(actions) != self.cfg.n_envs
                    or any(not isinstance(row, list) or len(row) != ACTION_DIM
                           for row in actions)):
                return Error("bad_shape",
                             f"actions must be {self.cfg.n_envs} rows of "
                             f"{ACTION_DIM} numbers"), True
            try:
                cmds = [np.asarray(row, dtype=np.float64) for row in actions]
            except (TypeError, ValueError):
                return Error("bad_shape", "actions must be numeric"), True
            obs_rows, rewards, dones, terms = [], [], [], []
            for env, cmd in zip(self.envs, cmds):
                obs, reward, term = env.step(cmd)
                if term.terminal:
                    obs = env.reset()  # row carries the post-reset observation
                obs_rows.append(obs.tolist())
                rewards.append(reward.total)
                dones.append(term.terminal)
                terms.append(term.value)
            return Transition(obs=obs_rows, rewards=rewards, dones=dones,
                              terms=terms), False
        return Error("bad_state",
                     f"message {type(msg).__name__} not valid here"), True


def serve(cfg: ServeConfig, ready=None):
    """Run one client session to completion; `ready(port)` fires after bind."""
    listener = socket.create_server((cfg.host, cfg.port))
    conn = None
    try:
        listener.setblocking(False)
        if ready is not None:
            ready(listener.getsockname()[1])
        sel = selectors.DefaultSelector()
        sel.register(listener, selectors.EVENT_READ)
        session = _Session(cfg)
        buf = b""
        while True:
            for key, _ in sel.select():
                if key.fileobj is listener:
                    client, _addr = listener.accept()
                    if conn is None:
                        conn = client
                        conn.setblocking(True)
                        buf = b""
                        sel.register(conn, selectors.EVENT_READ)
                    else:
                        try:
                            client.sendall(encode(Error("busy", "session active")))
                        except OSError:
                            pass
                        client.close()
                    continue
                try:
                    data = conn.recv(65536)
                except OSError:
                    data = b""
                if not data:
                    return  # disconnect ends the session
                buf += data
                while True:
                    if len(buf) < _LEN.size:
                        break
                    (n,) = _LEN.unpack(buf[:_LEN.size])
                    if n > MAX_FRAME_BYTES:
                        _reply(conn, Error("bad_state", "frame too large"))
                        return
                    if len(buf) < _LEN.size + n:
                        break
                    body = buf[_LEN.size:_LEN.size + n]
                    buf = buf[_LEN.size + n:]
                    try:
                        msg = decode_body(body)
                    except ProtocolError as e:
                        _reply(conn, Error("bad_state", str(e)))
                        return
                    reply, close = session.handle(msg)
                    if reply is not None:
                        _reply(conn, reply)
                    if close:
                        return
    finally:
        if conn is not None:
            conn.close()
        listener.close()


def _reply(conn, msg):
    try:
        conn.sendall(encode(msg))
    except OSError:
        pass
