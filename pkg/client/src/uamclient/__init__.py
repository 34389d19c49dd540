"""Reference TCP client for the uamsim environment server (stdlib only)."""

__version__ = "0.1.0"

from .demo import demo_random_policy
from .remote_env import (ProtocolStateError, RemoteEnv, RemoteEnvError,
                         ServerError, ShapeMismatch, connect)
