"""Two-layer tanh actor-critic with hand-written backprop.

The actor outputs a 3D Gaussian mean with a state-independent log standard
deviation; the behavior policy optionally mixes in uniform cube noise with
probability ``explore_eps``. Log-densities are always evaluated under the full
mixture so importance ratios stay well-defined downstream.
"""

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ShapeError

HIDDEN = 128
ACTION_DIM = 3
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5
_LOG_2PI = math.log(2.0 * math.pi)
_LOG_CUBE_VOLUME = math.log(8.0)  # uniform density on [-1,1]^3 is 1/8


@dataclass
class PolicyParams:
    W1: np.ndarray       # (128, obs_dim)
    b1: np.ndarray       # (128,)
    W2: np.ndarray       # (128, 128)
    b2: np.ndarray       # (128,)
    W_mu: np.ndarray     # (3, 128)
    b_mu: np.ndarray     # (3,)
    log_std: np.ndarray  # (3,), clamped to [-5, 2]
    W_v: np.ndarray      # (1, 128)
    b_v: np.ndarray      # (1,)

    @property
    def obs_dim(self) -> int:
        return self.W1.shape[1]


PARAM_FIELDS = tuple(f.name for f in fields(PolicyParams))


def init_params(obs_dim: int, seed) -> PolicyParams:
    """Xavier-uniform weights, zero biases, log_std at -0.5."""
    if obs_dim < 1:
        raise ValueError("obs_dim must be >= 1")
    rng = np.random.default_rng(seed)

    def xavier(rows, cols):
        s = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=(rows, cols))

    return PolicyParams(
        W1=xavier(HIDDEN, obs_dim),
        b1=np.zeros(HIDDEN),
        W2=xavier(HIDDEN, HIDDEN),
        b2=np.zeros(HIDDEN),
        W_mu=xavier(ACTION_DIM, HIDDEN),
        b_mu=np.zeros(ACTION_DIM),
        log_std=np.full(ACTION_DIM, LOG_STD_INIT),
        W_v=xavier(1, HIDDEN),
        b_v=np.zeros(1),
    )


def copy_params(params: PolicyParams) -> PolicyParams:
    return PolicyParams(**{n: getattr(params, n).copy() for n in PARAM_FIELDS})


def assign_params(dst: PolicyParams, src: PolicyParams):
    for n in PARAM_FIELDS:
        getattr(dst, n)[...] = getattr(src, n)


def forward(params: PolicyParams, obs):
    """Single-observation pass; returns (mu, log_std, value)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (params.obs_dim,):
        raise ShapeError(f"observation shape {obs.shape} != ({params.obs_dim},)")
    h1 = np.tanh(params.W1 @ obs + params.b1)
    h2 = np.tanh(params.W2 @ h1 + params.b2)
    mu = params.W_mu @ h2 + params.b_mu
    value = float(params.W_v[0] @ h2 + params.b_v[0])
    return mu, params.log_std.copy(), value


@dataclass
class ForwardCache:
    """Batched activations kept for the backward pass."""

    obs: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    mu: np.ndarray
    value: np.ndarray


def forward_batch(params: PolicyParams, obs: np.ndarray) -> ForwardCache:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise ShapeError(f"batch shape {obs.shape} != (M, {params.obs_dim})")
    h1 = np.tanh(obs @ params.W1.T + params.b1)
    h2 = np.tanh(h1 @ params.W2.T + params.b2)
    mu = h2 @ params.W_mu.T + params.b_mu
    value = h2 @ params.W_v[0] + params.b_v[0]
    return ForwardCache(obs=obs, h1=h1, h2=h2, mu=mu, value=value)


def gaussian_log_prob(actions, mu, log_std):
    """Diagonal-Gaussian log density per row; actions/mu (M, 3), log_std (3,)."""
    z = (actions - mu) / np.exp(log_std)
    return -0.5 * (z * z).sum(axis=1) - log_std.sum() - 0.5 * ACTION_DIM * _LOG_2PI


def mixture_log_prob(actions, mu, log_std, explore_eps):
    """Log density of (1-eps)*Gaussian + eps*Uniform([-1,1]^3)."""
    log_g = gaussian_log_prob(actions, mu, log_std)
    if explore_eps <= 0.0:
        return log_g
    in_cube = (np.abs(actions) <= 1.0).all(axis=1)
    log_u = np.where(in_cube, -_LOG_CUBE_VOLUME, -np.inf)
    if explore_eps >= 1.0:
        return log_u
    return np.logaddexp(math.log1p(-explore_eps) + log_g,
                        math.log(explore_eps) + log_u)


def gaussian_entropy(log_std) -> float:
    return float(0.5 * np.sum(1.0 + _LOG_2PI + 2.0 * np.asarray(log_std)))


def sample_action(mu, log_std, explore_eps, rng):
    """Draw one action from the behavior mixture; returns (action, log_prob).

    Samples are not clamped; the environment clamps commands itself.
    """
    if rng.random() < explore_eps:
        action = rng.uniform(-1.0, 1.0, size=ACTION_DIM)
    else:
        action = mu + np.exp(log_std) * rng.standard_normal(ACTION_DIM)
    logp = mixture_log_prob(action[None, :], mu[None, :], log_std, explore_eps)
    return action, float(logp[0])


@dataclass
class MinibatchStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float
    total_loss: float


def loss_and_grads(params: PolicyParams, obs, actions, old_log_probs,
                   advantages, returns, hyper):
    """Clipped-surrogate loss on one minibatch and its parameter gradients.

    total = policy + value_coef*value - entropy_coef*entropy(Gaussian head).
    Returns (MinibatchStats, grads) with one gradient array per PARAM_FIELDS.
    """
    cache = forward_batch(params, obs)
    m = cache.obs.shape[0]
    eps = hyper.explore_eps
    sigma = np.exp(params.log_std)
    z = (actions - cache.mu) / sigma

    log_g = -0.5 * (z * z).sum(axis=1) - params.log_std.sum() - 0.5 * ACTION_DIM * _LOG_2PI
    if eps <= 0.0:
        log_p = log_g
        gauss_w = np.ones(m)
    elif eps >= 1.0:
        in_cube = (np.abs(actions) <= 1.0).all(axis=1)
        log_p = np.where(in_cube, -_LOG_CUBE_VOLUME, -np.inf)
        gauss_w = np.zeros(m)
    else:
        in_cube = (np.abs(actions) <= 1.0).all(axis=1)
        log_u = np.where(in_cube, -_LOG_CUBE_VOLUME, -np.inf)
        log_p = np.logaddexp(math.log1p(-eps) + log_g, math.log(eps) + log_u)
        gauss_w = np.exp(math.log1p(-eps) + log_g - log_p)

    ratio = np.exp(log_p - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * advantages
    policy_loss = -float(np.minimum(unclipped, clipped).mean())
    v_err = cache.value - returns
    value_loss = float((v_err * v_err).mean())
    entropy = gaussian_entropy(params.log_std)
    total = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * entropy
    clip_frac = float((np.abs(ratio - 1.0) > hyper.clip_eps).mean())

    # Backward. The surrogate gradient flows only through the unclipped branch.
    take = unclipped <= clipped
    dlogp = -(advantages * ratio * take) / m
    dgauss = dlogp * gauss_w
    dmu = dgauss[:, None] * (z / sigma)
    dlog_std = (dgauss[:, None] * (z * z - 1.0)).sum(axis=0) - hyper.entropy_coef
    dvalue = (2.0 * hyper.value_coef / m) * v_err

    grads = {
        "W_mu": dmu.T @ cache.h2,
        "b_mu": dmu.sum(axis=0),
        "W_v": (dvalue[:, None] * cache.h2).sum(axis=0, keepdims=True),
        "b_v": np.array([dvalue.sum()]),
        "log_std": dlog_std,
    }
    dh2 = dmu @ params.W_mu + dvalue[:, None] * params.W_v
    dz2 = dh2 * (1.0 - cache.h2 * cache.h2)
    grads["W2"] = dz2.T @ cache.h1
    grads["b2"] = dz2.sum(axis=0)
    dh1 = dz2 @ params.W2
    dz1 = dh1 * (1.0 - cache.h1 * cache.h1)
    grads["W1"] = dz1.T @ cache.obs
    grads["b1"] = dz1.sum(axis=0)

    stats = MinibatchStats(policy_loss=policy_loss, value_loss=value_loss,
                           entropy=entropy, clip_frac=clip_frac, total_loss=total)
    return stats, grads


def global_grad_norm(grads) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def clip_grad_norm_(grads, max_norm) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Standard bias-corrected Adam over PolicyParams arrays, in place."""

    def __init__(self, params: PolicyParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(getattr(params, n)) for n in PARAM_FIELDS}
        self.v = {n: np.zeros_like(getattr(params, n)) for n in PARAM_FIELDS}

    def step(self, params: PolicyParams, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for n in PARAM_FIELDS:
            g = grads[n]
            m = self.m[n]
            v = self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            getattr(params, n)[...] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def snapshot(self):
        return (self.t,
                {n: a.copy() for n, a in self.m.items()},
                {n: a.copy() for n, a in self.v.items()})

    def restore(self, snap):
        self.t, m, v = snap
        for n in PARAM_FIELDS:
            self.m[n][...] = m[n]
            self.v[n][...] = v[n]
