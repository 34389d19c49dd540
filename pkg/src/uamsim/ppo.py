"""PPO core: hyperparameters, GAE, vectorized rollouts, and the clipped update."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import observe
from .errors import NumericalDivergence, ShapeError
from .policy import (ACTION_DIM, Adam, LOG_STD_MAX, LOG_STD_MIN, PolicyParams,
                     assign_params, clip_grad_norm_, copy_params, forward,
                     loss_and_grads, sample_action)

ADV_STD_FLOOR = 1e-8


@dataclass
class PpoHyper:
    clip_eps: float = 0.2
    explore_eps: float = 0.0   # uniform-mixture exploration probability
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 3e-4
    n_epochs: int = 4
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    horizon: int = 128
    n_envs: int = 8
    total_env_steps: int = 409_600
    max_grad_norm: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip_eps must be in (0, 1)")
        if not (0.0 <= self.explore_eps <= 1.0):
            raise ValueError("explore_eps must be in [0, 1]")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lam must be in [0, 1]")
        if min(self.horizon, self.n_envs, self.minibatch_size) < 1:
            raise ValueError("horizon, n_envs, minibatch_size must be >= 1")


def compute_gae(rewards, values, dones, bootstrap_values, gamma, lam):
    """GAE over (n_envs, horizon) arrays; returns (advantages, returns).

    delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t with V_T = bootstrap,
    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}, returns = A + V.
    """
    rewards = np.atleast_2d(np.asarray(rewards, dtype=np.float64))
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    dones = np.atleast_2d(np.asarray(dones, dtype=bool))
    bootstrap = np.atleast_1d(np.asarray(bootstrap_values, dtype=np.float64))
    if not (rewards.shape == values.shape == dones.shape):
        raise ShapeError("rewards, values, dones must share one shape")
    if bootstrap.shape != (rewards.shape[0],):
        raise ShapeError("bootstrap_values must have one entry per env")

    n_envs, horizon = rewards.shape
    advantages = np.zeros_like(rewards)
    next_adv = np.zeros(n_envs)
    next_value = bootstrap
    for t in range(horizon - 1, -1, -1):
        mask = 1.0 - dones[:, t]
        delta = rewards[:, t] + gamma * next_value * mask - values[:, t]
        next_adv = delta + gamma * lam * mask * next_adv
        advantages[:, t] = next_adv
        next_value = values[:, t]
    return advantages, advantages + values


@dataclass
class RolloutBuffer:
    """One update's worth of transitions across all parallel environments."""

    observations: np.ndarray    # (n_envs, horizon, obs_dim)
    actions: np.ndarray         # (n_envs, horizon, 3)
    log_probs: np.ndarray       # (n_envs, horizon), behavior mixture densities
    rewards: np.ndarray         # (n_envs, horizon)
    dones: np.ndarray           # (n_envs, horizon) bool
    values: np.ndarray          # (n_envs, horizon)
    bootstrap_values: np.ndarray  # (n_envs,)
    episodes: list = field(default_factory=list)  # (return, Termination) completed here
    advantages: np.ndarray = None
    returns: np.ndarray = None

    @property
    def n_envs(self) -> int:
        return self.rewards.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    def finalize(self, gamma, lam):
        """Compute GAE and normalize advantages to mean 0 / std 1 buffer-wide."""
        adv, ret = compute_gae(self.rewards, self.values, self.dones,
                               self.bootstrap_values, gamma, lam)
        std = float(adv.std())
        self.advantages = (adv - adv.mean()) / max(std, ADV_STD_FLOOR)
        self.returns = ret
        return self


@dataclass
class _Row:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    bootstrap: float
    episodes: list


def _rollout_row(params, env, horizon, hyper, action_rng) -> _Row:
    if env.state is None:
        obs = env.reset()
    else:
        obs = env.last_obs
    d = env.obs_dim
    obs_buf = np.empty((horizon, d))
    actions = np.empty((horizon, ACTION_DIM))
    log_probs = np.empty(horizon)
    rewards = np.empty(horizon)
    dones = np.zeros(horizon, dtype=bool)
    values = np.empty(horizon)
    episodes = []
    for t in range(horizon):
        mu, log_std, value = forward(params, obs)
        action, logp = sample_action(mu, log_std, hyper.explore_eps, action_rng)
        next_obs, reward, term = env.step(action)
        obs_buf[t] = obs
        actions[t] = action
        log_probs[t] = logp
        rewards[t] = reward.total
        values[t] = value
        if term.terminal:
            dones[t] = True
            episodes.append((env.episode_return, term))
            next_obs = env.reset()
        obs = next_obs
    _, _, bootstrap = forward(params, obs)
    return _Row(obs_buf, actions, log_probs, rewards, dones, values,
                bootstrap, episodes)


def rollout(params, envs, horizon, hyper, rng, n_workers=1) -> RolloutBuffer:
    """Step every environment for `horizon` steps, auto-resetting on done.

    Each environment row gets its own action stream spawned from `rng`, so the
    result is bitwise identical whether rows run sequentially or on threads.
    """
    if not envs:
        raise ValueError("need at least one environment")
    n_envs = len(envs)
    action_rngs = rng.spawn(n_envs)

    def run(i):
        return _rollout_row(params, envs[i], horizon, hyper, action_rngs[i])

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=min(n_workers, n_envs)) as pool:
            rows = list(pool.map(run, range(n_envs)))
    else:
        rows = [run(i) for i in range(n_envs)]

    episodes = []
    for row in rows:
        episodes.extend(row.episodes)
    return RolloutBuffer(
        observations=np.stack([r.obs for r in rows]),
        actions=np.stack([r.actions for r in rows]),
        log_probs=np.stack([r.log_probs for r in rows]),
        rewards=np.stack([r.rewards for r in rows]),
        dones=np.stack([r.dones for r in rows]),
        values=np.stack([r.values for r in rows]),
        bootstrap_values=np.array([r.bootstrap for r in rows]),
        episodes=episodes,
    )


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float
    clip_frac_first: float  # first minibatch of the first epoch
    n_minibatches: int


def ppo_update(params: PolicyParams, adam: Adam, buffer: RolloutBuffer,
               hyper: PpoHyper, rng) -> UpdateStats:
    """Run n_epochs of shuffled minibatch updates in place on params.

    A non-finite loss rolls params and optimizer state back to their entry
    values and raises NumericalDivergence.
    """
    if buffer.advantages is None:
        raise ValueError("buffer must be finalized before the update")
    d = buffer.observations.shape[-1]
    obs = buffer.observations.reshape(-1, d)
    actions = buffer.actions.reshape(-1, ACTION_DIM)
    old_log_probs = buffer.log_probs.reshape(-1)
    advantages = buffer.advantages.reshape(-1)
    returns = buffer.returns.reshape(-1)
    n = obs.shape[0]

    backup_params = copy_params(params)
    backup_adam = adam.snapshot()

    sums = np.zeros(4)  # policy, value, entropy, clip_frac
    clip_frac_first = None
    count = 0
    for _ in range(hyper.n_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, hyper.minibatch_size):
            idx = perm[lo:lo + hyper.minibatch_size]
            stats, grads = loss_and_grads(params, obs[idx], actions[idx],
                                          old_log_probs[idx], advantages[idx],
                                          returns[idx], hyper)
            if not math.isfinite(stats.total_loss):
                assign_params(params, backup_params)
                adam.restore(backup_adam)
                raise NumericalDivergence(
                    f"non-finite loss in minibatch {count}: {stats.total_loss}")
            clip_grad_norm_(grads, hyper.max_grad_norm)
            adam.step(params, grads)
            np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX, out=params.log_std)
            if clip_frac_first is None:
                clip_frac_first = stats.clip_frac
            sums += (stats.policy_loss, stats.value_loss, stats.entropy,
                     stats.clip_frac)
            count += 1

    means = sums / count
    return UpdateStats(policy_loss=float(means[0]), value_loss=float(means[1]),
                       entropy=float(means[2]), clip_frac=float(means[3]),
                       clip_frac_first=float(clip_frac_first), n_minibatches=count)
