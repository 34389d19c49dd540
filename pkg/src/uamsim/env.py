"""Kinematic flight environment: dynamics, observations, rewards, termination.

The vehicle is a point mass with linear drag driven by a normalized 3D
acceleration command. Yaw tracks the horizontal velocity direction through a
first-order lag and is reported back as the z angular rate. One observation
vector is ``13 + 4*k_nearest`` entries long:

    [0:3]   position / pos_scale
    [3:6]   goal position / pos_scale
    [6:9]   velocity / vel_scale
    [9:12]  angular velocity (only slot 11 carries the yaw rate)
    [12]    altitude / alt_scale
    [13:]   k_nearest building records, each (dx, dy, dz, half_extent),
            offsets and extents divided by pos_scale, zero-padded.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import GenerationFailed
from .geometry import point_in_box, wrap_angle
from .world import PLACEMENT_ATTEMPTS, World, point_in_any_building


class Termination(Enum):
    RUNNING = "running"
    GOAL_REACHED = "goal_reached"
    COLLISION = "collision"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Termination.RUNNING


TERMINATION_KINDS = tuple(t.value for t in Termination)


@dataclass
class EnvConfig:
    """Dynamics, episode, reward, and observation-scaling constants."""

    dt: float = 0.1            # s
    a_max: float = 5.0         # m/s^2
    drag: float = 0.3          # 1/s, requires drag*dt < 1
    yaw_lag: float = 2.0       # 1/s
    max_steps: int = 500
    k_nearest: int = 5
    r_goal: float = 10.0
    k_progress: float = 1.0    # reward per meter of goal approach
    d_safe: float = 5.0        # m, proximity penalty onset
    k_proximity: float = 0.5
    r_collision: float = -10.0
    r_out: float = -10.0
    pos_scale: float = 100.0
    vel_scale: float = 15.0
    alt_scale: float = 50.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.a_max <= 0:
            raise ValueError("a_max must be > 0")
        if self.drag * self.dt >= 1:
            raise ValueError("drag*dt must be < 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.d_safe <= 0:
            raise ValueError("d_safe must be > 0")


def obs_dim(cfg: EnvConfig) -> int:
    return 13 + 4 * cfg.k_nearest


@dataclass
class UamState:
    """Kinematic vehicle state; yaw wrapped to [-pi, pi)."""

    position: np.ndarray
    velocity: np.ndarray
    yaw: float
    yaw_rate: float
    step_index: int


@dataclass
class RewardBreakdown:
    goal_arrival: float
    progress: float
    proximity: float
    collision: float
    total: float


def make_reward(goal_arrival, progress, proximity, collision) -> RewardBreakdown:
    # Fixed summation order so the total is bit-reproducible.
    total = goal_arrival + progress + proximity + collision
    return RewardBreakdown(goal_arrival, progress, proximity, collision, total)


def clearance(p: np.ndarray, world: World) -> float:
    """Distance from p to the nearest building surface; +inf with no buildings."""
    centers, halves = world.building_arrays()
    if not len(centers):
        return math.inf
    d = np.maximum(np.abs(p - centers) - halves, 0.0)
    return float(np.sqrt((d * d).sum(axis=1)).min())


def check_termination(state: UamState, world: World, cfg: EnvConfig) -> Termination:
    """Priority: goal > collision > out-of-bounds > timeout."""
    if np.linalg.norm(state.position - world.goal_center) <= world.goal_radius:
        return Termination.GOAL_REACHED
    if point_in_any_building(state.position, world):
        return Termination.COLLISION
    if not point_in_box(state.position, world.bounds):
        return Termination.OUT_OF_BOUNDS
    if state.step_index >= cfg.max_steps:
        return Termination.TIMEOUT
    return Termination.RUNNING


def compute_reward(prev: UamState, next_state: UamState, world: World,
                   cfg: EnvConfig, term: Termination) -> RewardBreakdown:
    """Arrival bonus + progress shaping - proximity penalty - crash penalty."""
    d_prev = float(np.linalg.norm(prev.position - world.goal_center))
    d_next = float(np.linalg.norm(next_state.position - world.goal_center))
    goal_arrival = cfg.r_goal if term is Termination.GOAL_REACHED else 0.0
    progress = -cfg.k_progress * (d_next - d_prev)
    c = clearance(next_state.position, world)
    penalty = max(0.0, 1.0 - c / cfg.d_safe) if math.isfinite(c) else 0.0
    proximity = -cfg.k_proximity * penalty if penalty > 0.0 else 0.0
    if term is Termination.COLLISION:
        collision = cfg.r_collision
    elif term is Termination.OUT_OF_BOUNDS:
        collision = cfg.r_out
    else:
        collision = 0.0
    return make_reward(goal_arrival, progress, proximity, collision)


def observe(state: UamState, world: World, cfg: EnvConfig) -> np.ndarray:
    k = cfg.k_nearest
    obs = np.zeros(13 + 4 * k)
    obs[0:3] = state.position / cfg.pos_scale
    obs[3:6] = world.goal_center / cfg.pos_scale
    obs[6:9] = state.velocity / cfg.vel_scale
    obs[11] = state.yaw_rate
    obs[12] = state.position[2] / cfg.alt_scale
    centers, halves = world.building_arrays()
    if len(centers) and k > 0:
        dists = np.linalg.norm(centers - state.position, axis=1)
        order = np.argsort(dists, kind="stable")[:k]
        for j, bi in enumerate(order):
            at = 13 + 4 * j
            obs[at:at + 3] = (centers[bi] - state.position) / cfg.pos_scale
            obs[at + 3] = max(halves[bi, 0], halves[bi, 1]) / cfg.pos_scale
    return obs


def step(state: UamState, action, world: World, cfg: EnvConfig):
    """Advance one timestep; returns (state', observation, reward, termination).

    Semi-implicit Euler with drag; the command is clamped to [-1, 1] and scaled
    by a_max. The ground plane is impenetrable (z clamped at 0, not a crash).
    """
    cmd = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    accel = cfg.a_max * cmd
    vel = (state.velocity + accel * cfg.dt) * (1.0 - cfg.drag * cfg.dt)
    pos = state.position + vel * cfg.dt
    if pos[2] < 0.0:
        pos[2] = 0.0

    if math.hypot(vel[0], vel[1]) > 1e-6:
        target_yaw = math.atan2(vel[1], vel[0])
    else:
        target_yaw = state.yaw
    delta = cfg.yaw_lag * cfg.dt * wrap_angle(target_yaw - state.yaw)
    yaw_rate = wrap_angle(delta) / cfg.dt
    yaw = wrap_angle(state.yaw + delta)

    new = UamState(position=pos, velocity=vel, yaw=yaw, yaw_rate=yaw_rate,
                   step_index=state.step_index + 1)
    term = check_termination(new, world, cfg)
    reward = compute_reward(state, new, world, cfg, term)
    return new, observe(new, world, cfg), reward, term


def _sample_spawn(world: World, rng) -> np.ndarray:
    """Uniform sample in the spawn sphere, resampled until outside buildings."""
    for _ in range(PLACEMENT_ATTEMPTS):
        v = rng.standard_normal(3)
        r = world.spawn_radius * rng.random() ** (1.0 / 3.0)
        n = float(np.linalg.norm(v))
        p = world.spawn_center + (r / n) * v if n > 0 else world.spawn_center.copy()
        if not point_in_any_building(p, world):
            return p
    raise GenerationFailed(
        f"no building-free spawn found in {PLACEMENT_ATTEMPTS} attempts")


def _spawn_state(world: World, rng) -> UamState:
    return UamState(position=_sample_spawn(world, rng),
                    velocity=np.zeros(3), yaw=0.0, yaw_rate=0.0, step_index=0)


def reset(world: World, cfg: EnvConfig, seed):
    """Fresh episode start, deterministic in (world, cfg, seed)."""
    rng = np.random.default_rng(seed)
    state = _spawn_state(world, rng)
    return state, observe(state, world, cfg)


class UamEnv:
    """One environment instance owning its state and PRNG stream.

    Instances are independent; each may live on its own worker thread. The
    embedded stream advances on every reset, so auto-resetting batches stay
    deterministic in the construction seed.
    """

    def __init__(self, world: World, cfg: EnvConfig, seed):
        self.world = world
        self.cfg = cfg
        self._rng = np.random.default_rng(seed)
        self.state = None
        self.last_obs = None
        self.episode_return = 0.0
        self.episode_steps = 0

    @property
    def obs_dim(self) -> int:
        return obs_dim(self.cfg)

    def reseed(self, seed):
        self._rng = np.random.default_rng(seed)
        self.state = None
        self.last_obs = None

    def reset(self) -> np.ndarray:
        self.state = _spawn_state(self.world, self._rng)
        self.last_obs = observe(self.state, self.world, self.cfg)
        self.episode_return = 0.0
        self.episode_steps = 0
        return self.last_obs

    def step(self, action):
        if self.state is None:
            raise RuntimeError("step() before reset()")
        self.state, obs, reward, term = step(self.state, action, self.world, self.cfg)
        self.last_obs = obs
        self.episode_return += reward.total
        self.episode_steps += 1
        return obs, reward, term
