"""Training loop, checkpointing, metrics emission, and policy evaluation."""

import json
import math
import os
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .env import EnvConfig, Termination, UamEnv, obs_dim
from .errors import NumericalDivergence, ParseError
from .policy import Adam, PARAM_FIELDS, PolicyParams, forward, init_params, sample_action
from .ppo import PpoHyper, ppo_update, rollout
from .trajectory import TrajectoryRecord
from .world import World

METRICS_HEADER = ("update,env_steps,mean_ep_reward,std_ep_reward,goal_rate,"
                  "collision_rate,policy_loss,value_loss,entropy,clip_frac")
EPISODE_WINDOW = 100  # trailing completed-episode window behind the metrics


@dataclass
class TrainMetrics:
    update: int
    env_steps: int
    mean_ep_reward: float
    std_ep_reward: float
    goal_rate: float
    collision_rate: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float

    def csv_line(self) -> str:
        return (f"{self.update},{self.env_steps},"
                f"{self.mean_ep_reward!r},{self.std_ep_reward!r},"
                f"{self.goal_rate!r},{self.collision_rate!r},"
                f"{self.policy_loss!r},{self.value_loss!r},"
                f"{self.entropy!r},{self.clip_frac!r}")


@dataclass
class TrainingArtifacts:
    params: PolicyParams
    metrics: list
    eval_trajectory: list
    metrics_path: str
    checkpoint_path: str


def save_checkpoint(path, params: PolicyParams, hyper: PpoHyper, seed, env_steps):
    doc = {
        "obs_dim": params.obs_dim,
        "hyper": asdict(hyper),
        "seed": seed,
        "env_steps": env_steps,
        "params": {n: getattr(params, n).tolist() for n in PARAM_FIELDS},
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    """Returns (params, hyper, seed, env_steps). Raises ParseError on bad files."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid checkpoint JSON: {e.msg}", line=e.lineno)
    try:
        params = PolicyParams(**{n: np.asarray(doc["params"][n], dtype=np.float64)
                                 for n in PARAM_FIELDS})
        hyper = PpoHyper(**doc["hyper"])
        seed = int(doc["seed"])
        env_steps = int(doc["env_steps"])
        declared = int(doc["obs_dim"])
    except (KeyError, TypeError) as e:
        raise ParseError(f"bad checkpoint structure: {e}")
    if params.obs_dim != declared:
        raise ParseError(f"checkpoint declares obs_dim {declared} but W1 has "
                         f"{params.obs_dim} columns")
    return params, hyper, seed, env_steps


def _window_stats(window) -> tuple:
    if not window:
        return 0.0, 0.0, 0.0, 0.0
    rewards = np.array([r for r, _ in window])
    goal = sum(1 for _, t in window if t is Termination.GOAL_REACHED)
    coll = sum(1 for _, t in window if t is Termination.COLLISION)
    return (float(rewards.mean()), float(rewards.std()),
            goal / len(window), coll / len(window))


def train(world: World, env_cfg: EnvConfig, hyper: PpoHyper, seed: int,
          out_dir, checkpoint_every=50, n_workers=1, log=None) -> TrainingArtifacts:
    """Rollout -> GAE -> clipped update until total_env_steps is reached.

    Writes metrics.csv, periodic checkpoints, checkpoint_final.json, and a
    deterministic-policy evaluation trajectory into out_dir. Fully
    deterministic in (world, env_cfg, hyper, seed); on NumericalDivergence the
    partial artifacts are kept and the error re-raised.
    """
    os.makedirs(out_dir, exist_ok=True)
    d = obs_dim(env_cfg)
    params = init_params(d, seed)
    adam = Adam(params, lr=hyper.lr, beta1=hyper.adam_beta1,
                beta2=hyper.adam_beta2, eps=hyper.adam_eps)
    envs = [UamEnv(world, env_cfg, seed ^ i) for i in range(hyper.n_envs)]
    rollout_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    update_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))

    steps_per_update = hyper.n_envs * hyper.horizon
    n_updates = math.ceil(hyper.total_env_steps / steps_per_update)
    window = deque(maxlen=EPISODE_WINDOW)
    metrics = []
    metrics_path = os.path.join(out_dir, "metrics.csv")
    final_path = os.path.join(out_dir, "checkpoint_final.json")
    diverged = None

    with open(metrics_path, "w") as mf:
        mf.write(METRICS_HEADER + "\n")
        for update in range(1, n_updates + 1):
            buffer = rollout(params, envs, hyper.horizon, hyper, rollout_rng,
                             n_workers=n_workers)
            buffer.finalize(hyper.gamma, hyper.lam)
            try:
                stats = ppo_update(params, adam, buffer, hyper, update_rng)
            except NumericalDivergence as e:
                diverged = e
                if log:
                    log(f"update {update}: diverged ({e}); halting")
                break
            window.extend(buffer.episodes)
            mean_r, std_r, goal_rate, coll_rate = _window_stats(window)
            row = TrainMetrics(update=update, env_steps=update * steps_per_update,
                               mean_ep_reward=mean_r, std_ep_reward=std_r,
                               goal_rate=goal_rate, collision_rate=coll_rate,
                               policy_loss=stats.policy_loss,
                               value_loss=stats.value_loss,
                               entropy=stats.entropy, clip_frac=stats.clip_frac)
            metrics.append(row)
            mf.write(row.csv_line() + "\n")
            if log and (update % 20 == 0 or update == n_updates):
                log(f"update {update}/{n_updates} steps={row.env_steps} "
                    f"reward={mean_r:.2f} goal={goal_rate:.2f} coll={coll_rate:.2f}")
            if checkpoint_every and update % checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"checkpoint_{update:05d}.json"),
                                params, hyper, seed, row.env_steps)

    env_steps = metrics[-1].env_steps if metrics else 0
    save_checkpoint(final_path, params, hyper, seed, env_steps)
    if diverged is not None:
        raise diverged

    eval_env = UamEnv(world, env_cfg, np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    records, _, _ = run_policy_episode(params, eval_env, deterministic=True)
    return TrainingArtifacts(params=params, metrics=metrics,
                             eval_trajectory=records,
                             metrics_path=metrics_path,
                             checkpoint_path=final_path)


def run_policy_episode(params: PolicyParams, env: UamEnv, deterministic=True,
                       explore_eps=0.0, action_rng=None):
    """Roll one episode to termination; returns (records, total_reward, term).

    Record k holds the state at t = k*dt, the command issued from it, and the
    reward received on arriving there; the final record carries the terminal
    kind and a zero command.
    """
    obs = env.reset()
    dt = env.cfg.dt
    records = []
    arrived_reward = 0.0
    total = 0.0
    term = Termination.RUNNING
    while term is Termination.RUNNING:
        mu, log_std, _ = forward(params, obs)
        if deterministic:
            action = mu
        else:
            action, _ = sample_action(mu, log_std, explore_eps, action_rng)
        state = env.state
        records.append(TrajectoryRecord(
            step=state.step_index, t=state.step_index * dt,
            position=state.position.copy(), velocity=state.velocity.copy(),
            angular_velocity=np.array([0.0, 0.0, state.yaw_rate]),
            action=np.asarray(action, dtype=np.float64).copy(),
            reward=arrived_reward, term=Termination.RUNNING.value))
        obs, reward, term = env.step(action)
        arrived_reward = reward.total
        total += reward.total
    state = env.state
    records.append(TrajectoryRecord(
        step=state.step_index, t=state.step_index * dt,
        position=state.position.copy(), velocity=state.velocity.copy(),
        angular_velocity=np.array([0.0, 0.0, state.yaw_rate]),
        action=np.zeros(3), reward=arrived_reward, term=term.value))
    return records, total, term


def evaluate_policy(params: PolicyParams, world: World, env_cfg: EnvConfig,
                    episodes: int, seed: int, deterministic=True, explore_eps=0.0):
    """Run independent evaluation episodes; returns (summary dict, trajectories)."""
    results = []
    trajectories = []
    for ep in range(episodes):
        env = UamEnv(world, env_cfg, np.random.SeedSequence([seed, ep]))
        rng = None
        if not deterministic:
            rng = np.random.default_rng(np.random.SeedSequence([seed, ep, 1]))
        records, total, term = run_policy_episode(
            params, env, deterministic=deterministic,
            explore_eps=explore_eps, action_rng=rng)
        results.append((total, term))
        trajectories.append(records)
    summary = {"episodes": episodes}
    if episodes:
        rewards = np.array([r for r, _ in results])
        summary.update(
            goal_rate=sum(1 for _, t in results if t is Termination.GOAL_REACHED) / episodes,
            collision_rate=sum(1 for _, t in results if t is Termination.COLLISION) / episodes,
            timeout_rate=sum(1 for _, t in results if t is Termination.TIMEOUT) / episodes,
            mean_reward=float(rewards.mean()),
        )
    return summary, trajectories
