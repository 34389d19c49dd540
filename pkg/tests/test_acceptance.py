"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line with the measured numbers. Run with `pytest -v -s`.

The convergence runs train three seeds on the reference city (10 buildings,
100 x 100 x 60 m bounds, 5 m goal radius) for ~400 updates / ~410k env steps
each, so this module takes a few minutes of CPU time.
"""

import math
import re
import socket
import threading
import time

import numpy as np
import pytest

from uamsim.env import (EnvConfig, UamEnv, UamState, clearance, observe,
                        obs_dim)
from uamsim.policy import (ACTION_DIM, Adam, PARAM_FIELDS, forward,
                           init_params, loss_and_grads, mixture_log_prob)
from uamsim.ppo import PpoHyper, compute_gae, ppo_update, rollout
from uamsim.protocol import (Close, Handshake, Observations, Reset, Step,
                             Transition, decode, encode, read_message,
                             write_message)
from uamsim.server import ServeConfig, serve
from uamsim.train import evaluate_policy, train
from uamsim.trajectory import TrajectoryRecord
from uamsim.viz import render_topdown, snapshot_indices
from uamsim.world import GenConfig, generate_world, point_in_any_building

WORLD_SEED = 7
TRAIN_SEEDS = (1, 2, 3)
N_UPDATES = 400
EVAL_EPISODES = 50
RUNTIME_LIMIT_S = 900.0


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def city():
    return generate_world(GenConfig(n_buildings=10, extent_x=100.0,
                                    extent_y=100.0, extent_z=60.0,
                                    goal_radius=5.0), seed=WORLD_SEED)


@pytest.fixture(scope="module")
def trained_runs(city, tmp_path_factory):
    """Train each seed at desk scale and evaluate 50 deterministic episodes."""
    hyper = PpoHyper(n_envs=8, horizon=128, total_env_steps=N_UPDATES * 8 * 128)
    cfg = EnvConfig()
    runs = {}
    for seed in TRAIN_SEEDS:
        out = tmp_path_factory.mktemp(f"run_seed{seed}")
        start = time.monotonic()
        arts = train(city, cfg, hyper, seed=seed, out_dir=out, checkpoint_every=0)
        elapsed = time.monotonic() - start
        summary, _ = evaluate_policy(arts.params, city, cfg, EVAL_EPISODES,
                                     seed=1000 + seed, deterministic=True)
        runs[seed] = {"metrics": arts.metrics, "summary": summary,
                      "elapsed": elapsed}
        print(f"  seed {seed}: {elapsed:.0f}s, eval {summary}")
    return runs


def test_desk_scale_convergence(trained_runs):
    """Reward improvement >= 5.0 and deterministic goal rate >= 0.7,
    holding for at least 2 of the 3 seeds, each run within 15 minutes."""
    tenth = N_UPDATES // 10
    passing = []
    details = []
    for seed, run in trained_runs.items():
        rewards = [m.mean_ep_reward for m in run["metrics"]]
        assert len(rewards) == N_UPDATES
        first = float(np.mean(rewards[:tenth]))
        last = float(np.mean(rewards[-tenth:]))
        goal = run["summary"]["goal_rate"]
        ok = (last - first) >= 5.0 and goal >= 0.7
        passing.append(ok)
        details.append(f"seed {seed}: delta={last - first:.1f} goal={goal:.2f} "
                       f"t={run['elapsed']:.0f}s")
        assert run["elapsed"] <= RUNTIME_LIMIT_S, f"seed {seed} exceeded 15 min"
    report("desk-scale convergence (>=2 of 3 seeds)", sum(passing) >= 2,
           "; ".join(details))


def test_obstacle_avoidance(trained_runs):
    """Collision rate <= 0.1 over the 50 deterministic eval episodes,
    holding for at least 2 of the 3 seeds."""
    rates = {seed: run["summary"]["collision_rate"]
             for seed, run in trained_runs.items()}
    passing = sum(1 for r in rates.values() if r <= 0.1)
    report("obstacle avoidance (collision rate <= 0.1, >=2 of 3 seeds)",
           passing >= 2, f"rates={rates}")


def test_gradient_check():
    """Backprop vs central finite differences (h=1e-5), relative error
    <= 1e-4 on >= 500 random coordinates across 10 random minibatches."""
    rng = np.random.default_rng(1234)
    h = 1e-5
    checked = 0
    worst = 0.0
    for batch_idx in range(10):
        eps = 0.0 if batch_idx < 5 else 0.2
        hyper = PpoHyper(explore_eps=eps)
        params = init_params(33, seed=batch_idx)
        m = 64
        batch = (rng.uniform(-1, 1, (m, 33)),
                 rng.normal(0, 0.7, (m, ACTION_DIM)),
                 rng.normal(-3.0, 0.4, m),
                 rng.normal(0, 1, m),
                 rng.normal(0, 5, m))
        _, grads = loss_and_grads(params, *batch, hyper)
        sizes = {n: getattr(params, n).size for n in PARAM_FIELDS}
        total = sum(sizes.values())
        for _ in range(50):
            flat = int(rng.integers(total))
            for name in PARAM_FIELDS:
                if flat < sizes[name]:
                    break
                flat -= sizes[name]
            arr = getattr(params, name)
            orig = arr.flat[flat]
            arr.flat[flat] = orig + h
            up, _ = loss_and_grads(params, *batch, hyper)
            arr.flat[flat] = orig - h
            down, _ = loss_and_grads(params, *batch, hyper)
            arr.flat[flat] = orig
            numeric = (up.total_loss - down.total_loss) / (2 * h)
            analytic = grads[name].flat[flat]
            if abs(analytic) < 1e-8 and abs(numeric) < 1e-8:
                continue
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
            worst = max(worst, rel)
            assert rel <= 1e-4, f"{name}[{flat}]: {analytic} vs {numeric}"
            checked += 1
    report("gradient check", checked >= 500,
           f"{checked} coordinates, worst rel err {worst:.2e}")


def test_gae_oracle_equivalence():
    """200 random sequences (length <= 16, random dones) within 1e-10 of the
    brute-force double sum."""
    rng = np.random.default_rng(555)
    worst = 0.0
    for _ in range(200):
        horizon = int(rng.integers(1, 17))
        rewards = rng.normal(size=horizon)
        values = rng.normal(size=horizon)
        dones = rng.random(horizon) < 0.3
        bootstrap = float(rng.normal())
        gamma = float(rng.uniform(0.5, 1.0))
        lam = float(rng.uniform(0.0, 1.0))
        adv, _ = compute_gae(rewards, values, dones, [bootstrap], gamma, lam)
        # brute force: masked discounted double sum
        deltas = [rewards[t] + gamma * (bootstrap if t == horizon - 1 else values[t + 1])
                  * (0.0 if dones[t] else 1.0) - values[t] for t in range(horizon)]
        for t in range(horizon):
            acc, w = 0.0, 1.0
            for k in range(t, horizon):
                acc += w * deltas[k]
                if dones[k]:
                    break
                w *= gamma * lam
            worst = max(worst, abs(adv[0, t] - acc))
            assert abs(adv[0, t] - acc) <= 1e-10
    report("GAE oracle equivalence", True, f"200 sequences, worst |diff| {worst:.2e}")


def test_ppo_identity_property(city):
    """Unchanged params: every ratio within 1e-12 of 1 and clip fraction 0
    on the first minibatch."""
    cfg = EnvConfig()
    worst = 0.0
    for eps in (0.0, 0.2):
        hyper = PpoHyper(n_envs=2, horizon=32, explore_eps=eps)
        params = init_params(obs_dim(cfg), seed=3)
        envs = [UamEnv(city, cfg, 17 ^ i) for i in range(2)]
        buffer = rollout(params, envs, 32, hyper, np.random.default_rng(17))
        buffer.finalize(hyper.gamma, hyper.lam)
        d = buffer.observations.shape[-1]
        obs = buffer.observations.reshape(-1, d)
        actions = buffer.actions.reshape(-1, ACTION_DIM)
        old = buffer.log_probs.reshape(-1)
        for i in range(len(obs)):
            mu, log_std, _ = forward(params, obs[i])
            new = mixture_log_prob(actions[i][None], mu[None], log_std, eps)[0]
            worst = max(worst, abs(math.exp(new - old[i]) - 1.0))
        one = PpoHyper(n_envs=2, horizon=32, explore_eps=eps, n_epochs=1,
                       minibatch_size=len(obs))
        stats = ppo_update(params, Adam(params, one.lr), buffer, one,
                           np.random.default_rng(0))
        assert stats.clip_frac_first == 0.0
    report("PPO identity property", worst <= 1e-12,
           f"max |ratio-1| = {worst:.2e}, first-minibatch clip fraction 0")


def test_collision_and_nearest_k_oracles(city):
    """1000 random queries: collision, clearance, and nearest-K all match
    exhaustive per-building scans with zero mismatches."""
    cfg = EnvConfig(k_nearest=5)
    rng = np.random.default_rng(4242)
    mismatches = 0
    for _ in range(1000):
        p = rng.uniform(-60, 60, 3)
        p[2] = abs(p[2])
        # collision oracle: loop over boxes
        inside_ref = any(bool(np.all(np.abs(p - b.center) <= b.half_extents))
                         for b in city.buildings)
        if point_in_any_building(p, city) != inside_ref:
            mismatches += 1
        # clearance oracle: clamp-formula per box
        expected = min(math.dist(p, np.minimum(np.maximum(p, b.min_corner),
                                               b.max_corner))
                       for b in city.buildings)
        if abs(clearance(p, city) - expected) > 1e-9:
            mismatches += 1
        # nearest-K oracle: stable sort on (distance, index)
        state = UamState(position=p, velocity=np.zeros(3), yaw=0.0,
                         yaw_rate=0.0, step_index=0)
        state_obs = observe(state, city, cfg)
        dists = [math.dist(p, b.center) for b in city.buildings]
        order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:5]
        for j, bi in enumerate(order):
            at = 13 + 4 * j
            want = (city.buildings[bi].center - p) / cfg.pos_scale
            if not np.allclose(state_obs[at:at + 3], want, rtol=0, atol=1e-12):
                mismatches += 1
    report("collision/nearest-K oracle equivalence", mismatches == 0,
           f"{mismatches} mismatches in 1000 queries")


def test_training_determinism(city, tmp_path):
    """Same config/seed twice: byte-identical metrics and final checkpoint;
    8-worker rollout bitwise equals sequential."""
    cfg = EnvConfig(max_steps=60)
    hyper = PpoHyper(n_envs=4, horizon=32, total_env_steps=4 * 32 * 5,
                     minibatch_size=64)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        train(city, cfg, hyper, seed=11, out_dir=out, checkpoint_every=0)
        outs.append(out)
    metrics_same = (outs[0] / "metrics.csv").read_bytes() == \
        (outs[1] / "metrics.csv").read_bytes()
    ck_same = (outs[0] / "checkpoint_final.json").read_bytes() == \
        (outs[1] / "checkpoint_final.json").read_bytes()

    params = init_params(obs_dim(cfg), seed=0)

    def run(workers):
        envs = [UamEnv(city, cfg, 23 ^ i) for i in range(8)]
        return rollout(params, envs, 64, PpoHyper(n_envs=8, horizon=64),
                       np.random.default_rng(23), n_workers=workers)

    seq, par = run(1), run(8)
    rollout_same = all(
        np.array_equal(getattr(seq, f), getattr(par, f))
        for f in ("observations", "actions", "log_probs", "rewards", "dones",
                  "values", "bootstrap_values"))
    report("training determinism", metrics_same and ck_same and rollout_same,
           f"metrics={metrics_same} checkpoint={ck_same} parallel={rollout_same}")


def test_protocol_round_trip_and_session(city):
    """decode(encode) identity on 1000 random messages; a scripted 20-step
    loopback session equals the in-process environments bitwise."""
    from test_protocol import random_message

    rng = np.random.default_rng(99)
    for _ in range(1000):
        msg = random_message(rng)
        assert decode(encode(msg)) == msg

    env_cfg = EnvConfig(max_steps=50)
    n_envs = 2
    reset_seed = 321
    actions = [rng.uniform(-1, 1, (n_envs, 3)).tolist() for _ in range(20)]
    cfg = ServeConfig(world=city, env_cfg=env_cfg, port=0, n_envs=n_envs,
                      master_seed=5)
    port_box = {}
    ready = threading.Event()

    def on_ready(port):
        port_box["port"] = port
        ready.set()

    thread = threading.Thread(target=serve, args=(cfg,),
                              kwargs={"ready": on_ready}, daemon=True)
    thread.start()
    assert ready.wait(5.0)
    wire = []
    with socket.create_connection(("127.0.0.1", port_box["port"]), timeout=5.0) as sock:
        write_message(sock, Handshake())
        read_message(sock)
        write_message(sock, Reset(seed=reset_seed))
        first = read_message(sock)
        for step_actions in actions:
            write_message(sock, Step(actions=step_actions))
            wire.append(read_message(sock))
        write_message(sock, Close())
    thread.join(5.0)

    envs = [UamEnv(city, env_cfg, reset_seed ^ i) for i in range(n_envs)]
    assert first.obs == [env.reset().tolist() for env in envs]
    exact = True
    for t, step_actions in enumerate(actions):
        for i, env in enumerate(envs):
            obs, reward, term = env.step(np.asarray(step_actions[i]))
            if term.terminal:
                obs = env.reset()
            exact &= wire[t].obs[i] == obs.tolist()
            exact &= wire[t].rewards[i] == reward.total
            exact &= wire[t].dones[i] == term.terminal
            exact &= wire[t].terms[i] == term.value
    report("protocol round-trip and session replay", exact,
           "1000 messages + 20-step loopback session bitwise equal")


def test_renderer_contracts():
    """Building/rect count, polyline point count, and snapshot argmin match
    oracles on 20 random worlds/trajectories."""
    rng = np.random.default_rng(31415)
    for case in range(20):
        world = generate_world(GenConfig(n_buildings=int(rng.integers(0, 15))),
                               seed=case)
        n = int(rng.integers(2, 80))
        records = []
        for i in range(n):
            pos = rng.uniform(-40, 40, 3)
            pos[2] = abs(pos[2])
            records.append(TrajectoryRecord(
                step=i, t=i * 0.1, position=pos, velocity=np.zeros(3),
                angular_velocity=np.zeros(3), action=np.zeros(3), reward=0.0,
                term="running" if i < n - 1 else "timeout"))
        fractions = tuple(i / 8 for i in range(9))
        svg = render_topdown(world, records, snapshot_fractions=fractions)
        assert svg.count("<rect") == len(world.buildings)
        assert svg.count('<circle class="goal"') == 1
        polyline = re.search(r'<polyline class="flightpath" points="([^"]*)"', svg)
        assert len(polyline.group(1).split()) == n
        assert svg.count('<polygon class="snapshot"') == 9
        times = [r.t for r in records]
        got = snapshot_indices(times, fractions)
        for f, idx in zip(fractions, got):
            best = min(range(n), key=lambda k: (abs(times[k] - f * times[-1]), k))
            assert idx == best
    report("renderer contracts", True, "20 random worlds/trajectories")
