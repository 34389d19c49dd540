import math

import numpy as np
import pytest

from uamsim.env import EnvConfig, UamEnv, obs_dim
from uamsim.errors import NumericalDivergence
from uamsim.policy import (ACTION_DIM, Adam, PARAM_FIELDS, copy_params,
                           init_params, loss_and_grads, mixture_log_prob)
from uamsim.ppo import PpoHyper, ppo_update, rollout
from uamsim.world import GenConfig, generate_world

OBS_DIM = 33


def make_buffer(n_envs=2, horizon=32, explore_eps=0.0, param_seed=0, env_seed=7):
    world = generate_world(GenConfig(n_buildings=6), seed=5)
    cfg = EnvConfig()
    hyper = PpoHyper(n_envs=n_envs, horizon=horizon, explore_eps=explore_eps)
    params = init_params(obs_dim(cfg), param_seed)
    envs = [UamEnv(world, cfg, env_seed ^ i) for i in range(n_envs)]
    rng = np.random.default_rng(env_seed)
    buffer = rollout(params, envs, horizon, hyper, rng)
    buffer.finalize(hyper.gamma, hyper.lam)
    return params, buffer, hyper


def random_minibatch(rng, m=48, obs_dim=OBS_DIM):
    """Synthetic minibatch with behavior log-probs from a perturbed policy."""
    obs = rng.uniform(-1, 1, (m, obs_dim))
    actions = rng.normal(0, 0.7, (m, ACTION_DIM))
    old_log_probs = rng.normal(-3.0, 0.4, m)
    advantages = rng.normal(0, 1, m)
    returns = rng.normal(0, 5, m)
    return obs, actions, old_log_probs, advantages, returns


# --------------------------- identity property -------------------------------


@pytest.mark.parametrize("explore_eps", [0.0, 0.2])
def test_unchanged_params_give_unit_ratios(explore_eps):
    params, buffer, hyper = make_buffer(explore_eps=explore_eps)
    d = buffer.observations.shape[-1]
    obs = buffer.observations.reshape(-1, d)
    actions = buffer.actions.reshape(-1, ACTION_DIM)
    old = buffer.log_probs.reshape(-1)
    new = np.empty_like(old)
    for i in range(len(obs)):
        from uamsim.policy import forward
        mu, log_std, _ = forward(params, obs[i])
        new[i] = mixture_log_prob(actions[i][None], mu[None], log_std, explore_eps)[0]
    ratios = np.exp(new - old)
    assert np.max(np.abs(ratios - 1.0)) <= 1e-12

    # One full-batch minibatch: its clip fraction is the first-minibatch one.
    one = PpoHyper(n_envs=hyper.n_envs, horizon=hyper.horizon,
                   explore_eps=explore_eps, n_epochs=1,
                   minibatch_size=len(obs))
    adam = Adam(params, lr=one.lr)
    stats = ppo_update(params, adam, buffer, one, np.random.default_rng(0))
    assert stats.clip_frac_first == 0.0
    assert stats.n_minibatches == 1


def test_zero_advantages_leave_policy_head_gradfree():
    params, buffer, hyper = make_buffer()
    buffer.advantages = np.zeros_like(buffer.advantages)
    d = buffer.observations.shape[-1]
    stats, grads = loss_and_grads(
        params, buffer.observations.reshape(-1, d),
        buffer.actions.reshape(-1, ACTION_DIM),
        buffer.log_probs.reshape(-1), buffer.advantages.reshape(-1),
        buffer.returns.reshape(-1), hyper)
    assert stats.policy_loss == 0.0
    # The mu head only feeds the policy loss, so its gradient must vanish.
    assert np.array_equal(grads["W_mu"], np.zeros_like(grads["W_mu"]))
    assert np.array_equal(grads["b_mu"], np.zeros_like(grads["b_mu"]))
    # log_std still moves through the entropy bonus.
    assert grads["log_std"] == pytest.approx(np.full(3, -hyper.entropy_coef))
    # Value head still trains.
    assert not np.array_equal(grads["W_v"], np.zeros_like(grads["W_v"]))


# ------------------------- finite-difference gradients -----------------------


def fd_gradient(params, field, index, batch, hyper, h=1e-5):
    arr = getattr(params, field)
    orig = arr.flat[index]
    arr.flat[index] = orig + h
    up, _ = loss_and_grads(params, *batch, hyper)
    arr.flat[index] = orig - h
    down, _ = loss_and_grads(params, *batch, hyper)
    arr.flat[index] = orig
    return (up.total_loss - down.total_loss) / (2 * h)


@pytest.mark.parametrize("explore_eps", [0.0, 0.25])
def test_gradients_match_finite_differences(explore_eps):
    rng = np.random.default_rng(77)
    hyper = PpoHyper(explore_eps=explore_eps)
    params = init_params(OBS_DIM, seed=5)
    batch = random_minibatch(rng)
    _, grads = loss_and_grads(params, *batch, hyper)
    checked = 0
    for field in PARAM_FIELDS:
        size = getattr(params, field).size
        for index in rng.choice(size, size=min(8, size), replace=False):
            analytic = grads[field].flat[index]
            numeric = fd_gradient(params, field, int(index), batch, hyper)
            if abs(analytic) < 1e-8 and abs(numeric) < 1e-8:
                continue
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
            assert rel <= 1e-4, f"{field}[{index}]: {analytic} vs {numeric}"
            checked += 1
    assert checked >= 30


# ------------------------------- ppo_update ---------------------------------


def test_update_changes_params_and_clamps_log_std():
    params, buffer, hyper = make_buffer()
    before = copy_params(params)
    adam = Adam(params, lr=hyper.lr)
    ppo_update(params, adam, buffer, hyper, np.random.default_rng(0))
    assert any(not np.array_equal(getattr(params, n), getattr(before, n))
               for n in PARAM_FIELDS)
    assert np.all(params.log_std >= -5.0) and np.all(params.log_std <= 2.0)


def test_update_deterministic_in_rng():
    params_a, buffer, hyper = make_buffer()
    params_b = copy_params(params_a)
    adam_a = Adam(params_a, lr=hyper.lr)
    adam_b = Adam(params_b, lr=hyper.lr)
    ppo_update(params_a, adam_a, buffer, hyper, np.random.default_rng(3))
    ppo_update(params_b, adam_b, buffer, hyper, np.random.default_rng(3))
    for n in PARAM_FIELDS:
        assert np.array_equal(getattr(params_a, n), getattr(params_b, n))


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_divergence_rolls_back_params():
    params, buffer, hyper = make_buffer()
    buffer.returns[0, 0] = np.inf  # poisons the value loss
    before = copy_params(params)
    adam = Adam(params, lr=hyper.lr)
    t_before = adam.t
    with pytest.raises(NumericalDivergence):
        ppo_update(params, adam, buffer, hyper, np.random.default_rng(0))
    for n in PARAM_FIELDS:
        assert np.array_equal(getattr(params, n), getattr(before, n))
    assert adam.t == t_before


def test_requires_finalized_buffer():
    params, buffer, hyper = make_buffer()
    buffer.advantages = None
    adam = Adam(params, lr=hyper.lr)
    with pytest.raises(ValueError):
        ppo_update(params, adam, buffer, hyper, np.random.default_rng(0))


def test_advantage_normalization():
    _, buffer, _ = make_buffer(n_envs=4, horizon=64)
    assert abs(buffer.advantages.mean()) <= 1e-10
    assert abs(buffer.advantages.std() - 1.0) <= 1e-6


def test_hyper_validation():
    with pytest.raises(ValueError):
        PpoHyper(clip_eps=0.0)
    with pytest.raises(ValueError):
        PpoHyper(explore_eps=1.5)
    with pytest.raises(ValueError):
        PpoHyper(gamma=0.0)
    with pytest.raises(ValueError):
        PpoHyper(n_envs=0)
