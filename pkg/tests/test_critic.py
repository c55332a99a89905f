import numpy as np
import pytest

from beliefshaping.critic import (
    CriticSpec,
    critic_grad_wrt_belief,
    critic_value,
    critic_value_batch,
    init_critic,
    register_critic,
    train_critic,
)
from beliefshaping.errors import DataError
from beliefshaping.gradcheck import finite_diff_grad_array, max_rel_error
from beliefshaping.nets import mlp_forward
from beliefshaping.params import ParamVector

SPEC = CriticSpec(obs_dim=5, n_observers=3, n_hypotheses=2, hidden_dim=8)


def make_critic(spec=SPEC, seed=0, init=True):
    params = ParamVector()
    register_critic(params, spec)
    if init:
        init_critic(params, spec, np.random.default_rng(seed))
    return params


def random_beliefs(rng, spec=SPEC, batch=None):
    shape = (spec.n_observers, spec.n_hypotheses) if batch is None else (batch, spec.n_observers, spec.n_hypotheses)
    raw = rng.uniform(0.1, 1.0, size=shape)
    return raw / raw.sum(axis=-1, keepdims=True)


def test_zero_params_give_zero_value():
    params = make_critic(init=False)
    rng = np.random.default_rng(0)
    assert critic_value(params, SPEC, rng.normal(size=5), random_beliefs(rng)) == 0.0


def test_value_matches_straight_line_mlp():
    params = make_critic(seed=3)
    rng = np.random.default_rng(1)
    obs = rng.normal(size=5)
    beliefs = random_beliefs(rng)
    x = np.concatenate([obs, beliefs.reshape(-1)])
    expected = mlp_forward(params, "critic", SPEC.mlp(), x)[0]
    assert critic_value(params, SPEC, obs, beliefs) == pytest.approx(expected, abs=1e-14)


def test_permuting_beliefs_changes_value():
    params = make_critic(seed=4)
    rng = np.random.default_rng(2)
    obs = rng.normal(size=5)
    beliefs = random_beliefs(rng)
    permuted = beliefs[[1, 2, 0]]
    assert critic_value(params, SPEC, obs, beliefs) != critic_value(params, SPEC, obs, permuted)


def test_belief_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(20):
        params = make_critic(seed=50 + trial)
        obs = rng.normal(size=5)
        beliefs = random_beliefs(rng)
        analytic = critic_grad_wrt_belief(params, SPEC, obs, beliefs)
        fd = finite_diff_grad_array(lambda b: critic_value(params, SPEC, obs, b), beliefs.copy())
        worst = max(worst, max_rel_error(analytic, fd))
    assert worst <= 1e-5


def test_zero_params_give_zero_belief_gradient():
    params = make_critic(init=False)
    rng = np.random.default_rng(6)
    g = critic_grad_wrt_belief(params, SPEC, rng.normal(size=5), random_beliefs(rng))
    assert np.all(g == 0.0)


def test_linear_critic_gradient_equals_weights():
    spec = CriticSpec(obs_dim=2, n_observers=2, n_hypotheses=3, hidden_dim=4, hidden_layers=0)
    params = make_critic(spec, seed=7)
    w = params.get("critic.w0")[0]
    rng = np.random.default_rng(3)
    g = critic_grad_wrt_belief(params, spec, rng.normal(size=2), random_beliefs(rng, spec))
    np.testing.assert_allclose(g.reshape(-1), w[spec.obs_dim :], atol=1e-14)


def test_train_critic_memorizes_single_sample():
    params = make_critic(seed=8)
    rng = np.random.default_rng(4)
    obs = rng.normal(size=(1, 5))
    beliefs = random_beliefs(rng, batch=1)
    target = np.array([1.7])
    initial = (critic_value(params, SPEC, obs[0], beliefs[0]) - target[0]) ** 2
    train_critic(params, SPEC, obs, beliefs, target, lr=5e-3, epochs=800, rng=rng)
    final = (critic_value(params, SPEC, obs[0], beliefs[0]) - target[0]) ** 2
    assert final <= 1e-4 * max(initial, 1e-8)


def test_train_critic_descends_on_fixed_dataset():
    params = make_critic(seed=9)
    rng = np.random.default_rng(5)
    obs = rng.normal(size=(32, 5))
    beliefs = random_beliefs(rng, batch=32)
    targets = rng.normal(size=32)
    losses = train_critic(params, SPEC, obs, beliefs, targets, lr=1e-3, epochs=30, rng=rng)
    assert losses[-1] < losses[0]


def test_zero_targets_zero_init_is_fixed_point():
    params = make_critic(init=False)
    rng = np.random.default_rng(6)
    obs = rng.normal(size=(4, 5))
    beliefs = random_beliefs(rng, batch=4)
    losses = train_critic(params, SPEC, obs, beliefs, np.zeros(4), lr=1e-3, epochs=3, rng=rng)
    assert losses == [0.0, 0.0, 0.0]
    assert np.all(params.data == 0.0)


def test_batch_value_matches_singles():
    params = make_critic(seed=10)
    rng = np.random.default_rng(7)
    obs = rng.normal(size=(6, 5))
    beliefs = random_beliefs(rng, batch=6)
    batch = critic_value_batch(params, SPEC, obs, beliefs)
    singles = [critic_value(params, SPEC, obs[i], beliefs[i]) for i in range(6)]
    np.testing.assert_allclose(batch, singles, atol=1e-14)


def test_empty_or_bad_dataset_raises():
    params = make_critic()
    with pytest.raises(DataError):
        train_critic(params, SPEC, np.zeros((0, 5)), np.zeros((0, 3, 2)), np.zeros(0), 1e-3, 1)
    with pytest.raises(DataError):
        train_critic(params, SPEC, np.zeros((1, 5)), np.ones((1, 3, 2)) / 2, np.array([np.nan]), 1e-3, 1)
