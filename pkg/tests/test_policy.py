import numpy as np
import pytest

from beliefshaping.beliefs import LOG_LIK_FLOOR
from beliefshaping.errors import ConfigError
from beliefshaping.gradcheck import finite_diff_grad, max_rel_error
from beliefshaping.params import ParamVector
from beliefshaping.policy import (
    PolicySpec,
    action_distribution,
    grad_role_loglik,
    init_policy,
    register_policy,
    restrict_to_role0,
    role_loglik_vector,
    sample_actions,
    value_estimates,
    accumulate_loglik_grads,
)

SPEC = PolicySpec(obs_dim=6, n_actions=4, n_role_heads=3, n_hypotheses=3, hidden_dim=8)


def make_policy(spec=SPEC, seed=0, init=True):
    params = ParamVector()
    register_policy(params, spec)
    if init:
        init_policy(params, spec, np.random.default_rng(seed))
    return params


def test_zero_heads_give_uniform_distribution():
    params = make_policy(init=False)
    dist = action_distribution(params, SPEC, np.ones(6), role=1)
    np.testing.assert_allclose(dist, np.full(4, 0.25))


def test_distribution_sums_to_one():
    params = make_policy(seed=5)
    rng = np.random.default_rng(2)
    for _ in range(20):
        dist = action_distribution(params, SPEC, rng.normal(size=6), role=int(rng.integers(3)))
        assert abs(dist.sum() - 1.0) <= 1e-12
        assert np.all(dist >= 0.0)


def test_identical_heads_give_identical_distributions():
    params = make_policy(seed=1)
    params.get("policy.heads.w")[1] = params.get("policy.heads.w")[0]
    params.get("policy.heads.b")[1] = params.get("policy.heads.b")[0]
    obs = np.random.default_rng(3).normal(size=6)
    np.testing.assert_array_equal(
        action_distribution(params, SPEC, obs, 0), action_distribution(params, SPEC, obs, 1)
    )


def test_role_out_of_range():
    params = make_policy()
    with pytest.raises(ConfigError):
        action_distribution(params, SPEC, np.ones(6), role=3)


def test_loglik_constant_across_identical_heads():
    params = make_policy(seed=2)
    w0 = params.get("policy.heads.w")[0]
    b0 = params.get("policy.heads.b")[0]
    for z in (1, 2):
        params.get("policy.heads.w")[z] = w0
        params.get("policy.heads.b")[z] = b0
    ell = role_loglik_vector(params, SPEC, np.random.default_rng(4).normal(size=6), action=2)
    assert np.all(ell == ell[0])


def test_loglik_hand_built_probabilities():
    spec = PolicySpec(obs_dim=3, n_actions=2, n_role_heads=2, n_hypotheses=2, hidden_dim=4)
    params = make_policy(spec, init=False)  # zero trunk -> zero features, logits = biases
    params.get("policy.heads.b")[0] = np.log([0.8, 0.2])
    params.get("policy.heads.b")[1] = np.log([0.2, 0.8])
    ell = role_loglik_vector(params, spec, np.zeros(3), action=0)
    np.testing.assert_allclose(ell, [np.log(0.8), np.log(0.2)], atol=1e-12)
    np.testing.assert_allclose(ell, [-0.2231435513, -1.6094379124], atol=1e-9)


def test_loglik_entries_nonpositive_and_floored():
    params = make_policy(seed=7)
    rng = np.random.default_rng(8)
    for _ in range(50):
        ell = role_loglik_vector(params, SPEC, rng.normal(size=6), int(rng.integers(4)))
        assert np.all(ell <= 0.0) and np.all(ell >= LOG_LIK_FLOOR)


def test_grad_role_loglik_matches_finite_differences():
    rng = np.random.default_rng(9)
    worst = 0.0
    for trial in range(25):
        params = make_policy(seed=100 + trial)
        obs = rng.normal(size=6)
        action = int(rng.integers(4))
        role = int(rng.integers(3))
        analytic = grad_role_loglik(params, SPEC, obs, action, role)
        fd = finite_diff_grad(
            lambda p: float(role_loglik_vector(p, SPEC, obs, action)[role]), params
        )
        worst = max(worst, max_rel_error(analytic.data, fd.data))
    assert worst <= 1e-5


def test_grad_zero_outside_trunk_and_own_head():
    params = make_policy(seed=11)
    g = grad_role_loglik(params, SPEC, np.random.default_rng(1).normal(size=6), action=1, role=1)
    assert np.all(g.get("policy.heads.w")[0] == 0.0) and np.all(g.get("policy.heads.w")[2] == 0.0)
    assert np.any(g.get("policy.heads.w")[1] != 0.0)
    assert np.all(g.get("policy.values.w") == 0.0)


def test_head_bias_grad_is_onehot_minus_probs():
    params = make_policy(seed=12)
    obs = np.random.default_rng(2).normal(size=6)
    dist = action_distribution(params, SPEC, obs, role=0)
    g = grad_role_loglik(params, SPEC, obs, action=2, role=0)
    onehot = np.eye(4)[2]
    np.testing.assert_allclose(g.get("policy.heads.b")[0], onehot - dist, atol=1e-12)


def test_weighted_accumulation_matches_sum_of_single_grads():
    params = make_policy(seed=13)
    obs = np.random.default_rng(3).normal(size=6)
    weights = np.array([0.5, -1.5, 2.0])
    fused = params.zeros_like()
    accumulate_loglik_grads(params, SPEC, obs, 1, weights, fused)
    manual = params.zeros_like()
    for z, w in enumerate(weights):
        manual.data += w * grad_role_loglik(params, SPEC, obs, 1, z).data
    np.testing.assert_allclose(fused.data, manual.data, atol=1e-12)


def test_restrict_to_role0_masks():
    params = make_policy(seed=14)
    g = params.zeros_like()
    g.get("policy.heads.w")[1] = 1.0
    masked = restrict_to_role0(g, SPEC)
    assert np.all(masked.data == 0.0)

    g2 = params.zeros_like()
    g2.get("policy.heads.w")[0] = 2.0
    np.testing.assert_array_equal(restrict_to_role0(g2, SPEC).data, g2.data)

    g3 = grad_role_loglik(params, SPEC, np.ones(6), 0, 2)
    g3.data += grad_role_loglik(params, SPEC, np.ones(6), 0, 0).data
    masked3 = restrict_to_role0(g3, SPEC)
    assert np.all(masked3.get("policy.heads.w")[1:] == 0.0)
    assert np.any(masked3.get("policy.heads.w")[0] != 0.0)
    assert np.any(masked3.get("policy.trunk.w0") != 0.0)


def test_sampling_deterministic_and_matches_distribution():
    params = make_policy(seed=15)
    obs = np.random.default_rng(5).normal(size=6)
    batch = np.tile(obs, (100_000, 1))
    roles = np.zeros(100_000, dtype=np.int64)
    a1, logp1, _ = sample_actions(params, SPEC, batch, roles, np.random.default_rng(77))
    a2, _, _ = sample_actions(params, SPEC, batch, roles, np.random.default_rng(77))
    assert np.array_equal(a1, a2)
    dist = action_distribution(params, SPEC, obs, 0)
    freqs = np.bincount(a1, minlength=4) / a1.size
    sigma = np.sqrt(dist * (1 - dist) / a1.size)
    assert np.all(np.abs(freqs - dist) <= 3.0 * sigma + 1e-12)
    np.testing.assert_allclose(logp1, np.log(dist)[a1], atol=1e-12)


def test_value_estimates_batch_and_single_agree():
    params = make_policy(seed=16)
    obs = np.random.default_rng(6).normal(size=(4, 6))
    roles = np.array([0, 1, 2, 0])
    batch = value_estimates(params, SPEC, obs, roles)
    singles = [value_estimates(params, SPEC, obs[i], roles[i]) for i in range(4)]
    np.testing.assert_allclose(batch, singles, atol=1e-12)
