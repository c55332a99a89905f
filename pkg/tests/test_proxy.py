import numpy as np
import pytest

from beliefshaping.errors import ConfigError, DataError
from beliefshaping.gradcheck import finite_diff_grad, max_rel_error
from beliefshaping.params import ParamVector
from beliefshaping.proxy import (
    CANONICAL,
    ESTIMATED,
    PredictorSpec,
    PredictorState,
    init_predictor,
    predict_sequence,
    proxy_observation,
    register_predictor,
    sequence_backward,
    train_predictor,
)

SPEC = PredictorSpec(obs_dim=4, n_observers=3, n_role_ids=3, hidden_dim=6, emb_dim=3)


def make_predictor(seed=0, init=True):
    params = ParamVector()
    register_predictor(params, SPEC)
    if init:
        init_predictor(params, SPEC, np.random.default_rng(seed))
    return params


def test_canonical_mode_is_identity():
    history = np.random.default_rng(0).normal(size=(5, 4))
    out = proxy_observation(CANONICAL, history, slot=1)
    np.testing.assert_array_equal(out, history[-1])


def test_estimated_mode_requires_predictor():
    with pytest.raises(ConfigError):
        proxy_observation(ESTIMATED, np.zeros((2, 4)), slot=0)


def test_zero_init_predictor_outputs_zero():
    params = make_predictor(init=False)
    out = proxy_observation(ESTIMATED, np.ones((3, 4)), slot=0, role=2, params=params, spec=SPEC)
    np.testing.assert_array_equal(out, np.zeros(4))


def test_distinct_slots_give_distinct_proxies():
    params = make_predictor(seed=3)
    history = np.random.default_rng(1).normal(size=(4, 4))
    outs = [
        proxy_observation(ESTIMATED, history, slot=s, role=2, params=params, spec=SPEC) for s in range(3)
    ]
    assert not np.allclose(outs[0], outs[1])
    assert not np.allclose(outs[1], outs[2])


def test_stateful_stepping_matches_sequence():
    params = make_predictor(seed=4)
    history = np.random.default_rng(2).normal(size=(6, 4))
    seq_preds, _ = predict_sequence(params, SPEC, history, slot=1, role=0)
    state = PredictorState(SPEC, n_rows=1)
    step_preds = np.stack(
        [state.step(params, history[t][None, :], np.array([1]), np.array([0]))[0] for t in range(6)]
    )
    np.testing.assert_allclose(step_preds, seq_preds, atol=1e-12)


def test_bptt_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(8):
        params = make_predictor(seed=20 + trial)
        obs_seq = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 4))
        slot, role = int(rng.integers(3)), int(rng.integers(3))

        def loss(p):
            preds, _ = predict_sequence(p, SPEC, obs_seq, slot, role)
            return float(np.sum((preds - target) ** 2))

        preds, caches = predict_sequence(params, SPEC, obs_seq, slot, role)
        grad = params.zeros_like()
        sequence_backward(params, SPEC, caches, 2.0 * (preds - target), slot, role, grad)
        fd = finite_diff_grad(loss, params)
        worst = max(worst, max_rel_error(grad.data, fd.data))
    assert worst <= 1e-4


def test_train_predictor_memorizes_constant_observations():
    params = make_predictor(seed=6)
    rng = np.random.default_rng(3)
    const_obs = rng.normal(size=4)
    seqs = [(np.tile(const_obs, (8, 1)), s, 2, np.tile(const_obs * 0.5, (8, 1))) for s in range(3)]
    report = train_predictor(params, SPEC, seqs, lr=5e-3, epochs=500, rng=rng)
    assert report["epoch_losses"][-1] <= 1e-4
    assert report["epoch_losses"][-1] < report["epoch_losses"][0]


def test_zero_targets_drive_output_head_to_zero():
    params = make_predictor(seed=7)
    rng = np.random.default_rng(4)
    seqs = [(rng.normal(size=(6, 4)), 0, 1, np.zeros((6, 4)))]
    report = train_predictor(params, SPEC, seqs, lr=1e-2, epochs=600, rng=rng)
    assert report["epoch_losses"][-1] <= 1e-3


def test_per_dim_report_shape_and_validation():
    params = make_predictor(seed=8)
    seqs = [(np.zeros((3, 4)), 0, 0, np.zeros((3, 4)))]
    report = train_predictor(params, SPEC, seqs, lr=1e-3, epochs=1)
    assert report["per_dim_mse"].shape == (4,)
    with pytest.raises(DataError):
        train_predictor(params, SPEC, [], lr=1e-3, epochs=1)
    with pytest.raises(DataError):
        train_predictor(params, SPEC, [(np.zeros((3, 4)), 0, 0, np.zeros((2, 4)))], lr=1e-3, epochs=1)
