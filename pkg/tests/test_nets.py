import numpy as np
import pytest

from beliefshaping.errors import ConfigError
from beliefshaping.gradcheck import finite_diff_grad, finite_diff_grad_array, max_rel_error
from beliefshaping.nets import Adam, MlpSpec, clip_grad_norm, init_mlp, mlp_backward, mlp_forward, register_mlp
from beliefshaping.params import ParamVector


def make_mlp(spec, seed=0):
    params = ParamVector()
    register_mlp(params, "net", spec)
    init_mlp(params, "net", spec, np.random.default_rng(seed))
    return params


def test_zero_params_give_zero_output():
    spec = MlpSpec(4, 8, 3, hidden_layers=2)
    params = ParamVector()
    register_mlp(params, "net", spec)
    y = mlp_forward(params, "net", spec, np.ones(4))
    assert np.all(y == 0.0)


def test_identity_like_single_unit():
    spec = MlpSpec(1, 1, 1, hidden_layers=1)
    params = make_mlp(spec)
    params.set("net.w0", np.array([[1.0]]))
    params.set("net.b0", np.array([0.0]))
    params.set("net.w1", np.array([[1.0]]))
    params.set("net.b1", np.array([0.0]))
    assert mlp_forward(params, "net", spec, np.zeros(1))[0] == 0.0
    np.testing.assert_allclose(mlp_forward(params, "net", spec, np.array([0.7]))[0], np.tanh(0.7))


def test_forward_matches_straight_line_recomputation():
    spec = MlpSpec(5, 7, 2, hidden_layers=2)
    params = make_mlp(spec, seed=11)
    x = np.random.default_rng(1).normal(size=5)
    h = np.tanh(params.get("net.w0") @ x + params.get("net.b0"))
    h = np.tanh(params.get("net.w1") @ h + params.get("net.b1"))
    y = params.get("net.w2") @ h + params.get("net.b2")
    np.testing.assert_allclose(mlp_forward(params, "net", spec, x), y, rtol=0, atol=1e-14)


def test_forward_is_pure_and_deterministic():
    spec = MlpSpec(3, 4, 2)
    params = make_mlp(spec, seed=2)
    x = np.random.default_rng(5).normal(size=3)
    y1 = mlp_forward(params, "net", spec, x)
    y2 = mlp_forward(params, "net", spec, x)
    assert np.array_equal(y1, y2)


def test_zero_upstream_gives_zero_gradients():
    spec = MlpSpec(3, 4, 2)
    params = make_mlp(spec, seed=3)
    grad, gx = mlp_backward(params, "net", spec, np.ones(3), np.zeros(2))
    assert np.all(grad.data == 0.0) and np.all(gx == 0.0)


def test_linear_layer_weight_grad_is_outer_product():
    spec = MlpSpec(3, 4, 2, hidden_layers=0)
    params = make_mlp(spec, seed=4)
    x = np.array([0.5, -1.0, 2.0])
    u = np.array([1.5, -0.25])
    grad, gx = mlp_backward(params, "net", spec, x, u)
    np.testing.assert_allclose(grad.get("net.w0"), np.outer(u, x))
    np.testing.assert_allclose(grad.get("net.b0"), u)
    np.testing.assert_allclose(gx, params.get("net.w0").T @ u)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(123)
    spec = MlpSpec(4, 6, 3, hidden_layers=2)
    worst = 0.0
    for trial in range(20):
        params = make_mlp(spec, seed=trial)
        x = rng.normal(size=4)
        u = rng.normal(size=3)
        analytic, gx = mlp_backward(params, "net", spec, x, u)
        fd = finite_diff_grad(lambda p: float(u @ mlp_forward(p, "net", spec, x)), params)
        worst = max(worst, max_rel_error(analytic.data, fd.data))
        fd_x = finite_diff_grad_array(lambda xv: float(u @ mlp_forward(params, "net", spec, xv)), x.copy())
        worst = max(worst, max_rel_error(gx, fd_x))
    assert worst <= 1e-6


def test_batched_backward_sums_rows():
    spec = MlpSpec(4, 5, 2, hidden_layers=1)
    params = make_mlp(spec, seed=9)
    rng = np.random.default_rng(7)
    xs = rng.normal(size=(3, 4))
    us = rng.normal(size=(3, 2))
    batched, _ = mlp_backward(params, "net", spec, xs, us)
    summed = params.zeros_like()
    for x, u in zip(xs, us):
        mlp_backward(params, "net", spec, x, u, summed)
    np.testing.assert_allclose(batched.data, summed.data, atol=1e-12)


def test_dimension_mismatch_raises():
    spec = MlpSpec(3, 4, 2)
    params = make_mlp(spec)
    with pytest.raises(ConfigError):
        mlp_forward(params, "net", spec, np.ones(5))
    with pytest.raises(ConfigError):
        mlp_backward(params, "net", spec, np.ones(3), np.ones(3))


def test_adam_descends_on_quadratic():
    params = ParamVector()
    params.register("theta", 4)
    params.get("theta")[:] = np.array([2.0, -3.0, 1.0, 0.5])
    opt = Adam(params.size, lr=0.05)
    for _ in range(400):
        opt.step(params, 2.0 * params.data)
    assert np.all(np.abs(params.data) < 1e-2)


def test_clip_grad_norm():
    g = np.array([3.0, 4.0])
    norm = clip_grad_norm(g, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(np.linalg.norm(g), 1.0)
    g2 = np.array([0.3, 0.4])
    clip_grad_norm(g2, 1.0)
    np.testing.assert_allclose(g2, [0.3, 0.4])
