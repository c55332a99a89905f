import numpy as np
import pytest

from beliefshaping.errors import NumericError
from beliefshaping.gradcheck import finite_diff_grad, finite_diff_grad_array, max_rel_error
from beliefshaping.params import ParamVector


def vector_of(values):
    p = ParamVector()
    p.register("p", len(values))
    p.get("p")[:] = values
    return p


def test_constant_function_gives_zero():
    p = vector_of([1.0, -2.0, 3.0])
    g = finite_diff_grad(lambda _: 7.5, p)
    assert np.all(g.data == 0.0)


def test_quadratic_is_exact_under_central_differences():
    p = vector_of([1.0, 2.0])
    g = finite_diff_grad(lambda q: float(np.sum(q.data**2)), p, step=1e-6)
    np.testing.assert_allclose(g.data, [2.0, 4.0], atol=1e-9)


def test_nonfinite_value_raises_with_coordinate():
    p = vector_of([0.0, 1.0])

    def f(q):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.log(q.data[1] - 0.999999))

    with pytest.raises(NumericError, match="coordinate"):
        finite_diff_grad(f, p)


def test_array_variant_matches_vector_variant():
    x = np.array([0.3, -0.7, 1.1])
    g = finite_diff_grad_array(lambda v: float(np.sin(v).sum()), x.copy())
    np.testing.assert_allclose(g, np.cos(x), atol=1e-9)


def test_max_rel_error_handles_zero_coordinates():
    a = np.array([1.0, 0.0])
    b = np.array([1.0, 1e-10])
    assert max_rel_error(a, b) < 1e-6
    assert max_rel_error(np.zeros(3), np.zeros(3)) == 0.0
    assert max_rel_error(np.array([1.0]), np.array([1.1])) > 0.09
