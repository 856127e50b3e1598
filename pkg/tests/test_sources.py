import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pertou import GaussianBump, SourceFunction, cos_window, make_term, polynomial_window
from pertou.sources import Constant, Window

H = 1e-5


def fd_grad(term, z):
    E = np.eye(len(z)) * H
    return np.array([(term.value(z + e) - term.value(z - e)) / (2 * H) for e in E])


def fd_hess(term, z):
    E = np.eye(len(z)) * H
    return np.array([(term.grad(z + e) - term.grad(z - e)) / (2 * H) for e in E])


TERMS = {
    "bump": GaussianBump(1.3, [0.2, -0.1], [[0.5, 0.1], [0.1, 0.3]]),
    "cos_window": cos_window(0.8, [2.0, -1.0], [0.0, 0.0], [1.5, 2.0], 0.3),
    "poly_window": polynomial_window({(2, 0): 1.0, (1, 1): -0.5, (0, 3): 0.2}, [0.1, 0.0], 1.8),
    "window": Window([0.0, 0.5], [1.0, 1.5]),
}

pts = arrays(float, 2, elements=st.floats(-0.9, 0.9))


@pytest.mark.parametrize("name", sorted(TERMS))
@given(z=pts)
def test_derivatives_match_finite_differences(name, z):
    term = TERMS[name]
    assert np.allclose(term.grad(z), fd_grad(term, z), atol=2e-6, rtol=1e-5)
    assert np.allclose(term.hess(z), fd_hess(term, z), atol=2e-5, rtol=1e-4)
    assert np.allclose(term.hess(z), term.hess(z).T, atol=1e-12)


def test_window_support_and_peak():
    w = Window([0.0, 0.0], 1.0)
    assert w.value(np.zeros(2)) == 1.0
    assert w.value(np.array([1.0, 0.0])) == 0.0
    assert np.all(w.grad(np.array([[1.5, 0.0]])) == 0.0)


def test_gaussian_bump_sup_and_width_parametrisation():
    g = make_term("gaussian_bump", 2, amplitude=-2.0, center=[1.0, 0.0], width=[0.5, 2.0])
    assert g.sup_abs() == 2.0
    assert np.allclose(g.cov, np.diag([0.25, 4.0]))
    assert g.value(np.array([1.0, 0.0])) == -2.0


def test_polynomial_window_sup_bound_dominates():
    t = TERMS["poly_window"]
    Z = np.random.default_rng(0).uniform(-2, 2, size=(5000, 2))
    assert np.abs(t.value(Z)).max() <= t.sup_abs()


def test_make_term_rejects_unknown_family():
    with pytest.raises(ValueError, match="known: gaussian_bump"):
        make_term("sinc", 2)


def test_piecewise_source():
    g1, g2 = Constant(1.0, 2), Constant(-3.0, 2)
    f = SourceFunction(2, [(0.5, 1.0, [g2]), (0.0, 0.5, [g1])])
    z = np.zeros((1, 2))
    assert np.array_equal(f.breakpoints, [0.0, 0.5, 1.0])
    assert f.value(0.2, z)[0] == 1.0 and f.value(0.5, z)[0] == -3.0
    assert f.value(1.0, z)[0] == -3.0 and f.value(1.5, z)[0] == 0.0
    assert f.sup_abs() == 3.0 and not f.is_zero()
    assert SourceFunction.zero(2).is_zero() and SourceFunction.zero(2).sup_abs() == 0.0


def test_source_validation():
    with pytest.raises(ValueError, match="overlap"):
        SourceFunction(1, [(0.0, 0.6, [Constant(1, 1)]), (0.5, 1.0, [Constant(1, 1)])])
    with pytest.raises(ValueError, match="empty"):
        SourceFunction(1, [(0.5, 0.5, [Constant(1, 1)])])
    with pytest.raises(ValueError, match="dimension"):
        SourceFunction(2, [(0.0, 1.0, [Constant(1, 1)])])


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), s=st.floats(0, 1), z=pts)
def test_source_algebra(a, b, s, z):
    f1 = SourceFunction(2, [(0.0, 0.4, [TERMS["bump"]])])
    f2 = SourceFunction.constant_in_time([TERMS["cos_window"]], 1.0)
    lhs = (f1.scaled(a) + f2.scaled(b)).value(s, z)
    rhs = a * f1.value(s, z) + b * f2.value(s, z)
    assert lhs == pytest.approx(rhs, abs=1e-12)
