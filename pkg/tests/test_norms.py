import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pertou import (FracQuad, GaussianBump, HolderGrid, LatticeField, NormConfig, OperatorSpec,
                    SpectralMeasure, ValidationError, check_kalman, frac_laplacian_dir,
                    holder_seminorm_aniso, sobolev_seminorm_aniso)
from pertou.norms import (frac_constant, holder_1d_gaussian, holder_separable_gaussian, lp_norm,
                          split_exponent)

ONE_D = check_kalman(OperatorSpec([[0.0]], [[1.0]], 1.0, SpectralMeasure.isotropic_1d()))
PLANE = check_kalman(OperatorSpec(np.zeros((2, 2)), np.eye(2)))
KIN = check_kalman(OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0])))


def quad_constant(beta):
    """``2 int_0^inf (1 - cos r) r^(-1-2beta) dr`` by plain adaptive quadrature."""
    head = quad(lambda r: (1 - np.cos(r)) * r ** (-1 - 2 * beta), 0, 1, limit=200)[0]
    body = quad(lambda r: r ** (-1 - 2 * beta), 1, np.inf)[0]
    osc = quad(lambda r: r ** (-1 - 2 * beta), 1, np.inf, weight="cos", wvar=1.0)[0]
    return 2 * (head + body - osc)


# --- fractional Laplacian --------------------------------------------------

def test_frac_constant_half_is_pi():
    assert frac_constant(0.5) == pytest.approx(np.pi, rel=1e-10)


def test_frac_laplacian_of_constant():
    x = np.array([[0.0], [2.0]])
    assert np.allclose(frac_laplacian_dir(lambda X: np.full(X.shape[:-1], 3.0), 0, 0.4, ONE_D, x),
                       0.0, atol=1e-12)


@pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_cosine_eigenrelation(beta, lam):
    x = np.array([[0.0], [0.4], [1.3]])
    phi = lambda X: np.cos(lam * X[..., 0])
    expected = -quad_constant(beta) * lam ** (2 * beta) * phi(x)
    assert np.allclose(frac_laplacian_dir(phi, 0, beta, ONE_D, x), expected, rtol=5e-3)


def test_cosine_example_beta_half():
    x = np.array([[0.7]])
    val = frac_laplacian_dir(lambda X: np.cos(2.0 * X[..., 0]), 0, 0.5, ONE_D, x)
    assert val[0] == pytest.approx(-np.pi * 2.0 * np.cos(1.4), rel=5e-3)


def test_frac_laplacian_two_dimensional_block():
    # a plane wave cos(k.x) is still an eigenfunction; integrating |theta . k|^(2 beta)
    # over the half circle (length pi) supplies the angular factor
    beta, k = 0.5, np.array([1.0, 2.0])
    phi = lambda X: np.cos(X @ k)
    x = np.array([[0.1, -0.2]])
    ang = np.mean(np.abs(np.cos(np.linspace(0, 2 * np.pi, 4096, endpoint=False))) ** (2 * beta))
    expected = -quad_constant(beta) * np.pi * ang * np.linalg.norm(k) ** (2 * beta) * phi(x)
    assert np.allclose(frac_laplacian_dir(phi, 0, beta, PLANE, x), expected, rtol=5e-3)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
@settings(max_examples=15)
def test_frac_laplacian_linear(a, b):
    x = np.array([[0.2], [-0.5]])
    f = lambda X: np.exp(-X[..., 0] ** 2)
    g = lambda X: np.cos(2 * X[..., 0])
    q = FracQuad(n_angles=2)
    lhs = frac_laplacian_dir(lambda X: a * f(X) + b * g(X), 0, 0.3, ONE_D, x, q)
    rhs = a * frac_laplacian_dir(f, 0, 0.3, ONE_D, x, q) + b * frac_laplacian_dir(g, 0, 0.3, ONE_D, x, q)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_frac_laplacian_error_bar_and_range():
    f = GaussianBump(1.0, [0.0], 1.0)
    _, err = frac_laplacian_dir(f, 0, 0.5, ONE_D, np.array([[0.0]]), return_error=True)
    assert err == pytest.approx(2 * 1.0 * 1e3 ** -1.0 / 1.0)
    with pytest.raises(ValidationError):
        frac_laplacian_dir(f, 0, 1.0, ONE_D, np.array([[0.0]]))


# --- Hoelder seminorms -----------------------------------------------------

def test_split_exponent():
    assert split_exponent(1.5) == (1, 0.5)
    assert split_exponent(0.3) == (0, 0.3)
    with pytest.raises(ValidationError, match="Zygmund"):
        split_exponent(1.0)
    assert split_exponent(1.0, allow_zygmund=True) == (0, 1.0)
    with pytest.raises(ValidationError):
        split_exponent(3.0)


def test_holder_constant_and_linear():
    grid = HolderGrid.around(np.zeros(2), 2.0, 9, PLANE)
    const = lambda X: np.full(X.shape[:-1], 2.0)
    assert holder_seminorm_aniso(const, 0.5, PLANE, grid) == 0.0
    lin = lambda X: 3 * X[..., 0] - X[..., 1] + 1
    assert holder_seminorm_aniso(lin, 1.5, PLANE, grid) == pytest.approx(0.0, abs=1e-6)


def test_holder_matches_brute_force_pairs():
    # one block, exponent 1/2, phi = cos on a grid; brute force over a finer pair set
    grid = HolderGrid((np.linspace(-4, 4, 161),))
    val = holder_seminorm_aniso(lambda X: np.cos(X[..., 0]), 0.5, ONE_D, grid)
    x = np.linspace(-4, 4, 1601)
    d = np.abs(x[:, None] - x[None, :])
    q = np.abs(np.cos(x[:, None]) - np.cos(x[None, :])) / np.where(d > 0, d, np.inf) ** 0.5
    assert val == pytest.approx(q.max(), rel=0.01)


@given(c=st.floats(-50, 50))
def test_holder_absolutely_homogeneous(c):
    grid = HolderGrid.around(np.zeros(2), 2.0, 9, KIN)
    f = GaussianBump(1.0, [0.1, 0.0], [0.5, 0.7])
    cf = GaussianBump(c, [0.1, 0.0], [0.5, 0.7])
    base = holder_seminorm_aniso(f, 2.5, KIN, grid)
    assert holder_seminorm_aniso(cf, 2.5, KIN, grid) == pytest.approx(abs(c) * base, rel=1e-12)


@pytest.mark.parametrize("gamma", [0.5, 2.5])
def test_holder_monotone_under_refinement(gamma):
    f = GaussianBump(1.0, [0.0, 0.0], [0.4, 0.6])
    g1 = HolderGrid.around(np.zeros(2), 2.0, 9, KIN)
    v1 = holder_seminorm_aniso(f, gamma, KIN, g1)
    v2 = holder_seminorm_aniso(f, gamma, KIN, g1.refine())
    assert v2 >= v1 * (1 - 1e-9)


def test_holder_translation_invariance():
    h = np.array([0.25, -0.5])
    f = GaussianBump(1.0, [0.0, 0.0], [0.5, 0.5])
    g = GaussianBump(1.0, -h, [0.5, 0.5])
    grid = HolderGrid.around(np.zeros(2), 3.0, 25, KIN)
    shifted = HolderGrid.around(-h, 3.0, 25, KIN)
    # exact on lattices that translate into each other
    assert holder_seminorm_aniso(g, 2.5, KIN, shifted) == pytest.approx(
        holder_seminorm_aniso(f, 2.5, KIN, grid), rel=1e-12)
    # and within grid tolerance on a common lattice
    assert holder_seminorm_aniso(g, 2.5, KIN, grid) == pytest.approx(
        holder_seminorm_aniso(f, 2.5, KIN, grid), rel=0.05)


def test_holder_1d_gaussian_against_dense_search():
    for beta in (0.3, 0.5, 5 / 6):
        x = np.linspace(-4, 4, 2001)
        G = np.exp(-0.5 * x * x)
        d = np.abs(x[:, None] - x[None, :])
        q = np.abs(G[:, None] - G[None, :]) / np.where(d > 0, d, np.inf) ** beta
        best = q.max()
        val = holder_1d_gaussian(beta)
        assert best <= val * (1 + 1e-9) and val == pytest.approx(best, rel=2e-3)


def test_separable_gaussian_closed_form_dominates_grid():
    f = GaussianBump(2.0, [0.0, 0.0], [0.5 ** 2, 0.7 ** 2])
    exact = holder_separable_gaussian(2.0, [0.5, 0.7], 0.5, KIN)
    grid = HolderGrid.around(np.zeros(2), 2.5, 65, KIN)
    lower = holder_seminorm_aniso(f, 0.5, KIN, grid)
    assert lower <= exact * (1 + 1e-9) and lower == pytest.approx(exact, rel=0.03)


def test_norm_config_validation():
    with pytest.raises(ValidationError):
        NormConfig(alpha=0.5, beta=0.6)
    with pytest.raises(ValidationError):
        NormConfig(alpha=2.0, beta=0.5, p=1.0)
    assert NormConfig(2.0, 0.5).gamma == 2.5


# --- Sobolev seminorm ------------------------------------------------------

def _mode_field(lam, sig=6.0, n=801, phase=0.0):
    ax = np.linspace(-6 * sig, 6 * sig, n)
    times = np.linspace(0.0, 1.0, 5)
    w = np.sin(np.pi * times) + 0.5
    vals = np.array([wi * np.cos(lam * ax + phase) * np.exp(-ax ** 2 / (2 * sig ** 2)) for wi in w])
    return LatticeField(times, (ax,), vals)


def test_sobolev_zero():
    ax = np.linspace(-1, 1, 21)
    F = LatticeField([0.0, 1.0], (ax, ax), np.zeros((2, 21, 21)))
    assert sobolev_seminorm_aniso(F, 2.0, KIN) == 0.0


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_sobolev_single_mode(p):
    F = _mode_field(3.0)
    expected = frac_constant(0.5) * 3.0 * lp_norm(F, p)
    assert sobolev_seminorm_aniso(F, p, ONE_D) == pytest.approx(expected, rel=0.02)


def test_sobolev_pythagorean_modes():
    a, b = _mode_field(2.0), _mode_field(5.0, phase=0.3)
    both = LatticeField(a.times, a.axes, a.values + b.values)
    lhs = sobolev_seminorm_aniso(both, 2.0, ONE_D) ** 2
    rhs = sobolev_seminorm_aniso(a, 2.0, ONE_D) ** 2 + sobolev_seminorm_aniso(b, 2.0, ONE_D) ** 2
    assert lhs == pytest.approx(rhs, rel=0.02)


def test_sobolev_local_block_is_laplacian():
    # alpha = 2: block 0 has exponent 1 and uses the local second derivative
    ax0, ax1 = np.linspace(-5, 5, 81), np.linspace(-6, 6, 97)
    f = GaussianBump(1.0, [0.0, 0.0], [1.0, 1.5])
    F = LatticeField.sample([f], [0.0], (ax0, ax1))
    _, blocks = sobolev_seminorm_aniso(F, 2.0, KIN, return_blocks=True)
    mesh = np.stack(np.meshgrid(ax0, ax1, indexing="ij"), -1)
    exact = lp_norm(F, 2.0, f.hess(mesh)[..., 0, 0][None]) ** 2
    assert blocks[0] == pytest.approx(exact, rel=1e-2)


def test_sobolev_validation():
    F = _mode_field(1.0)
    with pytest.raises(ValidationError):
        sobolev_seminorm_aniso(F, 1.0, ONE_D)
    with pytest.raises(ValidationError, match="dimension"):
        sobolev_seminorm_aniso(F, 2.0, KIN)
