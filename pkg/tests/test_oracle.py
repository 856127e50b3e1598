import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from conftest import KINETIC_A, KINETIC_B
from pertou import (CovarianceTable, GaussianBump, GridSpec, OperatorSpec, PerturbationSchedule,
                    SourceFunction, SpectralMeasure, ValidationError, closed_form_field,
                    gaussian_closed_form, ou_covariance, polynomial_window)
from pertou.oracle import GridField, grid_solve_kinetic, van_loan_integral

PROBES = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 1.0], [1.5, 0.5]])
DOMAIN = ((-4.5, 4.5), (-6.0, 6.0))


def stable_ht(h, smax=1.0, vmax=4.5):
    """A time step comfortably inside the explicit stability limit."""
    return 0.8 / (2 * (1 + smax) / h ** 2 + 2 * smax / h ** 2 + 2 * smax / h ** 2 + vmax / h)


# --- closed form -----------------------------------------------------------

def test_closed_form_zero_source(kinetic):
    spec, _ = kinetic
    out = gaussian_closed_form(spec, PerturbationSchedule.zero(2, 1.0), SourceFunction.zero(2),
                               0.8, PROBES)
    assert np.array_equal(out, np.zeros(len(PROBES)))


def test_closed_form_heat_bump_against_quadrature():
    # A = 0, B = I: the smoothed bump has covariance (v0 + 2 tau) I
    N, v0, t = 2, 0.3, 0.9
    spec = OperatorSpec(np.zeros((N, N)), np.eye(N))
    amp = (2 * np.pi * v0) ** (-N / 2)
    f = SourceFunction.constant_in_time([GaussianBump(amp, np.zeros(N), v0)], 1.0)
    got = gaussian_closed_form(spec, PerturbationSchedule.zero(N, 1.0), f, t, np.zeros(N))
    ref = quad(lambda tau: (2 * np.pi * (v0 + 2 * tau)) ** (-N / 2), 0, t)[0]
    assert got == pytest.approx(ref, rel=1e-10)


def test_closed_form_rejects_alpha_and_family(kinetic, bump_source):
    spec = OperatorSpec(KINETIC_A, KINETIC_B, 1.5, SpectralMeasure.isotropic_1d(), 1.0)
    with pytest.raises(ValidationError, match="alpha"):
        gaussian_closed_form(spec, PerturbationSchedule.zero(2, 1.0), bump_source, 0.5, PROBES)
    f = SourceFunction.constant_in_time([polynomial_window({(1, 0): 1.0}, [0, 0], 1.0)], 1.0)
    with pytest.raises(ValidationError, match="gaussian_bump"):
        gaussian_closed_form(kinetic[0], PerturbationSchedule.zero(2, 1.0), f, 0.5, PROBES)


def test_switching_covariance_is_additive(kinetic):
    spec, _ = kinetic
    S1, S2 = np.diag([0.5, 0.0]), np.array([[0.4, 0.2], [0.2, 0.3]])
    sched = PerturbationSchedule([0.0, 0.5, 1.0], [S1, S2])
    C = CovarianceTable(spec, sched, 1.0)(0.0)
    B = np.asarray(KINETIC_B)
    parts = (2 * van_loan_integral(spec.A, B + S1, 0.0, 0.5)
             + 2 * van_loan_integral(spec.A, B + S2, 0.5, 1.0))
    assert np.array_equal(C, parts)


@given(seed=st.integers(0, 10 ** 6), a=st.floats(0, 1), b=st.floats(0, 1))
def test_van_loan_matches_ou_covariance(seed, a, b):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    Q = np.zeros((3, 3))
    Q[0, 0] = 1.0 + rng.random()
    spec = OperatorSpec(A, Q, 2.0, None, 3.0)
    # ou_covariance is the one-sided integral of exp(rA) B exp(rA)^T over [0, b]
    assert np.allclose(van_loan_integral(A, Q, a, a + b),
                       expm(a * A) @ ou_covariance(spec, 0.0, b) @ expm(a * A).T, atol=1e-9)


def test_closed_form_field_matches_pointwise(kinetic, switching_schedule, bump_source):
    spec, _ = kinetic
    field = closed_form_field(spec, switching_schedule, bump_source, 1.0)
    exact = gaussian_closed_form(spec, switching_schedule, bump_source, 1.0, PROBES)
    assert np.allclose(field.value(PROBES), exact, rtol=1e-8, atol=1e-12)


# --- grid solver -----------------------------------------------------------

def test_grid_zero_source():
    F = grid_solve_kinetic(PerturbationSchedule.zero(2, 1.0), SourceFunction.zero(2),
                           GridSpec(0.25, 0.25, 0.005, DOMAIN), 0.5)
    assert np.array_equal(F.values, np.zeros_like(F.values))


class Manufactured:
    """Source whose solution is ``w(t, x) = t g(x)`` for diffusion matrix ``D``."""

    def __init__(self, g, D):
        self.g, self.D = g, np.asarray(D)

    def value(self, t, Z):
        lw = (np.einsum("ij,...ij->...", self.D, self.g.hess(Z))
              + Z[..., 0] * self.g.grad(Z)[..., 1])
        return self.g.value(Z) - t * lw


def test_grid_manufactured_solution_converges():
    g = GaussianBump(1.0, [0.0, 0.0], [0.3, 0.3])
    S = np.array([[0.2, 0.1], [0.1, 0.3]])
    f = Manufactured(g, np.asarray(KINETIC_B) + S)
    sched = PerturbationSchedule.constant(S, 1.0)
    T, errs = 0.5, []
    for h in (0.2, 0.1):
        grid = GridSpec(h, h, stable_ht(h, 0.4, 4.0), ((-4, 4), (-4, 4)))
        F = grid_solve_kinetic(sched, f, grid, T)
        mesh = np.stack(np.meshgrid(F.v, F.x, indexing="ij"), -1)
        errs.append(np.abs(F.values[-1] - T * g.value(mesh)).max())
    # upwind transport makes the scheme first order in hx
    assert errs[1] < 0.01
    assert np.log2(errs[0] / errs[1]) > 0.8


def test_grid_pure_heat_marginal():
    # with S = diag(0, 1) the x0 marginal solves the 1-d heat equation
    s0, s1, T, h = 0.4, 0.5, 0.5, 0.1
    f = SourceFunction.constant_in_time([GaussianBump(1.0, [0.0, 0.0], [s0 ** 2, s1 ** 2])], 1.0)
    F = grid_solve_kinetic(PerturbationSchedule.constant(np.diag([0.0, 1.0]), 1.0), f,
                           GridSpec(h, h, stable_ht(h, 1.0, 5.0), ((-5, 5), (-8, 8))), T)
    marg = np.trapezoid(F.values[-1], F.x, axis=1)

    def heat(v):
        k = lambda s: s0 ** 2 + 2 * (T - s)
        return quad(lambda s: np.sqrt(2 * np.pi) * s1 * s0 / np.sqrt(k(s))
                    * np.exp(-v * v / (2 * k(s))), 0, T)[0]

    ref = np.array([heat(v) for v in F.v])
    assert np.abs(marg - ref).max() <= 0.01 * np.abs(ref).max()


@pytest.mark.parametrize("kind", ["switching", "constant"])
def test_grid_matches_closed_form(kind, kinetic, switching_schedule, bump_source):
    spec, _ = kinetic
    sched = (switching_schedule if kind == "switching"
             else PerturbationSchedule.constant([[0.4, 0.2], [0.2, 0.3]], 1.0))
    h = 0.1
    F = grid_solve_kinetic(sched, bump_source, GridSpec(h, h, stable_ht(h, 0.6), DOMAIN), 1.0)
    exact = gaussian_closed_form(spec, sched, bump_source, 1.0, PROBES)
    assert np.abs(F.at(-1, PROBES) - exact).max() <= 0.06 * h
    # maximum principle for both oracles
    assert np.abs(F.values).max() <= 1.0 * bump_source.sup_abs() + 1e-12
    assert np.all(np.abs(exact) <= 1.0)


def test_grid_cfl_error_suggests_step():
    with pytest.raises(ValidationError, match=r"use ht <= ([0-9.e-]+)") as info:
        grid_solve_kinetic(PerturbationSchedule.zero(2, 1.0), SourceFunction.zero(2),
                           GridSpec(0.1, 0.1, 0.1, DOMAIN), 0.5)
    suggested = float(info.value.args[0].rsplit("<=", 1)[1])
    grid_solve_kinetic(PerturbationSchedule.zero(2, 1.0), SourceFunction.zero(2),
                       GridSpec(0.1, 0.1, suggested, DOMAIN), 0.01)


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_grid_export_round_trip(fmt, tmp_path, bump_source):
    F = grid_solve_kinetic(PerturbationSchedule.zero(2, 1.0), bump_source,
                           GridSpec(0.25, 0.25, 0.004, DOMAIN), 0.2, t_out=[0.0, 0.1, 0.2])
    path = tmp_path / f"field.{fmt}"
    F.export(path, fmt)
    G = GridField.load(path, fmt)
    assert np.array_equal(G.values, F.values)
    assert np.allclose(G.times, F.times) and np.allclose(G.v, F.v) and np.allclose(G.x, F.x)
    with pytest.raises(ValidationError):
        F.export(path, "hdf5")


@pytest.mark.parametrize("h", [0.07, 0.1, 0.13, 0.2, 0.3])
def test_grid_suggested_step_is_accepted(h):
    sched, f = PerturbationSchedule.zero(2, 1.0), SourceFunction.zero(2)
    with pytest.raises(ValidationError) as info:
        grid_solve_kinetic(sched, f, GridSpec(h, h, 1.0, DOMAIN), 0.01)
    ht = float(info.value.args[0].rsplit("<=", 1)[1])
    grid_solve_kinetic(sched, f, GridSpec(h, h, ht, DOMAIN), 0.01)
