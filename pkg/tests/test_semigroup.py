import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import KINETIC_A, KINETIC_B, small_mc
from pertou import (DuhamelField, GaussianBump, MCParams, OperatorSpec, PerturbationSchedule,
                    SourceFunction, SpectralMeasure, ValidationError, check_kalman,
                    gaussian_closed_form, ou_covariance, sample_ou_integral, solve_unperturbed,
                    solve_unperturbed_batch, stable_constant)
from pertou.semigroup import run_blocks, time_panels, transition_covariance
from pertou.sources import Constant


def stable_kinetic(alpha=1.0):
    spec = OperatorSpec(KINETIC_A, KINETIC_B, alpha, SpectralMeasure.isotropic_1d(), 1.0)
    return spec, check_kalman(spec)


# --- covariances -----------------------------------------------------------

def test_kinetic_covariance(kinetic):
    spec, _ = kinetic
    assert np.allclose(ou_covariance(spec, 0.0, 1.0), [[1, 0.5], [0.5, 1 / 3]], atol=1e-14)
    assert np.array_equal(ou_covariance(spec, 0.4, 0.4), np.zeros((2, 2)))


@given(s=st.floats(0, 2), dt=st.floats(0, 2))
def test_heat_covariance(s, dt):
    spec = OperatorSpec(np.zeros((3, 3)), np.eye(3), 2.0, None, 5.0)
    assert np.allclose(ou_covariance(spec, s, s + dt), dt * np.eye(3), rtol=1e-13, atol=1e-15)


def _random_spec(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    B = np.zeros((3, 3))
    B[0, 0] = 1.0 + rng.random()
    return OperatorSpec(A, B, 2.0, None, 2.0)


@given(seed=st.integers(0, 10 ** 6), s=st.floats(0, 1), a=st.floats(0, 1), b=st.floats(0, 1))
def test_covariance_composition(seed, s, a, b):
    spec = _random_spec(seed)
    u, t = s + a, s + a + b
    M = ou_covariance(spec, s, t)
    assert np.allclose(M, ou_covariance(spec, s, u) + ou_covariance(spec, u, t), atol=1e-9)
    E = __import__("scipy.linalg", fromlist=["expm"]).expm((t - u) * spec.A)
    G = transition_covariance(spec, s, t)
    assert np.allclose(G, E @ transition_covariance(spec, s, u) @ E.T
                       + transition_covariance(spec, u, t), atol=1e-9)


@given(seed=st.integers(0, 10 ** 6), t=st.floats(0.01, 2))
def test_covariance_symmetric_psd(seed, t):
    M = ou_covariance(_random_spec(seed), 0.0, t)
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(M).min() >= -1e-12


def test_covariance_rejects_bad_interval(kinetic):
    with pytest.raises(ValidationError):
        ou_covariance(kinetic[0], 0.5, 0.2)


# --- stochastic integral ---------------------------------------------------

def test_sample_zero_interval(kinetic):
    spec, st_ = kinetic
    x = sample_ou_integral(spec, st_, 0.3, 0.3, 8, np.random.default_rng(0))
    assert np.array_equal(x, np.zeros(2))


def test_sample_heat_covariance():
    spec = OperatorSpec(np.zeros((2, 2)), np.diag([2.0, 1.0]))
    X = sample_ou_integral(spec, check_kalman(spec), 0.2, 0.7, 1, np.random.default_rng(1),
                           size=100_000)
    assert np.allclose(np.cov(X.T), 2 * np.diag([2.0, 1.0]) * 0.5, rtol=0.02, atol=0.01)


def test_sample_kinetic_covariance(kinetic):
    spec, st_ = kinetic
    X = sample_ou_integral(spec, st_, 0.0, 1.0, 1, np.random.default_rng(2), size=100_000)
    assert np.allclose(np.cov(X.T), 2 * np.array([[1, 0.5], [0.5, 1 / 3]]), rtol=0.02)


def test_stable_riemann_sampler_converges():
    spec, st_ = stable_kinetic(1.0)
    lam = np.array([0.5, 2.0])
    # exp(rA) sigma = (1, r), so the exact CF is exp(-c int_0^1 |lam . (1, r)| dr)
    exact = np.exp(-stable_constant(1.0) * quad(lambda r: abs(lam[0] + lam[1] * r), 0, 1)[0])
    errs, ses = [], []
    for k, n in enumerate((2, 8, 32, 128)):
        X = sample_ou_integral(spec, st_, 0.0, 1.0, n, np.random.default_rng(10 + k),
                               size=100_000)
        c = np.cos(X @ lam)
        errs.append(abs(c.mean() - exact))
        ses.append(c.std(ddof=1) / np.sqrt(len(c)))
    assert errs[0] > errs[1] > 3 * ses[1]
    assert errs[-1] <= 3 * ses[-1] + 0.5 * errs[1]


# --- time panels and MC engine ---------------------------------------------

def test_time_panels_align_and_sum():
    nodes, w = time_panels(1.0, 10, [0.33, 0.5, 2.0])
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    for b in (0.33, 0.5):
        left = w[nodes < b].sum()
        assert left == pytest.approx(b, abs=1e-15)


@given(samples=st.integers(2, 3000), block=st.integers(1, 700), threads=st.integers(1, 4))
def test_run_blocks_matches_direct_statistics(samples, block, threads):
    mc = MCParams(samples=samples, seed=3, block_size=block, threads=threads)
    draws = []

    def kernel(rng, n):
        x = rng.normal(size=(n, 2))
        return x

    mean, se = run_blocks(kernel, mc)
    for b in range(-(-samples // block)):
        n = min(block, samples - b * block)
        draws.append(np.random.default_rng([3, 0, b]).normal(size=(n, 2)))
    x = np.concatenate(draws)
    assert np.allclose(mean, x.mean(0), rtol=0, atol=1e-12)
    assert np.allclose(se, x.std(0, ddof=1) / np.sqrt(samples), rtol=1e-10)


def test_run_blocks_thread_independent():
    def kernel(rng, n):
        return rng.standard_cauchy(size=(n, 3))

    a = run_blocks(kernel, MCParams(samples=10_001, seed=7, block_size=512, threads=1))
    b = run_blocks(kernel, MCParams(samples=10_001, seed=7, block_size=512, threads=4))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_mcparams_validation():
    with pytest.raises(ValidationError, match="samples"):
        MCParams(samples=0)
    with pytest.raises(ValidationError, match="seed"):
        MCParams(seed=-1)


# --- Duhamel solver --------------------------------------------------------

def test_zero_source(kinetic):
    spec, st_ = kinetic
    est = solve_unperturbed(spec, st_, SourceFunction.zero(2), 1.0, np.zeros(2), small_mc())
    assert est.value == 0.0 and est.std_error == 0.0


@pytest.mark.parametrize("alpha", [2.0, 1.0])
def test_constant_source_gives_integral(alpha):
    if alpha == 2.0:
        spec = OperatorSpec(np.zeros((2, 2)), np.eye(2))
    else:
        spec = OperatorSpec(np.zeros((1, 1)), np.eye(1), alpha, SpectralMeasure.isotropic_1d())
    f = SourceFunction(spec.N, [(0.0, 0.3, [Constant(2.0, spec.N)]),
                                (0.3, 1.0, [Constant(-1.0, spec.N)])])
    est = solve_unperturbed(spec, check_kalman(spec), f, 0.8, np.ones(spec.N), small_mc(500))
    assert est.value == pytest.approx(2.0 * 0.3 - 0.5, abs=1e-14)
    assert est.std_error < 1e-14


def test_kinetic_bump_matches_closed_form(kinetic, bump_source):
    spec, st_ = kinetic
    X = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 1.0], [1.5, 0.5]])
    for t in (0.5, 1.0):
        est = solve_unperturbed_batch(spec, st_, bump_source, t, X, small_mc(20_000))
        exact = gaussian_closed_form(spec, PerturbationSchedule.zero(2, 1.0), bump_source, t, X)
        assert np.all(np.abs(est.values - exact) <= 3 * est.std_errors + 1e-4)
        assert np.all(np.abs(est.values) <= t + 3 * est.std_errors)


def test_batch_matches_single_probe(kinetic, bump_source):
    spec, st_ = kinetic
    X = np.array([[0.2, 0.1], [-0.4, 0.3]])
    batch = solve_unperturbed_batch(spec, st_, bump_source, 0.7, X, small_mc(3000))
    for p in range(2):
        single = solve_unperturbed(spec, st_, bump_source, 0.7, X[p], small_mc(3000))
        assert single.value == pytest.approx(batch[p].value, abs=1e-15)
        assert single.std_error == pytest.approx(batch[p].std_error, abs=1e-15)


def test_solver_deterministic_across_threads(kinetic, bump_source):
    spec, st_ = kinetic
    kw = dict(samples=9000, seed=11, block_size=1000)
    a = solve_unperturbed(spec, st_, bump_source, 1.0, np.zeros(2), MCParams(threads=1, **kw))
    b = solve_unperturbed(spec, st_, bump_source, 1.0, np.zeros(2), MCParams(threads=3, **kw))
    assert a == b


def test_stable_solver_maximum_principle():
    spec, st_ = stable_kinetic(1.5)
    f = SourceFunction.constant_in_time([GaussianBump(1.0, [0.0, 0.0], [0.2, 0.2])], 1.0)
    est = solve_unperturbed(spec, st_, f, 1.0, np.zeros(2), small_mc(4000, nsteps=32))
    assert 0.0 < est.value <= 1.0 + 3 * est.std_error


def test_solver_rejects_time_beyond_horizon(kinetic, bump_source):
    spec, st_ = kinetic
    with pytest.raises(ValidationError, match="outside"):
        solve_unperturbed(spec, st_, bump_source, 1.5, np.zeros(2), small_mc())


# --- Duhamel fields --------------------------------------------------------

def test_gaussian_fast_path_matches_generic(kinetic):
    rng = np.random.default_rng(0)
    K, M = 3, 5
    flows = np.stack([np.eye(2) + 0.1 * k * np.array(KINETIC_A) for k in range(K)])
    terms = [[GaussianBump(1.0 + k, rng.normal(size=2), [0.3, 0.5])] for k in range(K)]
    field = DuhamelField(2, [0.2, 0.3, 0.5], flows, terms, rng.normal(size=(M, K, 2)))
    X = rng.normal(size=(40, 2))
    fast = field.value(X)
    field._all_gaussian = False
    assert np.allclose(fast, field.value(X), rtol=1e-12, atol=1e-15)


def test_field_derivatives_match_finite_differences(kinetic):
    rng = np.random.default_rng(1)
    flows = np.stack([np.eye(2), np.eye(2) + np.array(KINETIC_A)])
    terms = [[GaussianBump(1.0, [0.1, 0.0], [0.3, 0.5])], [GaussianBump(-0.5, [0, 0.4], 0.4)]]
    field = DuhamelField(2, [0.4, 0.6], flows, terms, rng.normal(size=(4, 2, 2)))
    x = np.array([[0.2, -0.1]])
    h = 1e-5
    E = np.eye(2) * h
    g = np.array([(field.value(x + e) - field.value(x - e))[0] / (2 * h) for e in E])
    assert np.allclose(field.grad(x)[0], g, atol=1e-8)
    H = np.array([(field.grad(x + e) - field.grad(x - e))[0] / (2 * h) for e in E])
    assert np.allclose(field.hess(x)[0], H, atol=1e-7)
