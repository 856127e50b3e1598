"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` (or ``python tests/test_acceptance.py``).
The Monte Carlo criteria reuse the shipped configurations in ``configs/``.
"""

import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from pertou import (OperatorSpec, PerturbationSchedule, SpectralMeasure, apply_J,
                    build_jump_system, check_kalman, dilation_apply, frac_laplacian_dir,
                    intrinsic_exponents, is_dilation_invariant, parabolic_distance)
from pertou.harness import load_config, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SUITE = ["oracle_compare", "max_principle", "max_principle_stable", "epsilon_sweep",
         "schauder_ratio", "sobolev_ratio", "cf_check", "poisson_identity", "dilation_check"]


@lru_cache(maxsize=None)
def run(name):
    start = time.perf_counter()
    res = run_experiment(load_config(CONFIGS / f"{name}.yaml"))
    return res, time.perf_counter() - start


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}")
        assert ok, detail
    return emit


def checks_text(res):
    return "; ".join(c.detail for c in res.checks)


def test_criterion_01_oracle_agreement(verdict):
    res, secs = run("oracle_compare")
    cfg = load_config(CONFIGS / "oracle_compare.yaml")
    ok = (res.passed and len(cfg.probes) == 20 and cfg.mc.samples == 200_000
          and len(cfg.schedule.values) == 5 and cfg.schedule.sup_norm <= 1.0 and secs <= 600)
    verdict(1, "oracle agreement", ok, f"{checks_text(res)}; {secs:.0f} s")


def test_criterion_02_maximum_principle(verdict):
    found = []
    for name in SUITE:
        res, _ = run(name)
        found += [c for c in res.checks if c.name.endswith("max principle")]
    bad = [c.name for c in found if not c.passed]
    verdict(2, "maximum principle", len(found) >= 6 and not bad,
            f"{len(found)} experiment-level checks, violations: {bad or 'none'}")


def test_criterion_03_jump_operator_exact(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(2, 5))
        A = np.diag(rng.normal(size=N - 1), -1)
        B = np.zeros((N, N))
        B[0, 0] = 1.0
        Q, _ = np.linalg.qr(rng.normal(size=(N, N)))
        S = (Q * rng.uniform(0, 1, N)) @ Q.T
        H = rng.normal(size=(N, N))
        H = H + H.T
        b, c = rng.normal(size=N), rng.normal()
        eps, t = rng.uniform(1e-3, 1.0), rng.uniform(0, 1)
        sys_ = build_jump_system(OperatorSpec(A, B), PerturbationSchedule.constant(S, 1.0), eps)
        L = sys_.factor_map(t)
        x = rng.normal(size=N)
        phi = lambda z: 0.5 * np.einsum("...i,ij,...j->...", z, H, z) + z @ b + c
        worst = max(worst, abs(apply_J(sys_, phi, t, x) - np.trace(L @ L.T @ H)))
    verdict(3, "J exactness", worst <= 1e-12, f"100 quadratics, max abs error {worst:.2e}")


def test_criterion_04_stable_characteristic_function(verdict):
    res, _ = run("cf_check")
    verdict(4, "stable sampler CF", res.passed, checks_text(res))


def test_criterion_05_epsilon_convergence(verdict):
    res, _ = run("epsilon_sweep")
    gap = next(c for c in res.checks if c.name.endswith("gaps decrease"))
    verdict(5, "epsilon convergence", gap.passed, gap.detail)


def test_criterion_06_schauder_stability(verdict):
    res, _ = run("schauder_ratio")
    want = ("variation", "slope CI contains 0")
    sel = [c for c in res.checks if c.name.split(": ", 1)[1] in want]
    ok = len(sel) == 2 and all(c.passed for c in sel)
    verdict(6, "Schauder constant stability", ok, "; ".join(c.detail for c in sel))


def test_criterion_07_sobolev_stability(verdict):
    res, _ = run("sobolev_ratio")
    var = next(c for c in res.checks if c.name.endswith("variation"))
    verdict(7, "Sobolev constant stability", var.passed, var.detail)


def test_criterion_08_structure_examples(verdict):
    kin = OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0]))
    s2 = check_kalman(kin)
    s1 = check_kalman(OperatorSpec([[0, 0], [1, 0]], np.diag([1.0, 0.0]), 1.0,
                                   SpectralMeasure.isotropic_1d()))
    full = check_kalman(OperatorSpec(np.ones((3, 3)), np.eye(3)))
    t, x = dilation_apply(8.0, 1.0, [1.0, 1.0], s2)
    t2, x2 = dilation_apply(2.0, *dilation_apply(3.0, 1.0, [1.0, 1.0], s2), s2)
    t6, x6 = dilation_apply(6.0, 1.0, [1.0, 1.0], s2)
    cases = {
        "kalman kinetic": (s2.satisfied and s2.k == 1 and list(s2.dims) == [1, 1]
                           and s2.kappa2 == 1.0),
        "kalman stuck": not check_kalman(OperatorSpec(np.zeros((2, 2)), np.diag([1.0, 0.0]))).satisfied,
        "kalman full B": full.satisfied and full.k == 0 and list(full.dims) == [3],
        "exponents": (intrinsic_exponents(2.0, [1, 1]) == pytest.approx([1, 1 / 3], abs=1e-15)
                      and intrinsic_exponents(1.0, [1, 1]) == pytest.approx([0.5, 0.25], abs=1e-15)
                      and intrinsic_exponents(0.5, [1, 1]) == pytest.approx([0.25, 1 / 6], abs=1e-15)),
        "distance": (abs(parabolic_distance([0, 0], [1, 8], s2) - 3.0) <= 1e-12
                     and parabolic_distance([0.3, 2], [0.3, 2], s2) == 0.0
                     and abs(parabolic_distance([0, 0], [0, 4], s1) - 2.0) <= 1e-12),
        "dilation": (abs(t - 8 ** 0.5) <= 1e-12 and np.allclose(x, [8, 2], rtol=0, atol=1e-12)
                     and dilation_apply(1.0, 0.7, [0.2, -3.0], s2)[0] == 0.7),
        "group law": abs(t2 - t6) <= 1e-12 and np.allclose(x2, x6, rtol=0, atol=1e-12),
        "invariance": (is_dilation_invariant(np.array([[0, 0], [1, 0]]), s2)
                       and not is_dilation_invariant(np.array([[1, 0], [1, 0]]), s2)
                       and not is_dilation_invariant(np.array([[0, 1], [1, 0]]), s2)),
    }
    bad = [k for k, v in cases.items() if not v]
    verdict(8, "structure examples", not bad, f"{len(cases) - len(bad)}/{len(cases)} groups exact"
            + (f"; failing: {bad}" if bad else ""))


def _quad_constant(beta):
    head = quad(lambda r: (1 - np.cos(r)) * r ** (-1 - 2 * beta), 0, 1, limit=200)[0]
    body = quad(lambda r: r ** (-1 - 2 * beta), 1, np.inf)[0]
    osc = quad(lambda r: r ** (-1 - 2 * beta), 1, np.inf, weight="cos", wvar=1.0)[0]
    return 2 * (head + body - osc)


def test_criterion_09_fractional_eigenrelation(verdict):
    st = check_kalman(OperatorSpec([[0.0]], [[1.0]], 1.0, SpectralMeasure.isotropic_1d()))
    x = np.array([[0.0], [0.4], [1.3]])
    worst = 0.0
    for beta in (0.25, 0.5, 0.75):
        c = _quad_constant(beta)
        for lam in (0.5, 1.0, 2.0, 3.0):
            phi = lambda X, lam=lam: np.cos(lam * X[..., 0])
            got = frac_laplacian_dir(phi, 0, beta, st, x)
            exp_ = -c * lam ** (2 * beta) * phi(x)
            worst = max(worst, float(np.max(np.abs(got - exp_) / np.abs(c * lam ** (2 * beta)))))
    verdict(9, "fractional eigenrelation", worst <= 5e-3, f"max relative error {worst:.2e}")


def test_criterion_10_poisson_identity(verdict):
    res, _ = run("poisson_identity")
    verdict(10, "Poisson identity", res.passed, checks_text(res))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
