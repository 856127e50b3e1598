"""Time-dependent diffusive perturbations handled by Poisson randomisation.

The perturbation ``Tr(S(t) D^2)`` is replaced, in the drift-free frame, by
the jump operator ``J u(y) = sum_i lam [u(y + l_i) + u(y - l_i) - 2 u(y)]``
with ``lam = eps^-2`` and ``l_i = eps L(t) e_i``, ``L(t) = exp(tA) sqrt(S(t))``.
Its averaged generator is ``Tr(L L^T D^2)`` exactly, and the solution of the
perturbed problem is the average of the unperturbed one over compound
Poisson shifts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from .semigroup import (BatchEstimate, DuhamelField, Estimate, MCParams, OUIntegralSampler, duhamel_setup,
                        duhamel_sum, expm_batch, gaussian_smoothed_terms, ou_covariance,
                        run_blocks, _check_time)
from .sources import SmoothTerm, SourceFunction
from .structure import KalmanStructure, OperatorSpec, ValidationError, is_dilation_invariant

EIG_TOL = 1e-10
CELL_TOL = 0.01


# ---------------------------------------------------------------------------
# square roots

def psd_sqrt(S) -> np.ndarray:
    """Principal square root by symmetric eigendecomposition."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, np.abs(S).max())
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise ValidationError("psd_sqrt needs a symmetric matrix")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() < -EIG_TOL:
        raise ValidationError(f"matrix is not PSD: eigenvalue {w.min():.3g} < -1e-10")
    R = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (R + R.T)


def psd_sqrt_integral(S, epsabs: float = 1e-11, epsrel: float = 1e-11) -> np.ndarray:
    """Square root from ``sqrt(S) = pi^(-1/2)/2 int_0^inf th^(-3/2) (I - exp(-th S)) dth``.

    The substitution ``th = e^v`` turns the integral into a smooth one over
    the real line, evaluated with ``scipy.integrate.quad_vec``.
    """
    S = np.asarray(S, dtype=float)
    psd_sqrt(S)  # validation only
    I = np.eye(S.shape[0])

    def integrand(v):
        th = np.exp(v)
        return th ** -0.5 * (I - expm(-th * S))

    val, err = integrate.quad_vec(integrand, -60.0, 60.0, epsabs=epsabs, epsrel=epsrel,
                                  limit=2000)
    if not np.isfinite(err) or err > 1e-7 * max(1.0, np.abs(val).max()):
        raise ValidationError(f"square-root quadrature did not converge (error {err:.2g})")
    R = val / (2.0 * np.sqrt(np.pi))
    return 0.5 * (R + R.T)


# ---------------------------------------------------------------------------
# schedules and transforms

@dataclass(frozen=True)
class PerturbationSchedule:
    """Piecewise-constant ``S(t) = values[j]`` on ``[breakpoints[j], breakpoints[j+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray
    sup_norm: float = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ValidationError("schedule needs at least two breakpoints")
        if np.any(np.diff(b) <= 0.0):
            raise ValidationError("schedule breakpoints must be strictly increasing")
        if b[0] != 0.0:
            raise ValidationError("schedule must start at t = 0")
        if v.ndim != 3 or v.shape[0] != len(b) - 1 or v.shape[1] != v.shape[2]:
            raise ValidationError(
                f"need {len(b) - 1} square matrices for {len(b)} breakpoints, got shape {v.shape}")
        clean = []
        for j, S in enumerate(v):
            if np.abs(S - S.T).max() > 1e-12 * max(1.0, np.abs(S).max()):
                raise ValidationError(f"schedule value {j} is not symmetric")
            w, V = np.linalg.eigh(0.5 * (S + S.T))
            if w.min() < -1e-12:
                raise ValidationError(f"schedule value {j} is not PSD (eigenvalue {w.min():.3g})")
            clean.append(S if w.min() >= 0.0 else (V * np.clip(w, 0.0, None)) @ V.T)
        v = np.array(clean)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sup_norm",
                           float(max(np.linalg.norm(S, 2) for S in v)))

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @classmethod
    def zero(cls, N: int, T: float) -> "PerturbationSchedule":
        return cls([0.0, T], np.zeros((1, N, N)))

    @classmethod
    def constant(cls, S, T: float) -> "PerturbationSchedule":
        S = np.asarray(S, dtype=float)
        return cls([0.0, T], S[None])

    @classmethod
    def alternating(cls, matrices, switches: int, T: float) -> "PerturbationSchedule":
        """``switches + 1`` equal pieces cycling through ``matrices``."""
        mats = np.asarray(matrices, dtype=float)
        n = int(switches) + 1
        return cls(np.linspace(0.0, T, n + 1), mats[np.arange(n) % len(mats)])

    def piece_index(self, t):
        j = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(j, 0, len(self.values) - 1)

    def at(self, t) -> np.ndarray:
        return self.values[self.piece_index(t)]

    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True)
class TimeTransform:
    """Piecewise-constant drift ``a(t)`` and potential ``c(t) >= 0``.

    ``a_tilde`` and ``c_tilde`` are their exact (piecewise-linear) integrals
    from 0.
    """

    breakpoints: np.ndarray
    a: np.ndarray          # (pieces, N)
    c: np.ndarray          # (pieces,)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if len(b) < 2 or np.any(np.diff(b) <= 0.0) or b[0] != 0.0:
            raise ValidationError("transform breakpoints must start at 0 and increase strictly")
        if a.shape[0] != len(b) - 1 or c.shape != (len(b) - 1,):
            raise ValidationError("transform needs one drift vector and one potential per piece")
        if np.any(c < 0.0):
            raise ValidationError("potential c(t) must be non-negative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @classmethod
    def identity(cls, N: int, T: float) -> "TimeTransform":
        return cls([0.0, T], np.zeros((1, N)), [0.0])

    @classmethod
    def constant(cls, a, c, T: float) -> "TimeTransform":
        return cls([0.0, T], np.atleast_2d(a), [c])

    @property
    def N(self) -> int:
        return self.a.shape[1]

    def _cumulative(self, vals, t):
        b = self.breakpoints
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(vals) - 1)
        base = np.concatenate([np.zeros((1,) + vals.shape[1:]),
                               np.cumsum(np.diff(b).reshape((-1,) + (1,) * (vals.ndim - 1))
                                         * vals, axis=0)])
        dt = (t - b[j]).reshape(t.shape + (1,) * (vals.ndim - 1))
        return base[j] + dt * vals[j]

    def a_tilde(self, t):
        return self._cumulative(self.a, t)

    def c_tilde(self, t):
        return self._cumulative(self.c, t)

    def is_identity(self) -> bool:
        return not np.any(self.a) and not np.any(self.c)


class TransformedSource:
    """``f_T(s, z) = exp(c_tilde(s)) f(s, z - a_tilde(s))``."""

    def __init__(self, f, transform: TimeTransform):
        self.f, self.tr, self.N = f, transform, f.N

    @property
    def breakpoints(self):
        return np.union1d(self.f.breakpoints, self.tr.breakpoints)

    def terms_at(self, s):
        shift = self.tr.a_tilde(s)
        scale = float(np.exp(self.tr.c_tilde(s)))
        return [_ShiftScaled(g, shift, scale) for g in self.f.terms_at(s)]

    def value(self, s, Z):
        return float(np.exp(self.tr.c_tilde(s))) * self.f.value(s, np.asarray(Z) - self.tr.a_tilde(s))

    def sup_abs(self):
        return float(np.exp(self.tr.c_tilde(self.tr.breakpoints[-1]))) * self.f.sup_abs()

    def is_zero(self):
        return self.f.is_zero()


class _ShiftScaled(SmoothTerm):
    def __init__(self, g, shift, scale):
        self.g, self.shift, self.scale, self.N = g, np.asarray(shift), scale, g.N
        if hasattr(g, "shifted"):
            self.gaussian = g.shifted(self.shift, scale)

    def value(self, Z):
        return self.scale * self.g.value(Z - self.shift)

    def grad(self, Z):
        return self.scale * self.g.grad(Z - self.shift)

    def hess(self, Z):
        return self.scale * self.g.hess(Z - self.shift)

    def sup_abs(self):
        return self.scale * self.g.sup_abs()


# ---------------------------------------------------------------------------
# jump system

@dataclass(frozen=True)
class JumpSystem:
    """Intensities and jump vectors of the finite-difference operator, per time cell.

    ``factors[c]`` is ``L`` at the midpoint of cell ``c``; ``entries[c]`` is a
    list of ``(lam, l)`` with ``l = eps L e_i`` for the non-zero columns.
    """

    epsilon: float
    cell_edges: np.ndarray
    factors: np.ndarray
    entries: tuple

    @property
    def N(self) -> int:
        return self.factors.shape[1]

    @property
    def intensity(self) -> float:
        return self.epsilon ** -2

    def cell_index(self, t) -> np.ndarray:
        j = np.searchsorted(self.cell_edges, t, side="right") - 1
        return np.clip(j, 0, len(self.factors) - 1)

    def factor_map(self, t) -> np.ndarray:
        return self.factors[self.cell_index(t)]

    def jump_matrix(self, c: int) -> np.ndarray:
        """Rows are the jump vectors of cell ``c``; shape ``(n_entries, N)``."""
        if not self.entries[c]:
            return np.zeros((0, self.N))
        return np.array([l for _, l in self.entries[c]])

    def is_empty(self) -> bool:
        return all(len(e) == 0 for e in self.entries)


def _refinement_step(A: np.ndarray, T: float, tol: float = CELL_TOL) -> float:
    h = T
    while np.linalg.norm(expm(h * A) - np.eye(A.shape[0]), 2) > tol:
        h /= 2.0
    return h


def build_jump_system(spec: OperatorSpec, schedule: PerturbationSchedule, epsilon: float,
                      cell_tol: float = CELL_TOL) -> JumpSystem:
    """Cells: schedule breakpoints plus a uniform refinement with ``|exp(hA) - I| <= cell_tol``."""
    if not epsilon > 0.0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if schedule.N != spec.N:
        raise ValidationError(f"schedule is {schedule.N}-dimensional, operator is {spec.N}")
    T = schedule.horizon
    h = _refinement_step(spec.A, T, cell_tol)
    n = int(np.ceil(T / h - 1e-12))
    edges = np.union1d(np.linspace(0.0, T, n + 1), schedule.breakpoints)
    mids = 0.5 * (edges[:-1] + edges[1:])
    roots = np.array([psd_sqrt(S) for S in schedule.values])
    factors = expm_batch(spec.A, mids) @ roots[schedule.piece_index(mids)]
    lam = epsilon ** -2
    entries = []
    for L in factors:
        scale = max(np.abs(L).max(), 1e-300)
        cols = [(lam, epsilon * L[:, i]) for i in range(spec.N)
                if np.abs(L[:, i]).max() > 1e-14 * scale]
        entries.append(tuple(cols))
    return JumpSystem(float(epsilon), edges, factors, tuple(entries))


def apply_J(system: JumpSystem, phi: Callable, t: float, x) -> float:
    """``sum_i lam [phi(x + l_i) + phi(x - l_i) - 2 phi(x)]`` at the cell containing ``t``.

    Arguments are passed to ``phi`` in extended precision to limit the
    cancellation in the second difference.
    """
    x = np.asarray(x, dtype=np.longdouble)
    total = np.longdouble(0.0)
    p0 = phi(x)
    for lam, l in system.entries[int(system.cell_index(t))]:
        l = np.asarray(l, dtype=np.longdouble)
        total += np.longdouble(lam) * (phi(x + l) + phi(x - l) - 2 * p0)
    return float(total)


@dataclass(frozen=True)
class PoissonPath:
    """Merged compound-Poisson path ``X`` with ``X(0) = 0``."""

    horizon: float
    times: np.ndarray       # (n,), strictly increasing in (0, horizon]
    jumps: np.ndarray       # (n, N)

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def X(self, s):
        """Cumulative displacement at time(s) ``s`` (right-continuous)."""
        s = np.asarray(s, dtype=float)
        cum = np.vstack([np.zeros((1, self.jumps.shape[1])), np.cumsum(self.jumps, axis=0)])
        return cum[np.searchsorted(self.times, s, side="right")]


def sample_compound_shift(system: JumpSystem, t: float, rng: np.random.Generator) -> PoissonPath:
    """Independent clocks of intensity ``lam`` for every entry and sign on ``[0, t]``."""
    if t < 0.0 or t > system.cell_edges[-1] * (1 + 1e-12):
        raise ValidationError(f"time {t} outside [0, {system.cell_edges[-1]}]")
    times, jumps = [], []
    edges = system.cell_edges
    for c in range(len(system.factors)):
        lo, hi = edges[c], min(edges[c + 1], t)
        if hi <= lo:
            break
        for lam, l in system.entries[c]:
            for sign in (1.0, -1.0):
                n = rng.poisson(lam * (hi - lo))
                if n:
                    times.append(rng.uniform(lo, hi, size=n))
                    jumps.append(np.tile(sign * l, (n, 1)))
    if not times:
        return PoissonPath(float(t), np.zeros(0), np.zeros((0, system.N)))
    times = np.concatenate(times)
    jumps = np.concatenate(jumps)
    order = np.argsort(times, kind="stable")
    return PoissonPath(float(t), times[order], jumps[order])


def sample_poisson_times(lam: float, t: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted jump times of a scalar Poisson process of intensity ``lam`` on ``[0, t]``."""
    return np.sort(rng.uniform(0.0, t, size=rng.poisson(lam * t)))


class JumpIncrementSampler:
    """Draws ``X(t) - X(s_k)`` at quadrature nodes without materialising jump times.

    On a partition refining the cells and the nodes, the jump vectors are
    constant on each interval, so the net displacement over an interval is
    ``sum_i (P_i^+ - P_i^-) l_i`` with independent Poisson counts.  This
    has the same law as reading the increments off ``sample_compound_shift``.
    """

    def __init__(self, system: JumpSystem, nodes, t: float):
        self.system = system
        nodes = np.asarray(nodes, dtype=float)
        edges = system.cell_edges
        grid = np.union1d(np.concatenate([edges[edges < t], [t]]), nodes)
        self.grid = grid[grid <= t]
        self.dt = np.diff(self.grid)
        self.cells = system.cell_index(self.grid[:-1])
        self.index = np.searchsorted(self.grid, nodes)
        self.active = np.array([c for c in range(len(self.dt)) if system.entries[self.cells[c]]],
                               dtype=int)
        if len(self.active):
            self.mats = [system.jump_matrix(self.cells[j]) for j in self.active]
            self.means = system.intensity * self.dt[self.active]

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        N, K = self.system.N, len(self.index)
        if not len(self.active):
            return np.zeros((n, K, N))
        contrib = np.zeros((n, len(self.dt), N))
        for a, j in enumerate(self.active):
            size = (n, len(self.mats[a]))
            net = rng.poisson(self.means[a], size) - rng.poisson(self.means[a], size)
            contrib[:, j] = net @ self.mats[a]
        tail = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]
        tail = np.concatenate([tail, np.zeros((n, 1, N))], axis=1)
        return tail[:, self.index]


# ---------------------------------------------------------------------------
# solvers

def _node_smoothing(spec, setup, t, f):
    """Per-node Gaussian-smoothed source terms (inner expectation in closed form)."""
    if spec.alpha != 2.0:
        raise ValidationError("inner='exact' is available for alpha = 2 only")
    out = []
    for k, s in enumerate(setup.nodes):
        C = setup.back[k] @ (2.0 * ou_covariance(spec, s, t)) @ setup.back[k].T
        terms = [getattr(g, "gaussian", g) for g in f.terms_at(s)]
        out.append(gaussian_smoothed_terms(terms, 0.5 * (C + C.T)))
    return out


def _prepare(spec, schedule, f, epsilon, t, x, mc, inner, system):
    if inner not in ("sample", "exact"):
        raise ValidationError(f"inner must be 'sample' or 'exact', got {inner!r}")
    if system is None:
        system = build_jump_system(spec, schedule, epsilon)
    breaks = np.union1d(f.breakpoints, schedule.breakpoints)
    setup = duhamel_setup(spec, t, x, mc.n_time, breaks)
    return system, setup, JumpIncrementSampler(system, setup.nodes, t)


def solve_perturbed_batch(spec: OperatorSpec, structure: KalmanStructure,
                          schedule: PerturbationSchedule, f, epsilon: float, t: float, X,
                          mc: MCParams, inner: str = "sample", stream: int = 0,
                          system: Optional[JumpSystem] = None) -> BatchEstimate:
    """``solve_perturbed`` at points ``X (P, N)`` sharing ``t`` and the random draws."""
    _check_time(spec, t)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if f.is_zero() or t == 0.0:
        return BatchEstimate(np.zeros(len(X)), np.zeros(len(X)), mc.samples)
    system, setup, jumps = _prepare(spec, schedule, f, epsilon, t, X, mc, inner, system)
    if inner == "sample":
        ou = OUIntegralSampler(spec, structure, setup.nodes, t, mc.nsteps)

        def kernel(rng, n):
            return duhamel_sum(f, setup, jumps.draw(rng, n) + ou.draw(rng, n))
    else:
        src = _NodeSource(f.N, setup.nodes, _node_smoothing(spec, setup, t, f))

        def kernel(rng, n):
            return duhamel_sum(src, setup, jumps.draw(rng, n))

    mean, se = run_blocks(kernel, mc, stream)
    return BatchEstimate(mean, se, mc.samples)


def solve_perturbed(spec: OperatorSpec, structure: KalmanStructure,
                    schedule: PerturbationSchedule, f, epsilon: float, t: float, x,
                    mc: MCParams, inner: str = "sample", stream: int = 0,
                    system: Optional[JumpSystem] = None) -> Estimate:
    """Monte Carlo estimate of the perturbed solution ``u_eps(t, x)``.

    Per sample: compound-Poisson increments ``X(t) - X(s_k)`` and stochastic
    integrals ``I_{s_k,t}`` at the time nodes, then the midpoint Duhamel sum
    of ``f(s_k, exp(-s_k A)(exp(tA)x + X(t) - X(s_k) + I_{s_k,t}))``.

    ``inner='exact'`` (alpha = 2, Gaussian-bump sources) replaces the draw of
    ``I`` by the closed-form Gaussian average given the jump path.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.N,):
        raise ValidationError(f"probe point has shape {x.shape}, expected ({spec.N},)")
    return solve_perturbed_batch(spec, structure, schedule, f, epsilon, t, x[None], mc, inner,
                                 stream, system)[0]


class _NodeSource:
    """Source whose spatial terms are fixed per quadrature node."""

    def __init__(self, N, nodes, node_terms):
        self.N = N
        self._terms = {float(s): terms for s, terms in zip(nodes, node_terms)}

    def value(self, s, Z):
        out = np.zeros(np.shape(Z)[:-1])
        for g in self._terms[float(s)]:
            out = out + g.value(Z)
        return out


def build_surrogate(spec: OperatorSpec, structure: KalmanStructure,
                    schedule: PerturbationSchedule, f, epsilon: float, t: float,
                    mc: MCParams, inner: str = "exact", stream: int = 0) -> DuhamelField:
    """Smooth Monte Carlo surrogate ``x -> u_eps(t, x)`` with frozen noise.

    The same draws are used at every ``x``, so the surrogate has exact
    gradients and Hessians (sample averages of pulled-back source
    derivatives).  Draws come from ``default_rng([seed, stream, 0])``.
    """
    _check_time(spec, t)
    zero = np.zeros(spec.N)
    system, setup, jumps = _prepare(spec, schedule, f, epsilon, t, zero, mc, inner, None)
    rng = np.random.default_rng([int(mc.seed), int(stream), 0])
    D = jumps.draw(rng, mc.samples)
    if inner == "sample":
        D = D + OUIntegralSampler(spec, structure, setup.nodes, t, mc.nsteps).draw(rng, mc.samples)
        terms = [f.terms_at(s) for s in setup.nodes]
    else:
        terms = _node_smoothing(spec, setup, t, f)
    shifts = np.einsum("kij,mkj->mki", setup.back, D)
    if not np.any(shifts):
        shifts = None
    return DuhamelField(spec.N, setup.weights, setup.flow, terms, shifts)


@dataclass
class SweepTable:
    eps_list: np.ndarray
    probes: list
    values: np.ndarray          # (n_eps, n_probes)
    std_errors: np.ndarray
    deltas: np.ndarray          # (n_eps - 1,)
    delta_sigma: np.ndarray
    decreasing: bool


def epsilon_sweep(spec: OperatorSpec, structure: KalmanStructure,
                  schedule: PerturbationSchedule, f, eps_list: Sequence[float], probes,
                  mc: MCParams, inner: str = "sample", noise_factor: float = 2.0) -> SweepTable:
    """Solve at each ``eps`` and probe; report successive max-probe gaps.

    Probes sharing a time share one set of draws per ``eps``; different
    ``eps`` use independent streams.

    ``decreasing`` holds when every gap is smaller than its predecessor by
    more than ``noise_factor`` combined standard deviations (the standard
    deviation of a gap is taken at its maximising probe).
    """
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) < 2:
        raise ValidationError("epsilon_sweep needs at least two epsilons")
    if np.any(np.diff(eps) >= 0.0):
        raise ValidationError("eps_list must be strictly decreasing")
    P = len(probes)
    vals = np.zeros((len(eps), P))
    ses = np.zeros((len(eps), P))
    groups = {}
    for p, (t, _) in enumerate(probes):
        groups.setdefault(float(t), []).append(p)
    for i, e in enumerate(eps):
        system = build_jump_system(spec, schedule, e)
        for g, (t, members) in enumerate(groups.items()):
            X = np.array([probes[p][1] for p in members], dtype=float)
            est = solve_perturbed_batch(spec, structure, schedule, f, e, t, X, mc, inner,
                                        stream=1000 * i + g, system=system)
            vals[i, members], ses[i, members] = est.values, est.std_errors
    gaps = np.abs(np.diff(vals, axis=0))
    arg = np.argmax(gaps, axis=1)
    deltas = gaps[np.arange(len(arg)), arg]
    sig = np.sqrt(ses[:-1] ** 2 + ses[1:] ** 2)[np.arange(len(arg)), arg]
    ok = all(deltas[j] - deltas[j + 1] > noise_factor * np.hypot(sig[j], sig[j + 1])
             for j in range(len(deltas) - 1))
    return SweepTable(eps, list(probes), vals, ses, deltas, sig, bool(ok))


def transform_T_solve(spec: OperatorSpec, structure: KalmanStructure,
                      schedule: PerturbationSchedule, transform: TimeTransform, f, t: float, x,
                      mc: MCParams, epsilon: float, inner: str = "sample",
                      stream: int = 0) -> Estimate:
    """``v(t, x) = exp(-c_tilde(t)) u(t, x + a_tilde(t))`` with ``u`` solving the
    perturbed problem for the source ``exp(c_tilde(s)) f(s, z - a_tilde(s))``.

    When ``A a_tilde`` vanishes, ``v`` solves the problem with extra drift
    ``<a(t), D>`` and potential ``-c(t)``; in general the transport picks up
    ``A a_tilde(t)`` as well (see the module tests).
    """
    if transform.N != spec.N:
        raise ValidationError("transform dimension does not match the operator")
    x = np.asarray(x, dtype=float)
    if transform.is_identity():
        src, shift, damp = f, 0.0, 1.0
    else:
        src = TransformedSource(f, transform)
        shift = transform.a_tilde(t)
        damp = float(np.exp(-transform.c_tilde(t)))
    est = solve_perturbed(spec, structure, schedule, src, epsilon, t, x + shift, mc, inner, stream)
    return Estimate(damp * est.value, damp * est.std_error, est.samples)


# ---------------------------------------------------------------------------
# elliptic embedding

@dataclass
class EllipticReport:
    T_list: np.ndarray
    residuals: np.ndarray        # max |residual| over probes, per T
    numerators: np.ndarray       # [u]_{C^{alpha+beta}} (T independent)
    denominators: np.ndarray     # sup_t [u/T - g t/T]_{C^beta}
    ratios: np.ndarray
    limit_ratio: float           # [u] / [g]
    probes: np.ndarray


def stationary_operator(spec: OperatorSpec, phi: Callable, x, drift=None, S=None,
                        h: float = 1e-3, quad=None) -> np.ndarray:
    """``Tr(B D^2 phi) + <Ax + a, D phi> + Tr(S D^2 phi)`` by central differences
    (alpha = 2), or with the stable part by radial quadrature over the atoms."""
    from .norms import FracQuad, radial_second_difference

    x = np.atleast_2d(np.asarray(x, dtype=float))
    N = spec.N
    a = np.zeros(N) if drift is None else np.asarray(drift, dtype=float)
    S = np.zeros((N, N)) if S is None else np.asarray(S, dtype=float)
    E = np.eye(N) * h
    f0 = phi(x)
    grad = np.stack([(phi(x + E[j]) - phi(x - E[j])) / (2 * h) for j in range(N)], -1)
    H = np.empty(x.shape[:-1] + (N, N))
    for j in range(N):
        H[..., j, j] = (phi(x + E[j]) - 2 * f0 + phi(x - E[j])) / h ** 2
        for k in range(j + 1, N):
            H[..., j, k] = H[..., k, j] = (phi(x + E[j] + E[k]) - phi(x + E[j] - E[k])
                                           - phi(x - E[j] + E[k]) + phi(x - E[j] - E[k])) / (4 * h * h)
    drift_term = np.einsum("...i,...i->...", x @ spec.A.T + a, grad)
    local = np.einsum("ij,...ij->...", S, H)
    if spec.alpha == 2.0:
        return local + np.einsum("ij,...ij->...", spec.B, H) + drift_term
    sigma = np.zeros((N, spec.d0))
    sigma[:spec.d0] = psd_sqrt(spec.B0)
    atoms, w = spec.spectral.half()
    quad = quad or FracQuad()
    nonlocal_part = 0.0
    for theta, m in zip(atoms, w):
        nonlocal_part = nonlocal_part + m * radial_second_difference(
            phi, x, sigma @ theta, spec.alpha / 2.0, quad)[0]
    return local + nonlocal_part + drift_term


def elliptic_embed_check(spec: OperatorSpec, structure: KalmanStructure, g, u_candidate,
                         T_list, probes, drift=None, S=None, beta: float = 0.5,
                         grid=None, n_time: int = 32) -> EllipticReport:
    """Check that ``v(t, x) = u(x) t/T`` solves the integral-in-time equation with
    ``f(t, x) = u(x)/T - g(x) t/T`` for each horizon ``T``.

    The residual ``v(T, x) - int_0^T [f(s, x) + L v(s, x)] ds`` is evaluated
    at the probes with a Gauss-Legendre rule in ``s`` and the operator by
    central differences.  The Holder ratio
    ``[u]_{C^{alpha+beta}} / sup_t [f(t)]_{C^beta}`` is reported per ``T``;
    its ``T -> infinity`` limit is ``[u] / [g]``.
    """
    from .norms import HolderGrid, holder_seminorm_aniso

    if not is_dilation_invariant(spec.A, structure):
        raise ValidationError("elliptic embedding needs A in the dilation-invariant form A_0")
    T_arr = np.asarray(T_list, dtype=float)
    if np.any(np.diff(T_arr) <= 0.0) or np.any(T_arr <= 0.0):
        raise ValidationError("T_list must be positive and increasing")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    Lu = stationary_operator(spec, u_candidate, probes, drift, S)
    u_p, g_p = u_candidate(probes), g(probes)
    xs, ws = np.polynomial.legendre.leggauss(n_time)
    grid = grid or HolderGrid.around(np.zeros(spec.N), 4.0, 17, structure)
    gamma = spec.alpha + beta
    num = holder_seminorm_aniso(u_candidate, gamma, structure, grid, allow_zygmund=True)
    g_semi = holder_seminorm_aniso(g, beta, structure, grid, allow_zygmund=True)
    residuals, dens = [], []
    for T in T_arr:
        s = 0.5 * T * (xs + 1.0)
        w = 0.5 * T * ws
        integrand = (u_p[None] / T - g_p[None] * s[:, None] / T) + (s[:, None] / T) * Lu[None]
        res = u_p - w @ integrand
        residuals.append(float(np.max(np.abs(res))))
        den = 0.0
        for tt in np.linspace(0.0, T, 5)[1:]:
            def ft(X, tt=tt, T=T):
                return u_candidate(X) / T - g(X) * tt / T
            den = max(den, holder_seminorm_aniso(ft, beta, structure, grid, allow_zygmund=True))
        dens.append(den)
    dens = np.array(dens)
    ratios = np.where(dens > 0, num / np.where(dens > 0, dens, 1.0), 0.0)
    limit = num / g_semi if g_semi > 0 else 0.0
    return EllipticReport(T_arr, np.array(residuals), np.full(len(T_arr), num), dens, ratios,
                          float(limit), probes)
