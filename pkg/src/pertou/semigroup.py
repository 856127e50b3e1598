"""Unperturbed Ornstein-Uhlenbeck ingredients and the Monte Carlo Duhamel solver.

Conventions: the local diffusion ``Tr(B D^2)`` corresponds to Gaussian
increments with covariance ``2 B dt``.  Solutions are computed in the frame
``v(t, y) = u(t, exp(-tA) y)`` where the drift disappears and the noise
enters through ``I_{s,t} = int_s^t exp(rA) sigma dZ_r``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .levy import sample_stable_increment
from .sources import Constant, GaussianBump, SmoothTerm
from .structure import KalmanStructure, OperatorSpec, ValidationError

GL_ORDER = 10
COV_TOL = 1e-13


@dataclass(frozen=True)
class OUKernelParams:
    """Mean map and covariance of ``I_{s,t}`` for the Gaussian case."""

    s: float
    t: float
    mean_map: np.ndarray
    cov: Optional[np.ndarray]


@dataclass(frozen=True)
class MCParams:
    """Monte Carlo controls.

    Samples are processed in blocks of ``block_size``; block ``b`` draws from
    ``default_rng([seed, stream, b])``, so results do not depend on
    ``threads``.
    """

    samples: int = 10_000
    nsteps: int = 128
    n_time: int = 64
    seed: int = 0
    block_size: int = 2048
    threads: int = 1

    def __post_init__(self):
        for name in ("samples", "nsteps", "n_time", "block_size", "threads"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"mc.{name} must be a positive integer")
        if int(self.seed) < 0:
            raise ValidationError("mc.seed must be non-negative")


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    samples: int


def expm_batch(A: np.ndarray, times) -> np.ndarray:
    """``exp(t A)`` for each ``t`` in ``times``; shape ``(len(times), N, N)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return expm(times[:, None, None] * A)


# ---------------------------------------------------------------------------
# Gaussian covariance

_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def adaptive_gl(func: Callable, a: float, b: float, tol: float = COV_TOL, order: int = GL_ORDER,
                max_depth: int = 30):
    """Adaptive Gauss-Legendre for array-valued ``func`` vectorised over nodes.

    ``func(r)`` takes a 1-d array of nodes and returns an array with leading
    axis of the same length.  A panel is accepted when its rule agrees with
    the sum over its two halves to ``tol`` (absolute, scaled by ``max(1, |I|)``).
    """
    x, w = _gauss_legendre(order)

    def rule(lo, hi):
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        return 0.5 * (hi - lo) * np.tensordot(w, func(r), axes=1)

    total = 0.0
    stack = [(a, b, rule(a, b), 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = rule(lo, mid), rule(mid, hi)
        err = np.max(np.abs(left + right - whole))
        if err <= tol * max(1.0, np.max(np.abs(whole))) or depth >= max_depth:
            total = total + left + right
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total


def ou_covariance(spec: OperatorSpec, s: float, t: float, diffusion: Optional[np.ndarray] = None):
    """``M(s, t) = int_s^t exp(rA) B exp(rA)^T dr`` (no factor 2).

    ``diffusion`` replaces ``B`` when given.
    """
    if spec.alpha != 2.0:
        raise ValidationError("ou_covariance applies to the Gaussian case alpha = 2")
    if not 0.0 <= s <= t:
        raise ValidationError(f"need 0 <= s <= t, got s={s}, t={t}")
    Q = spec.B if diffusion is None else np.asarray(diffusion, dtype=float)
    if s == t:
        return np.zeros_like(Q)
    A = spec.A

    def integrand(r):
        E = expm_batch(A, r)
        return E @ Q @ np.swapaxes(E, -1, -2)

    M = adaptive_gl(integrand, s, t)
    return 0.5 * (M + M.T)


def transition_covariance(spec: OperatorSpec, s: float, t: float) -> np.ndarray:
    """``int_s^t exp((t-r)A) B exp((t-r)A)^T dr``, the original-frame counterpart of
    ``ou_covariance``; it satisfies
    ``G(s,t) = exp((t-u)A) G(s,u) exp((t-u)A)^T + G(u,t)``."""
    if spec.alpha != 2.0:
        raise ValidationError("transition_covariance applies to the Gaussian case alpha = 2")
    if not 0.0 <= s <= t:
        raise ValidationError(f"need 0 <= s <= t, got s={s}, t={t}")
    if s == t:
        return np.zeros_like(spec.B)

    def integrand(r):
        E = expm_batch(spec.A, t - r)
        return E @ spec.B @ np.swapaxes(E, -1, -2)

    G = adaptive_gl(integrand, s, t)
    return 0.5 * (G + G.T)


def ou_kernel_params(spec: OperatorSpec, s: float, t: float) -> OUKernelParams:
    cov = 2.0 * ou_covariance(spec, s, t) if spec.alpha == 2.0 else None
    return OUKernelParams(s, t, expm((t - s) * spec.A), cov)


def sqrt_factor(C: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix with small negative eigenvalues clamped."""
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_ou_integral(spec: OperatorSpec, structure: KalmanStructure, s: float, t: float,
                       nsteps: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``I_{s,t} = int_s^t exp(rA) sigma dZ_r``.

    Exact Gaussian draw with covariance ``2 M(s, t)`` when ``alpha == 2``;
    left-endpoint Riemann sum over ``nsteps`` uniform steps otherwise.
    """
    if not 0.0 <= s <= t:
        raise ValidationError(f"invalid interval [{s}, {t}]")
    if nsteps < 1:
        raise ValidationError("nsteps must be at least 1")
    shape = () if size is None else tuple(np.atleast_1d(size))
    N = spec.N
    if s == t:
        return np.zeros(shape + (N,))
    if spec.alpha == 2.0:
        R = sqrt_factor(2.0 * ou_covariance(spec, s, t))
        return rng.standard_normal(shape + (N,)) @ R.T
    r = np.linspace(s, t, nsteps + 1)
    dt = (t - s) / nsteps
    G = expm_batch(spec.A, r[:-1]) @ structure.sigma_factor          # (nsteps, N, d0)
    dZ = sample_stable_increment(spec.spectral, spec.alpha, dt, rng,
                                 size=shape + (nsteps,))              # (..., nsteps, d0)
    return np.einsum("mij,...mj->...i", G, dZ)


class OUIntegralSampler:
    """Joint sampler of ``I_{s_k, t}`` for a set of quadrature nodes ``s_k``.

    Gaussian case: independent exact draws per node (only the marginals
    enter the Duhamel sum).  Stable case: one path on a fine grid containing
    the nodes, with ``I_{s_k,t}`` read off a reverse cumulative sum.
    """

    def __init__(self, spec: OperatorSpec, structure: KalmanStructure, nodes, t: float,
                 nsteps: int):
        self.spec, self.nodes, self.t = spec, np.asarray(nodes, dtype=float), float(t)
        self.N = spec.N
        if spec.alpha == 2.0:
            self.factors = np.stack([sqrt_factor(2.0 * ou_covariance(spec, s, t))
                                     for s in self.nodes])
        else:
            grid = np.union1d(np.linspace(0.0, t, nsteps + 1), self.nodes)
            self.dt = np.diff(grid)
            self.G = expm_batch(spec.A, grid[:-1]) @ structure.sigma_factor
            self.index = np.searchsorted(grid, self.nodes)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Array of shape ``(n, K, N)`` in the drift-free frame."""
        K = len(self.nodes)
        if self.spec.alpha == 2.0:
            Zn = rng.standard_normal((n, K, self.N))
            return np.einsum("kij,nkj->nki", self.factors, Zn)
        mu, alpha = self.spec.spectral, self.spec.alpha
        contrib = np.empty((n, len(self.dt), self.N))
        for m, dt in enumerate(self.dt):
            dZ = sample_stable_increment(mu, alpha, dt, rng, size=n)
            contrib[:, m] = dZ @ self.G[m].T
        tail = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]
        tail = np.concatenate([tail, np.zeros((n, 1, self.N))], axis=1)
        return tail[:, self.index]


# ---------------------------------------------------------------------------
# time quadrature

def time_panels(t: float, n_time: int, breaks=()):
    """Midpoint nodes and weights on ``[0, t]`` with panels aligned to ``breaks``.

    Nodes are distributed over the segments between breakpoints in
    proportion to their length, at least one per segment.
    """
    if t <= 0.0:
        return np.zeros(0), np.zeros(0)
    b = np.asarray(breaks, dtype=float)
    edges = np.unique(np.concatenate([[0.0, t], b[(b > 0.0) & (b < t)]]))
    lengths = np.diff(edges)
    counts = np.maximum(1, np.round(n_time * lengths / t).astype(int))
    nodes, weights = [], []
    for a, L, c in zip(edges[:-1], lengths, counts):
        h = L / c
        nodes.append(a + h * (np.arange(c) + 0.5))
        weights.append(np.full(c, h))
    return np.concatenate(nodes), np.concatenate(weights)


# ---------------------------------------------------------------------------
# Monte Carlo engine

def _block_stats(x: np.ndarray):
    n = x.shape[0]
    mean = x.mean(axis=0)
    return n, mean, ((x - mean) ** 2).sum(axis=0)


def _merge(a, b):
    na, ma, Ma = a
    nb, mb, Mb = b
    n = na + nb
    d = mb - ma
    return n, ma + d * (nb / n), Ma + Mb + d * d * (na * nb / n)


def _tree_merge(stats):
    while len(stats) > 1:
        nxt = [_merge(stats[i], stats[i + 1]) for i in range(0, len(stats) - 1, 2)]
        if len(stats) % 2:
            nxt.append(stats[-1])
        stats = nxt
    return stats[0]


def run_blocks(kernel: Callable, mc: MCParams, stream: int = 0):
    """Mean and standard error of ``kernel(rng, n)`` over ``mc.samples`` draws.

    ``kernel`` returns an array with leading axis ``n``.  Block statistics are
    merged pairwise in block order, so the output is bitwise reproducible
    for any thread count.
    """
    nb = -(-mc.samples // mc.block_size)
    sizes = [min(mc.block_size, mc.samples - b * mc.block_size) for b in range(nb)]

    def one(b):
        rng = np.random.default_rng([int(mc.seed), int(stream), b])
        return _block_stats(np.asarray(kernel(rng, sizes[b]), dtype=float))

    if mc.threads > 1 and nb > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            stats = list(pool.map(one, range(nb)))
    else:
        stats = [one(b) for b in range(nb)]
    n, mean, M2 = _tree_merge(stats)
    var = M2 / (n - 1) if n > 1 else np.zeros_like(M2)
    return mean, np.sqrt(var / n)


# ---------------------------------------------------------------------------
# Duhamel solver

@dataclass
class DuhamelSetup:
    """Quadrature nodes and the deterministic part of the Duhamel integrand at (t, X)."""

    nodes: np.ndarray
    weights: np.ndarray
    base: np.ndarray       # (K, P, N): exp((t - s_k) A) x_p
    back: np.ndarray       # (K, N, N): exp(-s_k A)
    flow: np.ndarray       # (K, N, N): exp((t - s_k) A)


def duhamel_setup(spec: OperatorSpec, t: float, x, n_time: int, breaks=()) -> DuhamelSetup:
    """``x`` is one point ``(N,)`` or a batch ``(P, N)`` sharing the time ``t``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.ndim != 2 or X.shape[1] != spec.N:
        raise ValidationError(f"probe points have shape {np.shape(x)}, expected (..., {spec.N})")
    nodes, weights = time_panels(t, n_time, breaks)
    flow = expm_batch(spec.A, t - nodes)
    back = expm_batch(spec.A, -nodes)
    base = np.einsum("kij,pj->kpi", flow, X)
    return DuhamelSetup(nodes, weights, base, back, flow)


def duhamel_sum(f, setup: DuhamelSetup, shifts: np.ndarray) -> np.ndarray:
    """``sum_k w_k f(s_k, base_kp + exp(-s_k A) shift_k)``; shifts ``(n, K, N)``, result ``(n, P)``."""
    n, P = shifts.shape[0], setup.base.shape[1]
    total = np.zeros((n, P))
    for k, s in enumerate(setup.nodes):
        Z = setup.base[k][None, :, :] + (shifts[:, k, :] @ setup.back[k].T)[:, None, :]
        total += setup.weights[k] * f.value(s, Z)
    return total


def _check_time(spec, t):
    if not 0.0 <= t <= spec.horizon_T * (1 + 1e-12):
        raise ValidationError(f"time {t} outside [0, T={spec.horizon_T}]")


@dataclass(frozen=True)
class BatchEstimate:
    """Estimates at several probes sharing one time and one set of draws."""

    values: np.ndarray
    std_errors: np.ndarray
    samples: int

    def __getitem__(self, p) -> Estimate:
        return Estimate(float(self.values[p]), float(self.std_errors[p]), self.samples)

    def __len__(self):
        return len(self.values)


def solve_unperturbed_batch(spec: OperatorSpec, structure: KalmanStructure, f, t: float, X,
                            mc: MCParams, stream: int = 0) -> BatchEstimate:
    """``solve_unperturbed`` at points ``X (P, N)`` with common random numbers."""
    _check_time(spec, t)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if f.is_zero() or t == 0.0:
        return BatchEstimate(np.zeros(len(X)), np.zeros(len(X)), mc.samples)
    setup = duhamel_setup(spec, t, X, mc.n_time, f.breakpoints)
    sampler = OUIntegralSampler(spec, structure, setup.nodes, t, mc.nsteps)

    def kernel(rng, n):
        return duhamel_sum(f, setup, sampler.draw(rng, n))

    mean, se = run_blocks(kernel, mc, stream)
    return BatchEstimate(mean, se, mc.samples)


def solve_unperturbed(spec: OperatorSpec, structure: KalmanStructure, f, t: float, x,
                      mc: MCParams, stream: int = 0) -> Estimate:
    """Monte Carlo estimate of ``u(t, x) = int_0^t E f(s, exp(-sA)(exp(tA)x + I_{s,t})) ds``.

    The time integral is a midpoint rule with ``mc.n_time`` panels aligned to
    the source breakpoints; the expectation is a mean over ``mc.samples``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.N,):
        raise ValidationError(f"probe point has shape {x.shape}, expected ({spec.N},)")
    return solve_unperturbed_batch(spec, structure, f, t, x[None], mc, stream)[0]


# ---------------------------------------------------------------------------
# Gaussian smoothing and Duhamel fields

def gaussian_smoothed_terms(terms, cov: np.ndarray):
    """Terms of ``z -> E g(z + G)`` with ``G ~ N(0, cov)`` for Gaussian-bump or constant ``g``."""
    out = []
    for g in terms:
        if isinstance(g, GaussianBump):
            W = g.cov + cov
            scale = np.sqrt(np.linalg.det(g.cov) / np.linalg.det(W))
            out.append(GaussianBump(g.amplitude * scale, g.center, W))
        elif isinstance(g, Constant):
            out.append(g)
        else:
            raise ValidationError(
                f"closed-form Gaussian smoothing needs gaussian_bump or constant terms, "
                f"got {type(g).__name__}")
    return out


class DuhamelField(SmoothTerm):
    """``x -> sum_k w_k mean_m sum_g g(E_k x + shift_{m,k})``.

    With ``shifts=None`` the inner mean is absent (deterministic field).
    Gradients and Hessians follow from the chain rule, so the field can be
    fed to the seminorm estimators with analytic derivatives.
    """

    chunk = 256

    def __init__(self, N, weights, flows, node_terms, shifts=None):
        self.N = int(N)
        self.weights = np.asarray(weights, dtype=float)
        self.flows = np.asarray(flows, dtype=float)
        self.node_terms = [list(t) for t in node_terms]
        self.shifts = None if shifts is None else np.asarray(shifts, dtype=float)
        self._all_gaussian = all(isinstance(g, GaussianBump)
                                 for terms in self.node_terms for g in terms)

    @property
    def samples(self) -> int:
        return 1 if self.shifts is None else self.shifts.shape[0]

    def _points(self, k, X):
        Z = X @ self.flows[k].T
        if self.shifts is None:
            return Z[:, None, :]
        return Z[:, None, :] + self.shifts[None, :, k, :]

    def _values_gaussian(self, X):
        """Order-0 per-sample values when every term is a Gaussian bump.

        Expands the quadratic form so the sample dimension enters through one
        matrix product per node and term.
        """
        out = np.zeros((X.shape[0], self.samples))
        for k, terms in enumerate(self.node_terms):
            base = X @ self.flows[k].T
            D = None if self.shifts is None else self.shifts[:, k, :]
            for g in terms:
                a = base - g.center
                Pa = a @ g.prec
                q = np.einsum("pi,pi->p", a, Pa)[:, None]
                if D is not None:
                    PD = D @ g.prec
                    q = q + 2.0 * (Pa @ D.T) + np.einsum("mi,mi->m", D, PD)[None, :]
                out += (self.weights[k] * g.amplitude) * np.exp(-0.5 * np.maximum(q, 0.0))
        return out

    def _apply(self, X, order):
        X = np.asarray(X, dtype=float)
        if order == 0 and self._all_gaussian:
            lead = X.shape[:-1]
            X = X.reshape(-1, self.N)
            out = np.concatenate([self._values_gaussian(X[lo:lo + 4 * self.chunk])
                                  for lo in range(0, X.shape[0], 4 * self.chunk)] or
                                 [np.zeros((0, self.samples))])
            return out, lead
        lead = X.shape[:-1]
        X = X.reshape(-1, self.N)
        tail = ((), (self.N,), (self.N, self.N))[order]
        out = np.zeros((X.shape[0], self.samples) + tail)
        for lo in range(0, X.shape[0], self.chunk):
            Xc = X[lo:lo + self.chunk]
            acc = np.zeros((Xc.shape[0], self.samples) + tail)
            for k, terms in enumerate(self.node_terms):
                if not terms:
                    continue
                Z = self._points(k, Xc)
                E = self.flows[k]
                for g in terms:
                    if order == 0:
                        acc += self.weights[k] * g.value(Z)
                    elif order == 1:
                        acc += self.weights[k] * (g.grad(Z) @ E)
                    else:
                        acc += self.weights[k] * (E.T @ g.hess(Z) @ E)
            out[lo:lo + self.chunk] = acc
        return out, lead + tail

    def per_sample(self, X):
        """Per-sample values, shape ``lead + (samples,)``."""
        vals, shape = self._apply(X, 0)
        return vals.reshape(shape + (self.samples,))

    def value(self, X):
        vals, shape = self._apply(X, 0)
        return vals.mean(axis=1).reshape(shape)

    def value_and_se(self, X):
        vals, shape = self._apply(X, 0)
        M = self.samples
        se = vals.std(axis=1, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(vals.shape[0])
        return vals.mean(axis=1).reshape(shape), se.reshape(shape)

    def grad(self, X):
        vals, shape = self._apply(X, 1)
        return vals.mean(axis=1).reshape(shape)

    def hess(self, X):
        vals, shape = self._apply(X, 2)
        return vals.mean(axis=1).reshape(shape)

    def per_sample_derivative(self, X, order: int, idx):
        """Per-sample derivatives of order 0, 1 or 2 restricted to coordinates ``idx``.

        Shape ``(P, samples, m)`` for ``P`` points.
        """
        vals, _ = self._apply(np.atleast_2d(X), order)
        if order == 0:
            return vals[..., None]
        if order == 1:
            return vals[..., idx]
        H = vals[..., idx, :][..., idx]
        return H.reshape(H.shape[:2] + (-1,))

    def sup_abs(self):
        return float(sum(w * sum(g.sup_abs() for g in terms)
                         for w, terms in zip(self.weights, self.node_terms)))
