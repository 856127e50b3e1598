"""Anisotropic seminorm estimators.

* directional fractional Laplacians
  ``p.v. int [phi(x + E_i z) - phi(x)] |z|^-(d_i + 2 beta) dz`` (no normalising
  constant; on ``cos(lam x)`` the eigenvalue is ``-c(beta) |lam|^(2 beta)``
  with ``c(beta) = 2 int_0^inf (1 - cos r) r^(-1-2beta) dr``);
* Zygmund-Holder seminorms along the blocks, as grid lower bounds;
* the Sobolev seminorm ``(sum_i ||Delta^{alpha_i}_{x_i} phi||_p^p)^(1/p)`` on
  a space-time lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .levy import stable_constant
from .structure import KalmanStructure, ValidationError

FD_STEP = 1e-4


@dataclass(frozen=True)
class FracQuad:
    """Radial quadrature controls.

    ``[0, r_min]`` uses the second-order Taylor term; ``[r_min, 1]`` has
    ``per_decade`` log-spaced Gauss-Legendre panels; ``[1, r_max]`` has
    panels of width at most ``max_width``.
    """

    r_min: float = 1e-4
    r_max: float = 1e3
    order: int = 10
    per_decade: int = 4
    max_width: float = 1.0
    n_angles: int = 64

    def __post_init__(self):
        if not 0.0 < self.r_min < 1.0 < self.r_max:
            raise ValidationError("need 0 < r_min < 1 < r_max")


@dataclass(frozen=True)
class NormConfig:
    alpha: float
    beta: float
    p: float = 2.0
    quad: FracQuad = field(default_factory=FracQuad)

    def __post_init__(self):
        if not 0.0 < self.beta < min(1.0, self.alpha):
            raise ValidationError(f"beta must lie in (0, min(1, alpha)), got {self.beta}")
        if not self.p > 1.0:
            raise ValidationError(f"p must exceed 1, got {self.p}")

    @property
    def gamma(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class RatioReport:
    numerator: float
    denominator: float
    ratio: float
    error: float = 0.0
    provenance: dict = field(default_factory=dict)

    @classmethod
    def of(cls, numerator, denominator, error=0.0, **provenance):
        ratio = numerator / denominator if denominator > 0 else float("nan")
        return cls(float(numerator), float(denominator), float(ratio), float(error), provenance)


# ---------------------------------------------------------------------------
# radial integrals

@lru_cache(maxsize=32)
def _radial_rule(r_min, r_max, order, per_decade, max_width):
    x, w = np.polynomial.legendre.leggauss(order)
    n_log = max(1, int(np.ceil(per_decade * np.log10(1.0 / r_min))))
    edges = list(np.geomspace(r_min, 1.0, n_log + 1))
    n_lin = int(np.ceil((r_max - 1.0) / max_width))
    edges += list(np.linspace(1.0, r_max, n_lin + 1)[1:])
    edges = np.array(edges)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a)[:, None] * x + 0.5 * (b + a)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    return nodes, weights


def radial_rule(quad: FracQuad, r_max: Optional[float] = None):
    r_max = quad.r_max if r_max is None else r_max
    return _radial_rule(quad.r_min, float(r_max), quad.order, quad.per_decade, quad.max_width)


def radial_second_difference(phi: Callable, x, v, beta: float, quad: FracQuad,
                             sup_abs: Optional[float] = None):
    """``int_0^inf [phi(x + r v) + phi(x - r v) - 2 phi(x)] r^(-1-2beta) dr``.

    Returns ``(value, error_bar)``.  Beyond ``r_max`` the values
    ``phi(x +- r v)`` are replaced by their mean over ``[r_max / 2, r_max]``,
    which is exact for constants and for functions that decay or oscillate
    along the ray.  The error bar ``2 sup|phi| r_max^(-2beta) / (2beta)``
    bounds the tail whatever ``phi`` does there.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    f0 = phi(x)
    nodes, weights = radial_rule(quad)
    acc = np.zeros(np.shape(f0))
    far, far_w = np.zeros(np.shape(f0)), 0.0
    for r, w in zip(nodes, weights):
        pair = phi(x + r * v) + phi(x - r * v)
        acc = acc + w * r ** (-1.0 - 2 * beta) * (pair - 2 * f0)
        if r >= 0.5 * quad.r_max:
            far, far_w = far + w * pair, far_w + w
    rm = quad.r_min
    d2 = phi(x + rm * v) + phi(x - rm * v) - 2 * f0
    acc = acc + d2 * rm ** (-2 * beta) / (2.0 - 2 * beta)
    tail = quad.r_max ** (-2 * beta) / (2 * beta)
    acc = acc + (far / far_w - 2 * f0) * tail
    sup = np.max(np.abs(f0)) if sup_abs is None else sup_abs
    return acc, 2.0 * sup * tail


def _sphere_rule(d: int, n: int):
    """Directions and weights for half of ``int_{S^{d-1}} dtheta``."""
    if d == 1:
        return np.array([[1.0]]), np.array([1.0])
    if d == 2:
        ang = np.pi * np.arange(n) / n
        return np.column_stack([np.cos(ang), np.sin(ang)]), np.full(n, np.pi / n)
    if d == 3:
        i = np.arange(2 * n) + 0.5
        ph = np.arccos(1 - 2 * i / (2 * n))
        th = np.pi * (1 + 5 ** 0.5) * i
        dirs = np.column_stack([np.cos(th) * np.sin(ph), np.sin(th) * np.sin(ph), np.cos(ph)])
        return dirs, np.full(2 * n, 0.5 * 4 * np.pi / (2 * n))
    raise ValidationError(f"directional fractional Laplacian supports block dims <= 3, got {d}")


def frac_laplacian_dir(phi: Callable, i: int, beta: float, structure: KalmanStructure,
                       x, quad: Optional[FracQuad] = None, return_error: bool = False):
    """Fractional Laplacian of order ``beta`` along block ``i`` at points ``x``."""
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    quad = quad or FracQuad()
    x = np.asarray(x, dtype=float)
    sl = structure.block_slices()[i]
    d = sl.stop - sl.start
    dirs, w = _sphere_rule(d, quad.n_angles)
    sup = phi.sup_abs() if hasattr(phi, "sup_abs") else None
    val, err = 0.0, 0.0
    for theta, wt in zip(dirs, w):
        v = np.zeros(structure.N)
        v[sl] = theta
        a, e = radial_second_difference(phi, x, v, beta, quad, sup)
        val, err = val + wt * a, err + wt * e
    return (val, err) if return_error else val


def frac_constant(beta: float) -> float:
    """``c(beta) = 2 int_0^inf (1 - cos r) r^(-1-2beta) dr`` (equals ``pi`` at 1/2)."""
    return 2.0 * stable_constant(2.0 * beta)


# ---------------------------------------------------------------------------
# Holder seminorms

@dataclass(frozen=True)
class HolderGrid:
    """Product lattice: one uniform axis per coordinate."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in axes:
            if a.ndim != 1 or len(a) < 2:
                raise ValidationError("each grid axis needs at least two nodes")
            if not np.allclose(np.diff(a), a[1] - a[0], rtol=1e-9, atol=0.0):
                raise ValidationError("grid axes must be uniform")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_blocks(cls, structure: KalmanStructure, center, extents, nodes) -> "HolderGrid":
        """Per-block half-widths ``extents[i]`` and node counts ``nodes[i]``."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (structure.N,))
        axes = []
        for i, sl in enumerate(structure.block_slices()):
            for j in range(sl.start, sl.stop):
                axes.append(np.linspace(center[j] - extents[i], center[j] + extents[i], nodes[i]))
        return cls(tuple(axes))

    @classmethod
    def around(cls, center, half_width, n, structure: KalmanStructure) -> "HolderGrid":
        k = len(structure.dims)
        return cls.from_blocks(structure, center, [half_width] * k, [n] * k)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def refine(self) -> "HolderGrid":
        """Nested refinement ``n -> 2n - 1`` on every axis."""
        return HolderGrid(tuple(np.linspace(a[0], a[-1], 2 * len(a) - 1) for a in self.axes))


def split_exponent(e: float, allow_zygmund: bool = False):
    """``e = l + beta`` with ``l`` integer and ``beta`` in ``(0, 1]``."""
    if not 0.0 < e < 3.0:
        raise ValidationError(f"block exponent {e} outside (0, 3)")
    if abs(e - round(e)) < 1e-12:
        if not allow_zygmund:
            raise ValidationError(
                f"block exponent {e} is an integer; the split l + beta is ambiguous. "
                "Pass allow_zygmund=True to use the Zygmund split beta = 1")
        return int(round(e)) - 1, 1.0
    l = int(np.floor(e))
    return l, e - l


def _derivative_field(phi, X, order: int, sl: slice, h: float = FD_STEP):
    """Order-``order`` derivatives of ``phi`` along block coordinates ``sl`` at ``X``.

    Returns shape ``X.shape[:-1] + (m,)`` with ``m`` the number of components.
    """
    N = X.shape[-1]
    idx = list(range(sl.start, sl.stop))
    if order == 0:
        return np.asarray(phi(X))[..., None]
    analytic = hasattr(phi, "grad") and hasattr(phi, "hess")
    if order == 1:
        if analytic:
            return phi.grad(X)[..., idx]
        E = np.eye(N) * h
        return np.stack([(phi(X + E[j]) - phi(X - E[j])) / (2 * h) for j in idx], -1)
    if analytic:
        H = phi.hess(X)[..., idx, :][..., idx]
        return H.reshape(X.shape[:-1] + (-1,))
    E = np.eye(N) * h
    f0 = phi(X)
    comps = []
    for j in idx:
        for k in idx:
            if j == k:
                comps.append((phi(X + E[j]) - 2 * f0 + phi(X - E[j])) / h ** 2)
            else:
                comps.append((phi(X + E[j] + E[k]) - phi(X + E[j] - E[k])
                              - phi(X - E[j] + E[k]) + phi(X - E[j] - E[k])) / (4 * h * h))
    return np.stack(comps, -1)


def _offsets(shape_block):
    """Index offsets in the block sub-lattice, one per +-pair."""
    ranges = [range(-(n - 1), n) for n in shape_block]
    for k in itertools.product(*ranges):
        nz = [c for c in k if c != 0]
        if nz and nz[0] > 0:
            yield np.array(k)


def _shifted(F, axes, k):
    """Index views ``(base, moved)`` with ``moved = base + k`` along ``axes``."""
    base, moved = [slice(None)] * F.ndim, [slice(None)] * F.ndim
    for ax, kk in zip(axes, k):
        n = F.shape[ax]
        if kk >= 0:
            base[ax], moved[ax] = slice(0, n - kk), slice(kk, n)
        else:
            base[ax], moved[ax] = slice(-kk, n), slice(0, n + kk)
    return tuple(base), tuple(moved)


@dataclass(frozen=True)
class HolderDetails:
    value: float
    blocks: tuple
    exponents: tuple
    error: float = 0.0


def holder_seminorm_details(phi, gamma: float, structure: KalmanStructure, grid: HolderGrid,
                            allow_zygmund: bool = False, fd_step: float = FD_STEP) -> HolderDetails:
    """Per-block grid lower bounds of the anisotropic seminorm of order ``gamma``.

    Block ``i`` uses the exponent ``gamma / (1 + alpha i) = l + beta``: the
    largest difference quotient (``beta < 1``) or symmetric second-difference
    quotient (``beta = 1``) of the order-``l`` block derivatives over lattice
    pairs that differ only in block ``i``.  If ``phi`` exposes
    ``per_sample_derivative``, a first-order Monte Carlo error bar is attached.
    """
    if grid.shape and len(grid.axes) != structure.N:
        raise ValidationError(f"grid has {len(grid.axes)} axes, structure has N={structure.N}")
    X = grid.points()
    h = grid.spacing
    blocks, exps, err2 = [], [], 0.0
    for i, sl in enumerate(structure.block_slices()):
        e = gamma / (1.0 + structure.alpha * i)
        l, beta = split_exponent(e, allow_zygmund)
        F = _derivative_field(phi, X, l, sl, fd_step)
        axes = list(range(sl.start, sl.stop))
        best, arg = 0.0, None
        for k in _offsets([grid.shape[a] for a in axes]):
            dist = np.linalg.norm(k * h[sl])
            if beta < 1.0:
                b, m = _shifted(F, axes, k)
                diff = F[m] - F[b]
            else:
                # centre points need both x + h and x - h on the lattice
                ctr, plus, minus = _centre_views(F, axes, k)
                if ctr is None:
                    continue
                diff = F[plus] + F[minus] - 2 * F[ctr]
            q = np.linalg.norm(diff, axis=-1) / dist ** beta
            j = int(np.argmax(q))
            if q.flat[j] > best:
                best, arg = float(q.flat[j]), (k, j, beta, l)
        blocks.append(best)
        exps.append(e)
        if arg is not None and getattr(phi, "samples", 1) > 1:
            err2 += _mc_error(phi, X, sl, axes, grid, arg) ** 2
    return HolderDetails(float(sum(blocks)), tuple(blocks), tuple(exps), float(np.sqrt(err2)))


def _centre_views(F, axes, k):
    ctr, plus, minus = [slice(None)] * F.ndim, [slice(None)] * F.ndim, [slice(None)] * F.ndim
    for ax, kk in zip(axes, k):
        a = abs(int(kk))
        n = F.shape[ax]
        if n - 2 * a <= 0:
            return None, None, None
        ctr[ax] = slice(a, n - a)
        plus[ax] = slice(a + kk, n - a + kk)
        minus[ax] = slice(a - kk, n - a - kk)
    return tuple(ctr), tuple(plus), tuple(minus)


def _mc_error(phi, X, sl, axes, grid, arg):
    """Standard error of the maximising quotient from per-sample derivatives."""
    k, j, beta, l = arg
    h = grid.spacing
    dist = np.linalg.norm(k * h[sl])
    shape = X.shape[:-1]
    if beta < 1.0:
        b, m = _shifted(np.empty(shape + (1,)), axes, k)
        pts = [X[m].reshape(-1, X.shape[-1])[j], X[b].reshape(-1, X.shape[-1])[j]]
        coef = [1.0, -1.0]
    else:
        ctr, plus, minus = _centre_views(np.empty(shape + (1,)), axes, k)
        flat = lambda v: X[v].reshape(-1, X.shape[-1])[j]
        pts = [flat(plus), flat(minus), flat(ctr)]
        coef = [1.0, 1.0, -2.0]
    idx = list(range(sl.start, sl.stop))
    vals = sum(c * phi.per_sample_derivative(p[None], l, idx)[0] for c, p in zip(coef, pts))
    mean = vals.mean(axis=0)
    nrm = np.linalg.norm(mean)
    if nrm == 0.0:
        return 0.0
    proj = (vals @ mean) / nrm / dist ** beta
    return float(proj.std(ddof=1) / np.sqrt(len(proj)))


def holder_seminorm_aniso(phi, gamma: float, structure: KalmanStructure, grid: HolderGrid,
                          allow_zygmund: bool = False, fd_step: float = FD_STEP) -> float:
    """Sum over blocks of the grid lower bounds (see ``holder_seminorm_details``)."""
    return holder_seminorm_details(phi, gamma, structure, grid, allow_zygmund, fd_step).value


def holder_1d_gaussian(beta: float) -> float:
    """``[G]_beta`` of ``G(z) = exp(-z^2/2)`` on the line, by 2-parameter optimisation.

    ``|G(a + d) - G(a)| / d^beta`` is maximised over ``(a, d)`` by Nelder-Mead
    started from the best points of a coarse grid.
    """
    from scipy.optimize import minimize

    if not 0.0 < beta <= 1.0:
        raise ValidationError(f"beta must lie in (0, 1], got {beta}")
    G = lambda z: np.exp(-0.5 * z * z)

    def neg(p):
        a, d = p[0], abs(p[1]) + 1e-300
        return -abs(G(a + d) - G(a)) / d ** beta

    a0 = np.linspace(-3, 3, 61)
    d0 = np.geomspace(1e-3, 10, 80)
    A, D = np.meshgrid(a0, d0, indexing="ij")
    vals = np.abs(G(A + D) - G(A)) / D ** beta
    best = -np.inf
    for idx in np.argsort(vals.ravel())[-5:]:
        p0 = [A.ravel()[idx], D.ravel()[idx]]
        res = minimize(neg, p0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        best = max(best, -res.fun)
    return float(best)


def holder_separable_gaussian(amplitude: float, widths: Sequence[float], gamma: float,
                              structure: KalmanStructure) -> float:
    """Anisotropic seminorm of ``amp * prod_j exp(-x_j^2 / (2 w_j^2))`` for 1-d blocks and
    block exponents below 1: ``amp * sum_i w_i^(-e_i) [G]_{e_i}``."""
    if any(d != 1 for d in structure.dims):
        raise ValidationError("closed form available for one-dimensional blocks only")
    total = 0.0
    for i, w in enumerate(widths):
        e = gamma / (1.0 + structure.alpha * i)
        if not e < 1.0:
            raise ValidationError("closed form needs block exponents below 1")
        total += abs(amplitude) * w ** (-e) * holder_1d_gaussian(e)
    return float(total)


# ---------------------------------------------------------------------------
# Sobolev seminorm on a lattice

@dataclass(frozen=True)
class LatticeField:
    """Samples ``values[t, i_0, ..., i_{N-1}]`` of a space-time field on a product lattice."""

    times: np.ndarray
    axes: tuple
    values: np.ndarray
    time_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(t),) + tuple(len(a) for a in axes):
            raise ValidationError(f"values shape {v.shape} does not match the lattice")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, fields: Sequence, times, axes, time_weights=None) -> "LatticeField":
        """Evaluate spatial callables (one per time) on the lattice."""
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
        vals = np.stack([np.asarray(f(mesh)) for f in fields])
        return cls(times, tuple(axes), vals, time_weights)

    def weights(self) -> np.ndarray:
        """Trapezoid weights over space (and time unless ``time_weights`` is given)."""
        w = np.ones(())
        for a in self.axes:
            wa = np.full(len(a), a[1] - a[0])
            wa[[0, -1]] *= 0.5
            w = np.multiply.outer(w, wa)
        if self.time_weights is not None:
            wt = np.asarray(self.time_weights, dtype=float)
        elif len(self.times) == 1:
            wt = np.ones(1)
        else:
            wt = _trapezoid(self.times)
        return np.multiply.outer(wt, w)


def _trapezoid(t):
    w = np.zeros(len(t))
    d = np.diff(t)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def lp_norm(field: LatticeField, p: float, values=None) -> float:
    v = field.values if values is None else values
    return float((field.weights() * np.abs(v) ** p).sum() ** (1.0 / p))


def _frac_lap_lattice_1d(field: LatticeField, axis: int, beta: float, quad: FracQuad):
    """Fractional Laplacian along one lattice axis with zero extension outside it."""
    a = field.axes[axis]
    h = a[1] - a[0]
    if quad.r_min >= h:
        raise ValidationError(f"inner cutoff r_min={quad.r_min} must be below the spacing {h}")
    ax = axis + 1
    V = np.moveaxis(field.values, ax, 0)
    spline = CubicSpline(a, V, axis=0)
    lo, hi = a[0], a[-1]

    def ev(y):
        out = spline(y)
        out[(y < lo) | (y > hi)] = 0.0
        return out

    r_end = max(hi - lo, 1.0 + quad.max_width)
    nodes, weights = radial_rule(quad, r_max=r_end)
    acc = np.zeros_like(V)
    for r, w in zip(nodes, weights):
        acc += w * r ** (-1.0 - 2 * beta) * (ev(a + r) + ev(a - r) - 2 * V)
    rm = quad.r_min
    acc += (ev(a + rm) + ev(a - rm) - 2 * V) * rm ** (-2 * beta) / (2.0 - 2 * beta)
    acc -= 2 * V * r_end ** (-2 * beta) / (2 * beta)
    return np.moveaxis(acc, 0, ax)


def _laplacian_lattice(field: LatticeField, axes_idx):
    out = np.zeros_like(field.values)
    for axis in axes_idx:
        a = field.axes[axis]
        spline = CubicSpline(a, field.values, axis=axis + 1)
        out += spline(a, 2)
    return out


def _frac_lap_lattice_nd(field: LatticeField, axes_idx, beta: float, quad: FracQuad):
    d = len(axes_idx)
    dirs, wdir = _sphere_rule(d, quad.n_angles)
    pts_axes = [field.axes[j] for j in range(len(field.axes))]
    lo = np.array([a[0] for a in pts_axes])
    hi = np.array([a[-1] for a in pts_axes])
    mesh = np.stack(np.meshgrid(*pts_axes, indexing="ij"), -1)
    span = float(np.linalg.norm(hi[axes_idx] - lo[axes_idx]))
    nodes, weights = radial_rule(quad, r_max=max(span, 1.0 + quad.max_width))
    out = np.zeros_like(field.values)
    for ti in range(len(field.times)):
        interp = RegularGridInterpolator(pts_axes, field.values[ti], method="cubic",
                                         bounds_error=False, fill_value=0.0)
        V = field.values[ti]
        acc = np.zeros_like(V)
        for theta, wt in zip(dirs, wdir):
            v = np.zeros(len(pts_axes))
            v[axes_idx] = theta
            for r, w in zip(nodes, weights):
                acc += wt * w * r ** (-1.0 - 2 * beta) * (interp(mesh + r * v) + interp(mesh - r * v) - 2 * V)
            rm = quad.r_min
            acc += wt * (interp(mesh + rm * v) + interp(mesh - rm * v) - 2 * V) * rm ** (-2 * beta) / (2 - 2 * beta)
            acc -= wt * 2 * V * max(span, 1.0 + quad.max_width) ** (-2 * beta) / (2 * beta)
        out[ti] = acc
    return out


def block_operator_lattice(field: LatticeField, i: int, structure: KalmanStructure,
                           quad: Optional[FracQuad] = None) -> np.ndarray:
    """``Delta^{alpha_i}_{x_i}`` of the field on the lattice (local Laplacian when ``alpha_i = 1``)."""
    quad = quad or FracQuad()
    sl = structure.block_slices()[i]
    axes_idx = list(range(sl.start, sl.stop))
    for j in axes_idx:
        if len(field.axes[j]) < 8:
            raise ValidationError(f"lattice too coarse: axis {j} has fewer than 8 nodes")
    ai = structure.exponents[i]
    if abs(ai - 1.0) < 1e-12:
        return _laplacian_lattice(field, axes_idx)
    if len(axes_idx) == 1:
        return _frac_lap_lattice_1d(field, axes_idx[0], ai, quad)
    return _frac_lap_lattice_nd(field, axes_idx, ai, quad)


def sobolev_seminorm_aniso(field: LatticeField, p: float, structure: KalmanStructure,
                           quad: Optional[FracQuad] = None, return_blocks: bool = False):
    """``(sum_i ||Delta^{alpha_i}_{x_i} phi||_{L^p}^p)^(1/p)`` with lattice quadrature."""
    if not p > 1.0:
        raise ValidationError(f"p must exceed 1, got {p}")
    if len(field.axes) != structure.N:
        raise ValidationError("lattice dimension does not match the structure")
    terms = []
    for i in range(len(structure.dims)):
        Di = block_operator_lattice(field, i, structure, quad)
        terms.append(lp_norm(field, p, Di) ** p)
    total = float(sum(terms) ** (1.0 / p))
    return (total, terms) if return_blocks else total
