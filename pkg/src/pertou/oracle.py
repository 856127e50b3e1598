"""Reference solutions for the Gaussian case.

``gaussian_closed_form`` evaluates the Duhamel formula exactly in space: the
law of ``I_{s,t}`` plus the diffusive perturbation is Gaussian with
covariance ``C(s, t) = 2 int_s^t exp(uA)(B + S(u))exp(uA)^T du`` (computed
piecewise with Van Loan's block exponential), and Gaussian bumps stay
Gaussian under convolution.  ``grid_solve_kinetic`` is an explicit
finite-difference solver for the two-dimensional kinetic model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import expm

from .perturb import PerturbationSchedule, TimeTransform
from .semigroup import DuhamelField, expm_batch, gaussian_smoothed_terms
from .sources import Constant, GaussianBump
from .structure import OperatorSpec, ValidationError

KINETIC_A = np.array([[0.0, 0.0], [1.0, 0.0]])
KINETIC_B = np.diag([1.0, 0.0])


def van_loan_integral(A: np.ndarray, Q: np.ndarray, a: float, b: float) -> np.ndarray:
    """``int_a^b exp(uA) Q exp(uA)^T du`` from one block exponential."""
    if b <= a:
        return np.zeros_like(Q)
    n = A.shape[0]
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = -A
    H[:n, n:] = Q
    H[n:, n:] = A.T
    F = expm((b - a) * H)
    core = F[n:, n:].T @ F[:n, n:]
    Ea = expm(a * A)
    out = Ea @ core @ Ea.T
    return 0.5 * (out + out.T)


class CovarianceTable:
    """``C(s, t)`` for fixed ``t`` and any ``s <= t``, drift-free frame."""

    def __init__(self, spec: OperatorSpec, schedule: PerturbationSchedule, t: float):
        self.spec, self.schedule, self.t = spec, schedule, float(t)
        b = schedule.breakpoints
        self.edges = np.concatenate([b[b < t], [t]])
        tail = [np.zeros((spec.N, spec.N))]
        for j in range(len(self.edges) - 2, -1, -1):
            lo, hi = self.edges[j], self.edges[j + 1]
            tail.append(tail[-1] + self._piece(lo, hi))
        self.tail = tail[::-1]     # tail[j] = C(edges[j], t)

    def _piece(self, lo, hi):
        Q = self.spec.B + self.schedule.at(0.5 * (lo + hi))
        return 2.0 * van_loan_integral(self.spec.A, Q, lo, hi)

    def __call__(self, s: float) -> np.ndarray:
        if s >= self.t:
            return np.zeros((self.spec.N, self.spec.N))
        j = int(np.searchsorted(self.edges, s, side="right"))
        return self._piece(s, self.edges[j]) + self.tail[j]


def effective_covariance(spec: OperatorSpec, schedule: PerturbationSchedule, s: float, t: float):
    """``2 int_s^t exp(uA)(B + S(u))exp(uA)^T du``."""
    return CovarianceTable(spec, schedule, t)(s)


def _check_family(f):
    for _, _, terms in getattr(f, "pieces", []):
        for g in terms:
            if not isinstance(g, (GaussianBump, Constant)):
                raise ValidationError(
                    f"gaussian_closed_form supports gaussian_bump and constant terms, "
                    f"got {type(g).__name__}")


def _panels(f, schedule, transform, t):
    b = [f.breakpoints, schedule.breakpoints]
    if transform is not None:
        b.append(transform.breakpoints)
    b = np.concatenate(b)
    return np.unique(np.concatenate([[0.0, t], b[(b > 0.0) & (b < t)]]))


def gaussian_closed_form(spec: OperatorSpec, schedule: PerturbationSchedule, f, t: float, x,
                         transform: Optional[TimeTransform] = None, epsabs: float = 1e-13,
                         epsrel: float = 1e-11):
    """Exact-in-space Duhamel solution for Gaussian-bump sources (alpha = 2).

    ``x`` may be one point or an array ``(P, N)``.  With ``transform`` the
    value is ``exp(-c_tilde(t)) u(t, x + a_tilde(t))`` where ``u`` solves the
    problem with source ``exp(c_tilde(s)) f(s, z - a_tilde(s))``.
    """
    if spec.alpha != 2.0:
        raise ValidationError("the closed-form oracle covers alpha = 2 only")
    _check_family(f)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[-1] != spec.N:
        raise ValidationError(f"probe dimension {X.shape[-1]} != N = {spec.N}")
    if t == 0.0 or f.is_zero():
        out = np.zeros(len(X))
        return out if np.ndim(x) == 2 else float(out[0])
    cov = CovarianceTable(spec, schedule, t)
    shift_t = transform.a_tilde(t) if transform is not None else 0.0
    damp_t = transform.c_tilde(t) if transform is not None else 0.0

    def integrand(s):
        terms = f.terms_at(s)
        if not terms:
            return np.zeros(len(X))
        back = expm(-s * spec.A)
        Sig = back @ cov(s) @ back.T
        Y = (X + shift_t) @ expm((t - s) * spec.A).T
        scale = 1.0
        if transform is not None:
            Y = Y - transform.a_tilde(s)
            scale = float(np.exp(transform.c_tilde(s) - damp_t))
        out = np.zeros(len(X))
        for g in gaussian_smoothed_terms(terms, 0.5 * (Sig + Sig.T)):
            out += g.value(Y)
        return scale * out

    edges = _panels(f, schedule, transform, t)
    total = np.zeros(len(X))
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad_vec(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=400)
        total += val
    return total if np.ndim(x) == 2 else float(total[0])


def closed_form_field(spec: OperatorSpec, schedule: PerturbationSchedule, f, t: float,
                      n_per_panel: int = 24) -> DuhamelField:
    """``x -> u(t, x)`` as a deterministic Gaussian mixture (Gauss-Legendre in time).

    Exposes exact spatial derivatives for seminorm estimates.
    """
    if spec.alpha != 2.0:
        raise ValidationError("the closed-form oracle covers alpha = 2 only")
    _check_family(f)
    cov = CovarianceTable(spec, schedule, t)
    xg, wg = np.polynomial.legendre.leggauss(n_per_panel)
    nodes, weights = [], []
    edges = _panels(f, schedule, None, t)
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * xg + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * wg)
    nodes, weights = np.concatenate(nodes), np.concatenate(weights)
    flows = expm_batch(spec.A, t - nodes)
    terms = []
    for s in nodes:
        back = expm(-s * spec.A)
        Sig = back @ cov(s) @ back.T
        terms.append(gaussian_smoothed_terms(f.terms_at(s), 0.5 * (Sig + Sig.T)))
    return DuhamelField(spec.N, weights, flows, terms)


# ---------------------------------------------------------------------------
# kinetic grid solver

@dataclass(frozen=True)
class GridSpec:
    """Lattice of the kinetic solver: ``hv`` along x0 (velocity), ``hx`` along x1."""

    hv: float
    hx: float
    ht: float
    domain: Optional[tuple] = None      # ((v_lo, v_hi), (x_lo, x_hi))


@dataclass
class GridField:
    times: np.ndarray
    v: np.ndarray
    x: np.ndarray
    values: np.ndarray          # (n_times, n_v, n_x)

    def at(self, k: int, points) -> np.ndarray:
        """Bilinear interpolation of snapshot ``k`` at points ``(P, 2)``."""
        interp = RegularGridInterpolator((self.v, self.x), self.values[k], method="linear",
                                         bounds_error=False, fill_value=0.0)
        return interp(np.atleast_2d(points))

    def header(self) -> dict:
        return {"dims": [int(len(self.times)), int(len(self.v)), int(len(self.x))],
                "spacings": [float(self.v[1] - self.v[0]), float(self.x[1] - self.x[0])],
                "origin": [float(self.v[0]), float(self.x[0])],
                "t_nodes": [float(t) for t in self.times]}

    def export(self, path, fmt: str = "csv") -> None:
        """CSV (``t,x0,x1,value`` rows) or flat float64 binary, both with a JSON header."""
        head = json.dumps(self.header())
        if fmt == "csv":
            T, V, X = np.meshgrid(self.times, self.v, self.x, indexing="ij")
            rows = np.column_stack([T.ravel(), V.ravel(), X.ravel(), self.values.ravel()])
            with open(path, "w") as fh:
                fh.write(f"# {head}\n")
                fh.write("t,x0,x1,value\n")
                np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
        elif fmt == "binary":
            with open(path, "wb") as fh:
                fh.write((head + "\n").encode())
                fh.write(self.values.astype("<f8").tobytes())
        else:
            raise ValidationError(f"unknown field format {fmt!r}; use 'csv' or 'binary'")

    @classmethod
    def load(cls, path, fmt: str = "csv") -> "GridField":
        if fmt == "csv":
            with open(path) as fh:
                head = json.loads(fh.readline()[1:])
            data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
            vals = data[:, 3].reshape(head["dims"])
        else:
            with open(path, "rb") as fh:
                head = json.loads(fh.readline().decode())
                vals = np.frombuffer(fh.read(), dtype="<f8").reshape(head["dims"]).copy()
        nt, nv, nx = head["dims"]
        hv, hx = head["spacings"]
        v0, x0 = head["origin"]
        return cls(np.array(head["t_nodes"]), v0 + hv * np.arange(nv), x0 + hx * np.arange(nx), vals)


def _auto_domain(schedule, f, T):
    """Support of the bumps padded by six standard deviations of the spread."""
    smax = schedule.sup_norm
    spread_v = np.sqrt(2.0 * (1.0 + smax) * T)
    spread_x = np.sqrt(2.0 * (1.0 + smax) * (T ** 3 / 3.0 + T))
    lo, hi = np.array([np.inf, np.inf]), np.array([-np.inf, -np.inf])
    for _, _, terms in f.pieces:
        for g in terms:
            if not isinstance(g, GaussianBump):
                raise ValidationError("automatic domain needs gaussian_bump terms; give grid.domain")
            r = 6.0 * np.sqrt(np.diag(g.cov))
            lo, hi = np.minimum(lo, g.center - r), np.maximum(hi, g.center + r)
    vmax = max(abs(lo[0]), abs(hi[0])) + 6.0 * spread_v
    xpad = vmax * T + 6.0 * spread_x
    return ((-vmax, vmax), (lo[1] - xpad, hi[1] + xpad))


def grid_solve_kinetic(schedule: PerturbationSchedule, f, grid: GridSpec, T: float,
                       t_out: Optional[Sequence[float]] = None) -> GridField:
    """Explicit Euler for ``u_t = Tr((B + S(t)) D^2 u) + x0 d_{x1} u + f`` with ``u(0) = 0``.

    Centred second differences (mixed term included), first-order upwind
    transport, homogeneous Dirichlet boundary.  The time step must satisfy
    ``ht (2 D00/hv^2 + 2 D11/hx^2 + 2|D01|/(hv hx) + |x0|max/hx) <= 0.9``.
    """
    if schedule.N != 2:
        raise ValidationError("the kinetic grid solver is two-dimensional")
    dom = grid.domain if grid.domain is not None else _auto_domain(schedule, f, T)
    (v_lo, v_hi), (x_lo, x_hi) = dom
    nv = int(round((v_hi - v_lo) / grid.hv)) + 1
    nx = int(round((x_hi - x_lo) / grid.hx)) + 1
    v = v_lo + grid.hv * np.arange(nv)
    x = x_lo + grid.hx * np.arange(nx)
    hv, hx = v[1] - v[0], x[1] - x[0]
    Ds = KINETIC_B + schedule.values
    rate = max(2 * D[0, 0] / hv ** 2 + 2 * D[1, 1] / hx ** 2 + 2 * abs(D[0, 1]) / (hv * hx)
               for D in Ds) + np.abs(v).max() / hx
    if grid.ht * rate > 0.9:
        limit = 0.9 / rate
        digits = 2 - int(np.floor(np.log10(limit)))
        # rounded down so that the suggested step itself passes
        safe = np.floor(limit * 10.0 ** digits) / 10.0 ** digits
        raise ValidationError(
            f"CFL violated: ht * rate = {grid.ht * rate:.3g} > 0.9; use ht <= {safe:.3g}")
    nsteps = int(np.ceil(T / grid.ht - 1e-12))
    ht = T / nsteps
    t_out = [T] if t_out is None else list(t_out)
    save = {int(round(t / ht)): t for t in t_out}
    mesh = np.stack(np.meshgrid(v, x, indexing="ij"), -1)
    vel = v[1:-1, None]
    pos, neg = np.clip(vel, 0, None), np.clip(vel, None, 0)
    u = np.zeros((nv, nx))
    snaps, times = [], []
    if 0 in save:
        snaps.append(u.copy())
        times.append(0.0)
    for n in range(nsteps):
        tn = n * ht
        D = KINETIC_B + schedule.at(tn)
        c = u[1:-1, 1:-1]
        uvv = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / hv ** 2
        uxx = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / hx ** 2
        uvx = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hv * hx)
        fwd = (u[1:-1, 2:] - c) / hx
        bwd = (c - u[1:-1, :-2]) / hx
        Lu = D[0, 0] * uvv + 2 * D[0, 1] * uvx + D[1, 1] * uxx + pos * fwd + neg * bwd
        src = np.asarray(f.value(tn, mesh[1:-1, 1:-1]))
        u[1:-1, 1:-1] = c + ht * (Lu + src)
        if n + 1 in save:
            snaps.append(u.copy())
            times.append((n + 1) * ht)
    return GridField(np.array(times), v, x, np.array(snaps))
