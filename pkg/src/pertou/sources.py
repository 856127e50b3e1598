"""Source terms f(t, x): piecewise in time, analytic in space.

Every spatial family exposes ``value``, ``grad`` and ``hess`` on arrays of
points with trailing axis N, so solution surrogates built from sources can
be differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class SmoothTerm:
    """Base for spatial functions with derivatives up to order two."""

    N: int

    def value(self, Z):
        raise NotImplementedError

    def grad(self, Z):
        raise NotImplementedError

    def hess(self, Z):
        raise NotImplementedError

    def sup_abs(self) -> float:
        raise NotImplementedError

    def __call__(self, Z):
        return self.value(Z)

    def derivative(self, Z, multi_index):
        """Partial derivative ``D^multi_index`` for total order <= 2."""
        idx = [j for j, m in enumerate(multi_index) for _ in range(m)]
        if len(idx) == 0:
            return self.value(Z)
        if len(idx) == 1:
            return self.grad(Z)[..., idx[0]]
        if len(idx) == 2:
            return self.hess(Z)[..., idx[0], idx[1]]
        raise ValueError("derivatives above order two are not available")


class GaussianBump(SmoothTerm):
    """``amplitude * exp(-(z - c)' cov^{-1} (z - c) / 2)``."""

    family = "gaussian_bump"

    def __init__(self, amplitude, center, cov):
        self.amplitude = float(amplitude)
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.N = self.center.size
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = np.eye(self.N) * cov
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.N, self.N):
            raise ValueError(f"bump covariance has shape {cov.shape}, expected {(self.N, self.N)}")
        if np.linalg.eigvalsh(cov).min() <= 0.0:
            raise ValueError("bump covariance must be positive definite")
        self.cov = cov
        self.prec = np.linalg.inv(cov)

    def _parts(self, Z):
        d = np.asarray(Z, dtype=float) - self.center
        Pd = d @ self.prec
        v = self.amplitude * np.exp(-0.5 * np.einsum("...i,...i->...", d, Pd))
        return v, Pd

    def value(self, Z):
        return self._parts(Z)[0]

    def grad(self, Z):
        v, Pd = self._parts(Z)
        return -v[..., None] * Pd

    def hess(self, Z):
        v, Pd = self._parts(Z)
        return v[..., None, None] * (Pd[..., :, None] * Pd[..., None, :] - self.prec)

    def sup_abs(self):
        return abs(self.amplitude)

    def shifted(self, shift, scale=1.0):
        return GaussianBump(self.amplitude * scale, self.center + shift, self.cov)


def _bump_1d(u):
    """``exp(1 - 1/(1 - u^2))`` on |u| < 1 and its first two derivatives."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    us = np.where(inside, u, 0.0)
    den = 1.0 - us * us
    b = np.where(inside, np.exp(1.0 - 1.0 / den), 0.0)
    q1 = -2.0 * us / den ** 2
    q2 = -2.0 / den ** 2 - 8.0 * us * us / den ** 3
    return b, b * q1, b * (q2 + q1 * q1)


class Window(SmoothTerm):
    """Compactly supported C-infinity product bump, equal to 1 at its centre."""

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.N = self.center.size
        self.radius = np.broadcast_to(np.asarray(radius, dtype=float), (self.N,)).copy()

    def _factors(self, Z):
        u = (np.asarray(Z, dtype=float) - self.center) / self.radius
        b, b1, b2 = _bump_1d(u)
        return b, b1 / self.radius, b2 / self.radius ** 2

    def value(self, Z):
        return np.prod(self._factors(Z)[0], axis=-1)

    def grad(self, Z):
        b, b1, _ = self._factors(Z)
        out = np.empty(b.shape)
        for j in range(self.N):
            out[..., j] = b1[..., j] * np.prod(np.delete(b, j, axis=-1), axis=-1)
        return out

    def hess(self, Z):
        b, b1, b2 = self._factors(Z)
        out = np.empty(b.shape + (self.N,))
        for j in range(self.N):
            for k in range(self.N):
                f = b.copy()
                if j == k:
                    f[..., j] = b2[..., j]
                else:
                    f[..., j] = b1[..., j]
                    f[..., k] = b1[..., k]
                out[..., j, k] = np.prod(f, axis=-1)
        return out

    def sup_abs(self):
        return 1.0


class Product(SmoothTerm):
    """Pointwise product of two smooth terms."""

    def __init__(self, g: SmoothTerm, w: SmoothTerm):
        if g.N != w.N:
            raise ValueError("factors live in different dimensions")
        self.g, self.w, self.N = g, w, g.N

    def value(self, Z):
        return self.g.value(Z) * self.w.value(Z)

    def grad(self, Z):
        return (self.g.grad(Z) * self.w.value(Z)[..., None]
                + self.g.value(Z)[..., None] * self.w.grad(Z))

    def hess(self, Z):
        gv, gg, gh = self.g.value(Z), self.g.grad(Z), self.g.hess(Z)
        wv, wg, wh = self.w.value(Z), self.w.grad(Z), self.w.hess(Z)
        cross = gg[..., :, None] * wg[..., None, :]
        return gh * wv[..., None, None] + cross + np.swapaxes(cross, -1, -2) + gv[..., None, None] * wh

    def sup_abs(self):
        return self.g.sup_abs() * self.w.sup_abs()


class Cosine(SmoothTerm):
    """``amplitude * cos(k . z + phase)``; bounded, not compactly supported."""

    def __init__(self, amplitude, wavevector, phase=0.0):
        self.amplitude = float(amplitude)
        self.k = np.atleast_1d(np.asarray(wavevector, dtype=float))
        self.N = self.k.size
        self.phase = float(phase)

    def value(self, Z):
        return self.amplitude * np.cos(np.asarray(Z) @ self.k + self.phase)

    def grad(self, Z):
        return -self.amplitude * np.sin(np.asarray(Z) @ self.k + self.phase)[..., None] * self.k

    def hess(self, Z):
        c = self.amplitude * np.cos(np.asarray(Z) @ self.k + self.phase)
        return -c[..., None, None] * np.outer(self.k, self.k)

    def sup_abs(self):
        return abs(self.amplitude)


class Polynomial(SmoothTerm):
    """Sum of monomials ``coef * prod_j (z_j - c_j)^{m_j}``."""

    def __init__(self, coefficients: dict, center=None, N=None):
        items = [(tuple(int(m) for m in k), float(v)) for k, v in coefficients.items()]
        self.N = N if N is not None else len(items[0][0])
        self.items = items
        self.center = np.zeros(self.N) if center is None else np.asarray(center, dtype=float)

    def _eval(self, Z, d):
        X = np.asarray(Z, dtype=float) - self.center
        out = np.zeros(X.shape[:-1])
        for m, c in self.items:
            m = np.array(m)
            coef = c
            powers = m - d
            if np.any(powers < 0):
                continue
            for mj, dj in zip(m, d):
                for r in range(dj):
                    coef *= mj - r
            out = out + coef * np.prod(X ** powers, axis=-1)
        return out

    def value(self, Z):
        return self._eval(Z, np.zeros(self.N, dtype=int))

    def grad(self, Z):
        return np.stack([self._eval(Z, np.eye(self.N, dtype=int)[j]) for j in range(self.N)], -1)

    def hess(self, Z):
        E = np.eye(self.N, dtype=int)
        rows = [np.stack([self._eval(Z, E[j] + E[k]) for k in range(self.N)], -1)
                for j in range(self.N)]
        return np.stack(rows, -2)

    def sup_abs(self):
        return np.inf


class Constant(SmoothTerm):
    def __init__(self, c, N):
        self.c, self.N = float(c), int(N)

    def value(self, Z):
        return np.full(np.shape(Z)[:-1], self.c)

    def grad(self, Z):
        return np.zeros(np.shape(Z))

    def hess(self, Z):
        return np.zeros(np.shape(Z) + (self.N,))

    def sup_abs(self):
        return abs(self.c)

    def shifted(self, shift, scale=1.0):
        return Constant(self.c * scale, self.N)


class TermSum(SmoothTerm):
    def __init__(self, terms: Sequence[SmoothTerm], N: int):
        self.terms, self.N = list(terms), int(N)

    def value(self, Z):
        out = np.zeros(np.shape(Z)[:-1])
        for t in self.terms:
            out = out + t.value(Z)
        return out

    def grad(self, Z):
        out = np.zeros(np.shape(Z))
        for t in self.terms:
            out = out + t.grad(Z)
        return out

    def hess(self, Z):
        out = np.zeros(np.shape(Z) + (self.N,))
        for t in self.terms:
            out = out + t.hess(Z)
        return out

    def sup_abs(self):
        return float(sum(t.sup_abs() for t in self.terms))


def cos_window(amplitude, wavevector, center, radius, phase=0.0) -> SmoothTerm:
    return Product(Cosine(amplitude, wavevector, phase), Window(center, radius))


def polynomial_window(coefficients, center, radius) -> SmoothTerm:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    poly = Polynomial(coefficients, center=center, N=center.size)
    term = Product(poly, Window(center, radius))
    r = np.broadcast_to(np.asarray(radius, dtype=float), (center.size,))
    bound = sum(abs(c) * np.prod(r ** np.array(m)) for m, c in poly.items)
    term.sup_abs = lambda: float(bound)
    return term


@dataclass
class SourceFunction:
    """Time-piecewise source: on ``[t0, t1)`` the spatial part is a sum of terms.

    Outside every piece the source vanishes.  ``sup_abs`` is exact for a
    single term per piece and a triangle-inequality bound otherwise.
    """

    N: int
    pieces: list = field(default_factory=list)  # [(t0, t1, [SmoothTerm, ...]), ...]

    def __post_init__(self):
        last = -np.inf
        for t0, t1, terms in sorted(self.pieces, key=lambda p: p[0]):
            if not t1 > t0:
                raise ValueError(f"empty time piece [{t0}, {t1})")
            if t0 < last:
                raise ValueError("time pieces overlap")
            last = t1
            for term in terms:
                if term.N != self.N:
                    raise ValueError(f"term of dimension {term.N} in a source of dimension {self.N}")
        self.pieces = sorted(self.pieces, key=lambda p: p[0])

    @classmethod
    def constant_in_time(cls, terms, T, N=None):
        terms = list(terms)
        N = N if N is not None else terms[0].N
        return cls(N, [(0.0, float(T), terms)])

    @classmethod
    def zero(cls, N):
        return cls(N, [])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique([t for p in self.pieces for t in p[:2]])

    def terms_at(self, s: float):
        for j, (t0, t1, terms) in enumerate(self.pieces):
            last = j == len(self.pieces) - 1
            if t0 <= s < t1 or (last and s == t1):
                return terms
        return []

    def at(self, s: float) -> TermSum:
        return TermSum(self.terms_at(s), self.N)

    def value(self, s, Z):
        return self.at(s).value(Z)

    def grad(self, s, Z):
        return self.at(s).grad(Z)

    def hess(self, s, Z):
        return self.at(s).hess(Z)

    def sup_abs(self) -> float:
        if not self.pieces:
            return 0.0
        return max(TermSum(p[2], self.N).sup_abs() for p in self.pieces)

    def is_zero(self) -> bool:
        return all(len(p[2]) == 0 for p in self.pieces)

    def scaled(self, c: float) -> "SourceFunction":
        return SourceFunction(self.N, [(t0, t1, [_Scaled(t, c) for t in terms])
                                       for t0, t1, terms in self.pieces])

    def __add__(self, other: "SourceFunction") -> "SourceFunction":
        if other.N != self.N:
            raise ValueError("sources live in different dimensions")
        edges = np.union1d(self.breakpoints, other.breakpoints)
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (a + b)
            terms = list(self.terms_at(mid)) + list(other.terms_at(mid))
            if terms:
                pieces.append((float(a), float(b), terms))
        return SourceFunction(self.N, pieces)


class _Scaled(SmoothTerm):
    def __init__(self, term, c):
        self.term, self.c, self.N = term, float(c), term.N

    def value(self, Z):
        return self.c * self.term.value(Z)

    def grad(self, Z):
        return self.c * self.term.grad(Z)

    def hess(self, Z):
        return self.c * self.term.hess(Z)

    def sup_abs(self):
        return abs(self.c) * self.term.sup_abs()


class CallableSource:
    """Source given by a plain vectorised callable ``f(s, Z)``; no derivatives.

    Used for manufactured solutions; ``sup_abs`` must be supplied.
    """

    def __init__(self, N: int, func: Callable, breakpoints=(), sup_abs: float = np.inf):
        self.N = int(N)
        self.func = func
        self._breaks = np.asarray(breakpoints, dtype=float)
        self._sup = float(sup_abs)

    @property
    def breakpoints(self):
        return self._breaks

    def value(self, s, Z):
        return self.func(s, np.asarray(Z, dtype=float))

    def sup_abs(self):
        return self._sup

    def is_zero(self):
        return False


def make_term(family: str, N: int, **params) -> SmoothTerm:
    """Build a spatial term from a family name and keyword parameters."""
    if family == "gaussian_bump":
        cov = params.get("cov", params.get("width", 1.0))
        if "width" in params and "cov" not in params:
            cov = np.asarray(cov, dtype=float) ** 2
        return GaussianBump(params.get("amplitude", 1.0), params["center"], cov)
    if family == "cos_window":
        return cos_window(params.get("amplitude", 1.0), params["wavevector"],
                          params["center"], params["radius"], params.get("phase", 0.0))
    if family == "polynomial_window":
        coeffs = {tuple(m): c for m, c in zip(params["monomials"], params["coefficients"])}
        return polynomial_window(coeffs, params["center"], params["radius"])
    if family == "constant":
        return Constant(params.get("value", 1.0), N)
    raise ValueError(f"unknown source family {family!r}; "
                     "known: gaussian_bump, cos_window, polynomial_window, constant")
