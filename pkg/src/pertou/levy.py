"""Symmetric alpha-stable Levy measures with finitely many spectral atoms.

The Levy measure is ``nu(dz) = mu(dtheta) dr / r^(1+alpha)`` in polar form,
with ``mu`` a finite symmetric measure on the unit sphere of R^d0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

ND_THRESHOLD = 1e-8
ND_GRID_POINTS = 2 ** 12


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite symmetric measure on the unit sphere.

    Parameters
    ----------
    atoms : array (J, d0)
        Unit vectors; the set must be closed under negation.
    weights : array (J,)
        Positive masses, equal on antipodal pairs.
    kind : {"discrete", "isotropic_1d"}
    """

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = "discrete"

    def __post_init__(self):
        atoms = np.atleast_2d(np.array(self.atoms, dtype=float))
        weights = np.atleast_1d(np.array(self.weights, dtype=float))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if self.kind not in ("discrete", "isotropic_1d"):
            raise ValueError(f"unknown spectral kind {self.kind!r}")
        if atoms.shape[0] == 0:
            raise ValueError("spectral measure needs at least one atom")
        if weights.shape != (atoms.shape[0],):
            raise ValueError("one weight per atom required")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        norms = np.linalg.norm(atoms, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("atoms must be unit vectors (|theta| = 1 within 1e-12)")
        if self.kind == "isotropic_1d" and atoms.shape[1] != 1:
            raise ValueError("isotropic_1d lives in dimension 1")
        for a, w in zip(atoms, weights):
            hit = np.all(np.abs(atoms + a) <= 1e-12, axis=1)
            if not np.any(hit) or not np.any(np.abs(weights[hit] - w) <= 1e-12 * w):
                raise ValueError("spectral measure must be symmetric: -theta needs equal weight")

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def isotropic_1d(cls, mass: float = 1.0) -> "SpectralMeasure":
        return cls(atoms=[[1.0], [-1.0]], weights=[mass / 2, mass / 2], kind="isotropic_1d")

    @classmethod
    def from_config(cls, kind, atoms=None, weights=None, mass=1.0) -> "SpectralMeasure":
        """Build from loosely specified atoms, renormalising them to unit length."""
        if kind == "isotropic_1d":
            return cls.isotropic_1d(mass)
        atoms = np.atleast_2d(np.array(atoms, dtype=float))
        norms = np.linalg.norm(atoms, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("zero atom in spectral measure")
        if np.any(np.abs(norms - 1.0) > 1e-6):
            warnings.warn("spectral atoms renormalised to unit length "
                          f"(max deviation {np.abs(norms - 1).max():.3g})", stacklevel=2)
        return cls(atoms=atoms / norms, weights=weights, kind=kind)

    def half(self):
        """One representative per antipodal pair (first nonzero coordinate > 0)."""
        keep = []
        for j, a in enumerate(self.atoms):
            nz = np.flatnonzero(np.abs(a) > 1e-14)
            if a[nz[0]] > 0:
                keep.append(j)
        keep = np.array(keep, dtype=int)
        return self.atoms[keep], self.weights[keep]


@dataclass(frozen=True)
class NonDegeneracyReport:
    kappa_alpha: float
    argmin_direction: np.ndarray
    passed: bool


def _sphere_directions(d: int, atoms: np.ndarray) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    n = ND_GRID_POINTS
    if d == 2:
        ang = 2 * np.pi * np.arange(n) / n
        grid = np.column_stack([np.cos(ang), np.sin(ang)])
        perp = np.column_stack([-atoms[:, 1], atoms[:, 0]])
    elif d == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5 ** 0.5) * i
        grid = np.column_stack([np.cos(theta) * np.sin(phi),
                                np.sin(theta) * np.sin(phi), np.cos(phi)])
        # normals of planes spanned by atom pairs: exact zeros of two terms
        perp = [np.cross(a, b) for ia, a in enumerate(atoms) for b in atoms[ia + 1:]]
        perp = np.array([p / np.linalg.norm(p) for p in perp if np.linalg.norm(p) > 1e-12])
        perp = perp.reshape(-1, 3)
    else:
        raise ValueError(f"non-degeneracy grid check supports d0 <= 3, got {d}")
    return np.vstack([grid, perp, -perp]) if len(perp) else grid


def check_nondegeneracy(mu: SpectralMeasure, alpha: float) -> NonDegeneracyReport:
    """Grid minimum over unit ``lam`` of ``sum_j m_j |lam . theta_j|^alpha``.

    The direction set is a uniform (d0=2) or Fibonacci (d0=3) lattice of
    4096 points, augmented by the directions orthogonal to the atoms where
    the sum has its kinks.
    """
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    dirs = _sphere_directions(mu.dim, mu.atoms)
    vals = (np.abs(dirs @ mu.atoms.T) ** alpha) @ mu.weights
    j = int(np.argmin(vals))
    kappa = float(vals[j])
    return NonDegeneracyReport(kappa, dirs[j], kappa > ND_THRESHOLD)


@lru_cache(maxsize=64)
def stable_constant(alpha: float) -> float:
    """``c_alpha = int_0^inf (1 - cos r) r^(-1-alpha) dr`` by adaptive quadrature."""
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    # (1 - cos r) / r^2 = sinc^2 / 2 is smooth; r^(1-alpha) goes in the weight
    head, _ = integrate.quad(lambda r: 0.5 * np.sinc(r / (2 * np.pi)) ** 2, 0.0, 1.0,
                             weight="alg", wvar=(1.0 - alpha, 0.0), epsabs=1e-15, epsrel=1e-13)
    # on [1, inf): int r^(-1-a) = 1/a minus the cosine part, integrated by
    # parts once so the Fourier integral decays like r^(-2-a)
    s, _ = integrate.quad(lambda r: r ** (-2.0 - alpha), 1.0, np.inf, weight="sin", wvar=1.0,
                          epsabs=1e-13, limlst=100)
    osc = -np.sin(1.0) + (1.0 + alpha) * s
    return head + 1.0 / alpha - osc


def levy_exponent(mu: SpectralMeasure, alpha: float, lam) -> float:
    """``psi(lam) = int (cos<lam, z> - 1) nu(dz) = -c_alpha sum_j m_j |<lam, theta_j>|^alpha``."""
    if alpha == 2.0:
        raise ValueError("alpha = 2 is the Gaussian case; no Levy exponent here")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    proj = np.abs(lam @ mu.atoms.T) ** alpha
    return -stable_constant(alpha) * (proj @ mu.weights)


def standard_symmetric_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with characteristic function ``exp(-|u|^alpha)``."""
    V = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    if alpha == 1.0:
        return np.tan(V)
    W = rng.standard_exponential(size=size)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))


def sample_stable_increment(mu: SpectralMeasure, alpha: float, dt: float,
                            rng: np.random.Generator, size=None) -> np.ndarray:
    """Increment of the driving process over a time step ``dt``.

    For ``alpha == 2`` this is centred Gaussian with covariance ``2 dt I``
    (generator ``Tr(D^2)``).  Otherwise each antipodal pair ``+-theta_j``
    contributes ``theta_j (2 m_j c_alpha dt)^(1/alpha) S_j`` with ``S_j``
    standard symmetric stable, so that the law has characteristic function
    ``exp(dt psi(lam))``.

    Returns an array of shape ``(d0,)`` or ``size + (d0,)``.
    """
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    shape = () if size is None else tuple(np.atleast_1d(size))
    d = mu.dim if mu is not None else 1
    if dt == 0.0:
        return np.zeros(shape + (d,))
    if alpha == 2.0:
        return np.sqrt(2.0 * dt) * rng.standard_normal(shape + (d,))
    atoms, w = mu.half()
    scale = (2.0 * w * stable_constant(alpha) * dt) ** (1.0 / alpha)
    S = standard_symmetric_stable(alpha, shape + (len(w),), rng)
    return (S * scale) @ atoms
