"""Kalman structure of the drift/diffusion pair (A, B).

Everything here is pure linear algebra on small dense matrices: the rank
test for the controllability matrix, the block decomposition it induces,
the anisotropic exponents, the dilation group and the parabolic quasi-distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

RANK_RTOL = 1e-10
KAPPA_MIN = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank with a relative singular-value cut-off ``rtol * s_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class OperatorSpec:
    """Problem datum: drift ``A``, diffusion ``B``, stability index, horizon.

    ``B`` must already be in the block form ``diag(B0, 0)`` with ``B0``
    positive definite; the change of basis bringing a general pair to that
    form is not computed here.
    """

    A: np.ndarray
    B: np.ndarray
    alpha: float = 2.0
    spectral: Optional[object] = None
    horizon_T: float = 1.0

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        if B.shape != A.shape:
            raise ValidationError(
                f"dimension mismatch: A is {A.shape}, B is {B.shape}")
        if not np.allclose(B, B.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(B).max())):
            raise ValidationError("B must be symmetric")
        if np.linalg.eigvalsh(B).min() < -1e-12 * max(1.0, np.abs(B).max()):
            raise ValidationError("B must be positive semi-definite")
        if not (0.0 < self.alpha <= 2.0):
            raise ValidationError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.horizon_T > 0.0:
            raise ValidationError(f"horizon_T must be positive, got {self.horizon_T}")
        if self.alpha != 2.0 and self.spectral is None:
            raise ValidationError("alpha < 2 requires a spectral measure")
        d0 = self.d0
        if d0 == 0:
            raise ValidationError("B must be non-zero")
        off = B.copy()
        off[:d0, :d0] = 0.0
        if np.abs(off).max() > 0.0:
            raise ValidationError(
                "B must be block diagonal diag(B0, 0) with B0 in the top-left corner")
        if self.spectral is not None and getattr(self.spectral, "dim", d0) != d0:
            raise ValidationError(
                f"spectral measure lives in dimension {self.spectral.dim}, expected d0={d0}")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def d0(self) -> int:
        return numerical_rank(self.B)

    @property
    def B0(self) -> np.ndarray:
        d0 = self.d0
        return self.B[:d0, :d0]


@dataclass(frozen=True)
class KalmanStructure:
    satisfied: bool
    k: int
    dims: tuple
    d0: int
    d1: int
    alpha: float
    exponents: tuple
    kappa2: float
    sigma_factor: np.ndarray = field(repr=False)
    dilation_invariant: bool = False
    normal_form: bool = False

    @property
    def N(self) -> int:
        return int(sum(self.dims))

    def block_slices(self):
        """Coordinate slices of the blocks x_0, ..., x_k."""
        edges = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def scaling_powers(self) -> np.ndarray:
        """Per-coordinate powers 1/(1 + alpha i) of the dilation."""
        return np.concatenate([
            np.full(d, 1.0 / (1.0 + self.alpha * i)) for i, d in enumerate(self.dims)])


def intrinsic_exponents(alpha: float, dims: Sequence[int]) -> list:
    """Anisotropic exponents ``(alpha / 2) / (1 + alpha i)`` for each block."""
    if not (0.0 < alpha <= 2.0):
        raise ValidationError(f"alpha must lie in (0, 2], got {alpha}")
    if len(dims) == 0:
        raise ValidationError("dims must be non-empty")
    return [(alpha / 2.0) / (1.0 + alpha * i) for i in range(len(dims))]


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def check_kalman(spec: OperatorSpec) -> KalmanStructure:
    """Kalman rank test and the block structure it induces.

    ``dims`` are the successive rank increments of ``[B, AB, ..., A^i B]``;
    ``k`` is the first index reaching full rank.  When the rank stalls
    below ``N`` the structure is returned with ``satisfied=False`` and the
    increments observed before the stall.
    """
    A, B, N = spec.A, spec.B, spec.N
    d0 = spec.d0
    B0 = spec.B0
    kappa2 = float(np.linalg.eigvalsh(B0).min())
    if kappa2 <= KAPPA_MIN:
        raise ValidationError(f"B0 must be positive definite, smallest eigenvalue {kappa2:g}")

    blocks = [B]
    ranks = [numerical_rank(B)]
    P = B
    while ranks[-1] < N and len(ranks) < N:
        P = A @ P
        blocks.append(P)
        ranks.append(numerical_rank(np.hstack(blocks)))
        if ranks[-1] == ranks[-2]:
            break
    satisfied = ranks[-1] == N
    incr = [ranks[0]] + [b - a for a, b in zip(ranks[:-1], ranks[1:])]
    dims = tuple(int(d) for d in incr if d > 0)
    k = len(dims) - 1

    sigma = np.zeros((N, d0))
    sigma[:d0, :] = _psd_sqrt(B0)

    struct = KalmanStructure(
        satisfied=bool(satisfied), k=k, dims=dims, d0=d0, d1=int(sum(dims[1:])),
        alpha=float(spec.alpha), exponents=tuple(intrinsic_exponents(spec.alpha, dims)),
        kappa2=kappa2, sigma_factor=sigma)
    if satisfied:
        struct = _with_shape_flags(A, struct)
    return struct


def _with_shape_flags(A: np.ndarray, struct: KalmanStructure) -> KalmanStructure:
    normal = _block_shape(A, struct, strict=False)
    dil = _block_shape(A, struct, strict=True)
    return replace(struct, normal_form=normal, dilation_invariant=dil)


def _block_shape(A: np.ndarray, struct: KalmanStructure, strict: bool) -> bool:
    sl = struct.block_slices()
    for i, ri in enumerate(sl):
        for j, cj in enumerate(sl):
            blk = A[ri, cj]
            if i == j + 1:
                if numerical_rank(blk) != struct.dims[i]:
                    return False
            elif i > j + 1 or strict:
                if np.any(blk != 0.0):
                    return False
    return True


def is_dilation_invariant(A: np.ndarray, structure: KalmanStructure) -> bool:
    """True iff ``A`` has the pure sub-diagonal block shape ``A_0``."""
    A = np.asarray(A, dtype=float)
    if A.shape != (structure.N, structure.N):
        raise ValidationError(
            f"A has shape {A.shape}, structure expects {(structure.N, structure.N)}")
    return _block_shape(A, structure, strict=True)


def require_normal_form(structure: KalmanStructure) -> None:
    if not structure.satisfied:
        raise ValidationError("Kalman condition fails: rank of [B, AB, ...] stays below N")
    if not structure.normal_form:
        raise ValidationError(
            "A is not in block normal form for the Kalman dims (nonzero blocks below "
            "the sub-diagonal or rank-deficient sub-diagonal blocks); bring (A, B) to "
            "normal form first")


def _check_point(x, structure):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != structure.N:
        raise ValidationError(f"point has dimension {x.shape[-1]}, expected {structure.N}")
    return x


def _block_norm(d):
    # scaled so that tiny differences do not underflow when squared
    m = np.max(np.abs(d), axis=-1)
    safe = np.where(m > 0.0, m, 1.0)
    return m * np.linalg.norm(d / safe[..., None], axis=-1)


def parabolic_distance(x, y, structure: KalmanStructure):
    """Quasi-distance ``sum_i |x_i - y_i|^(1/(1 + alpha i))`` over blocks.

    Broadcasts over leading axes of ``x`` and ``y``.
    """
    x = _check_point(x, structure)
    y = _check_point(y, structure)
    total = 0.0
    for i, sl in enumerate(structure.block_slices()):
        r = _block_norm(x[..., sl] - y[..., sl])
        total = total + r ** (1.0 / (1.0 + structure.alpha * i))
    return total


def dilation_apply(lam: float, t, x, structure: KalmanStructure):
    """Return ``delta_lam(t, x)``: time scales by ``lam^(1/alpha)``,
    block ``i`` by ``lam^(1/(1 + alpha i))``."""
    if not lam > 0.0:
        raise ValidationError(f"dilation factor must be positive, got {lam}")
    x = _check_point(x, structure)
    return lam ** (1.0 / structure.alpha) * t, x * lam ** structure.scaling_powers()


def intrinsic_scaling(rho: float, t, x, structure: KalmanStructure):
    """``(rho^alpha t, rho^(1 + alpha i) x_i)``: the scaling that leaves the
    operator with a dilation-invariant drift unchanged and under which
    ``parabolic_distance`` is homogeneous of degree one."""
    if not rho > 0.0:
        raise ValidationError(f"scaling factor must be positive, got {rho}")
    x = _check_point(x, structure)
    return rho ** structure.alpha * t, x * rho ** (1.0 / structure.scaling_powers())
