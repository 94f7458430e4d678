"""SPD factorizations and the weighted right pseudoinverse.

All inverses are applied through a Cholesky factor (or the reciprocal
diagonal when the matrix is exactly diagonal); nothing here forms an
explicit inverse.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotPositiveDefinite, RankDeficient

SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SpdFactor:
    """Factored SPD matrix: either a lower Cholesky factor or a reciprocal diagonal."""

    dim: int
    lower: Optional[np.ndarray] = None
    inv_diag: Optional[np.ndarray] = None

    @property
    def is_diagonal(self):
        return self.inv_diag is not None

    def matrix(self):
        """Reconstruct M (for tests and diagnostics)."""
        if self.is_diagonal:
            return np.diag(1.0 / self.inv_diag)
        return self.lower @ self.lower.T


def _check_symmetric(M):
    if not M.size:
        return
    asym, big = _kernels.asymmetry(M)
    scale = max(big, 1.0)
    if asym > SYMMETRY_RTOL * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def factor_spd(M, diagonal_hint=False, check_symmetry=True):
    """Factor a symmetric positive definite matrix.

    With ``diagonal_hint`` set and all off-diagonal entries exactly zero the
    reciprocal-diagonal fast path is used; otherwise a dense Cholesky factor is
    computed by the active kernel backend. Raises :class:`NotPositiveDefinite`
    carrying the 0-based index of the failing pivot.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if diagonal_hint:
        d = np.diag(M).copy()
        if np.count_nonzero(M - np.diag(d)) == 0:
            bad = np.flatnonzero(~(d > 0.0))
            if bad.size:
                raise NotPositiveDefinite(bad[0])
            return SpdFactor(n, inv_diag=1.0 / d)
    if check_symmetry:
        _check_symmetric(M)
    Ms = 0.5 * (M + M.T)
    L, info = _kernels.cholesky(Ms)
    if info >= 0:
        raise NotPositiveDefinite(info)
    return SpdFactor(n, lower=np.ascontiguousarray(L))


def solve_spd(f: SpdFactor, B):
    """Return M^-1 B for the factored M; B may be a vector or a d x k matrix."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != f.dim:
        raise DimensionMismatch(f"right-hand side has {B.shape[0]} rows, factor has dim {f.dim}")
    if f.is_diagonal:
        return B * (f.inv_diag if B.ndim == 1 else f.inv_diag[:, None])
    if B.ndim == 1:
        return _kernels.cho_solve(f.lower, np.ascontiguousarray(B[:, None]))[:, 0]
    return _kernels.cho_solve(f.lower, np.ascontiguousarray(B))


@dataclass(frozen=True)
class WeightedPinvFactor:
    """Factored H^#_W = W^-1 H^T (H W^-1 H^T)^-1.

    ``Z`` holds W^-1 H^T and ``S_factor`` the Cholesky factor of H Z, so both
    the pseudoinverse and the null-space projector cost only d_y-sized solves
    once built.
    """

    H: np.ndarray
    Z: np.ndarray
    S_factor: SpdFactor
    W_factor: SpdFactor
    ridge: float = 0.0

    @property
    def rows(self):
        return self.H.shape[0]

    @property
    def cols(self):
        return self.H.shape[1]

    def matrix(self):
        return self.Z @ solve_spd(self.S_factor, np.eye(self.rows))


def wpinv_build(H, W: SpdFactor, ridge=0.0):
    """Build the factored weighted right pseudoinverse of ``H``.

    ``ridge`` adds ridge*I to H W^-1 H^T; it is off by default so that loss of
    full row rank surfaces as :class:`RankDeficient`.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    d_y, d_x = H.shape
    if d_x != W.dim:
        raise DimensionMismatch(f"H has {d_x} columns, W has dim {W.dim}")
    if d_y > d_x:
        raise DimensionMismatch(f"H must be wide (d_y={d_y} > d_x={d_x})")
    Z = solve_spd(W, np.ascontiguousarray(H.T))
    S = H @ Z
    if ridge:
        S = S + ridge * np.eye(d_y)
    try:
        S_factor = factor_spd(S, diagonal_hint=d_y == 1, check_symmetry=False)
    except NotPositiveDefinite as exc:
        raise RankDeficient(exc.pivot) from None
    return WeightedPinvFactor(H=H, Z=Z, S_factor=S_factor, W_factor=W, ridge=ridge)


def wpinv_apply(f: WeightedPinvFactor, v):
    """Return H^#_W v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != f.rows:
        raise DimensionMismatch(f"vector has length {v.shape[0]}, expected {f.rows}")
    return f.Z @ solve_spd(f.S_factor, v)


def null_project(f: WeightedPinvFactor, v):
    """Return (I - H^#_W H) v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != f.cols:
        raise DimensionMismatch(f"vector has length {v.shape[0]}, expected {f.cols}")
    return v - f.Z @ solve_spd(f.S_factor, f.H @ v)


def identity_factor(n):
    return SpdFactor(n, inv_diag=np.ones(n))


def pinv_identity(H):
    """Identity-weighted right pseudoinverse H^T (H H^T)^-1 as a factor."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return wpinv_build(H, identity_factor(H.shape[1]))
