"""Softplus barrier, its p1 -> infinity limit functions, and the p2 design rule."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import EmptyActiveSet

K_RQ_TYPICAL = 1000.0


@dataclass(frozen=True)
class BarrierConfig:
    """How p2 is chosen.

    ``mode="designed"`` recomputes p2 from the current Hessian and active rows
    with ratio ``k_rq``; ``mode="fixed"`` uses ``p2`` as given. ``p1_ref`` is only
    used by the finite-p1 reference functions.
    """

    mode: str = "designed"
    k_rq: float = 1e4
    p2: Optional[float] = None
    p1_ref: float = 1e4

    def __post_init__(self):
        if self.mode not in ("designed", "fixed"):
            raise ValueError(f"unknown p2 mode {self.mode!r}")
        if self.mode == "fixed" and not (self.p2 and self.p2 > 0):
            raise ValueError("fixed mode needs a positive p2")
        if self.mode == "designed" and not self.k_rq > 1:
            raise ValueError("k_rq must exceed 1")

    @classmethod
    def fixed(cls, p2):
        return cls(mode="fixed", p2=float(p2))

    @classmethod
    def designed(cls, k_rq=1e4):
        return cls(mode="designed", k_rq=float(k_rq))

    @property
    def low_ratio_warning(self):
        return self.mode == "designed" and self.k_rq < K_RQ_TYPICAL


@dataclass(frozen=True)
class ActiveSet:
    indices: np.ndarray
    Gbar: np.ndarray
    gbar: np.ndarray

    def __len__(self):
        return len(self.indices)

    @property
    def empty(self):
        return len(self.indices) == 0


def beta_ref(s, p1, p2):
    """(p2/p1) ln(1 + exp(p1 s)), evaluated without overflow."""
    return (p2 / p1) * np.logaddexp(0.0, p1 * np.asarray(s, dtype=float))


def xi_ref(s, p1, p2):
    """Finite-p1 xi = beta' * beta."""
    s = np.asarray(s, dtype=float)
    return p2 * expit(p1 * s) * beta_ref(s, p1, p2)


def Xi_ref(s, p1, p2):
    """Finite-p1 Xi = beta'' * beta + beta'^2."""
    s = np.asarray(s, dtype=float)
    sig = expit(p1 * s)
    d1 = p2 * sig
    d2 = p2 * p1 * sig * expit(-p1 * s)
    return d2 * beta_ref(s, p1, p2) + d1 * d1


def xi_limit(s, p2):
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, p2 * p2 * s, 0.0)


def Xi_limit(s, p2):
    s = np.asarray(s, dtype=float)
    at_zero = 0.25 * (np.log(2.0) + 1.0) * p2 * p2
    return np.where(s > 0, p2 * p2, np.where(s == 0, at_zero, 0.0))


def max_row_norm(A):
    A = np.atleast_2d(A)
    return float(np.max(np.sum(np.abs(A), axis=1)))


def design_p2(Q, Gbar, k_rq):
    """Smallest p2 meeting ||R|| / ||Q|| >= k_rq through the triangle bound.

    Uses the maximum absolute row-sum norm and takes the bound with equality:
    p2^2 = (k_rq - 1) ||Q|| / ||Gbar^T Gbar||.
    """
    Gbar = np.atleast_2d(np.asarray(Gbar, dtype=float))
    if Gbar.shape[0] == 0:
        raise EmptyActiveSet("design_p2 needs at least one active row")
    gtg = max_row_norm(Gbar.T @ Gbar)
    return float(np.sqrt((k_rq - 1.0) * max_row_norm(Q) / gtg))


def active_set(t, x, G, c):
    """Rows with G x + c strictly positive, in ascending order."""
    g = G @ x + c
    idx = np.flatnonzero(g > 0.0)
    return ActiveSet(indices=idx, Gbar=G[idx], gbar=g[idx])
