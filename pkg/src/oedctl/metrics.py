"""Accuracy metrics, delayed-response emulation, timing statistics and the
cube-law trendline."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, EmptySeries, LengthMismatch, ZeroReferenceCost

# ceil(a / b) ignores a relative excess below this, so 3 tau / tau stays 3
RATIO_ROUNDOFF = 1e-12


@dataclass
class AccuracyReport:
    E_x: float
    E_sigma: float
    excluded_windows: list = field(default_factory=list)
    kept_samples: int = 0


def window_mask(times, windows):
    """True where a sample lies outside every (start, end) window."""
    times = np.asarray(times, dtype=float)
    keep = np.ones(times.shape, dtype=bool)
    for lo, hi in windows or ():
        keep &= ~((times >= lo) & (times <= hi))
    return keep


def accuracy_metrics(times, states, ref_states, sigma=None, ref_sigma=None, exclude=(),
                     t_min=None) -> AccuracyReport:
    """E_x and E_sigma over the samples outside the excluded windows.

    E_x is the rectangle-rule time average of ||x - chi*||_1 / d_x; E_sigma is the
    ratio of the rectangle-rule integrals of sigma along x and along chi*. On a
    uniform grid the rectangle rule reduces to plain sums, so the step cancels.
    ``t_min`` additionally drops samples before that time. ``E_sigma`` is nan
    when no cost series are given.
    """
    times = np.asarray(times, dtype=float)
    X = np.atleast_2d(np.asarray(states, dtype=float))
    R = np.atleast_2d(np.asarray(ref_states, dtype=float))
    if X.shape != R.shape or X.shape[0] != times.size:
        raise LengthMismatch(f"states {X.shape}, reference {R.shape}, times {times.size}")
    keep = window_mask(times, exclude)
    if t_min is not None:
        keep &= times >= t_min
    if not keep.any():
        raise EmptySeries("every sample is excluded")
    err = np.abs(X[keep] - R[keep]).sum(axis=1) / X.shape[1]
    E_x = float(err.mean())
    E_s = math.nan
    if sigma is not None or ref_sigma is not None:
        s = np.asarray(sigma, dtype=float)
        r = np.asarray(ref_sigma, dtype=float)
        if s.shape != times.shape or r.shape != times.shape:
            raise LengthMismatch("cost series must match the time grid")
        den = float(r[keep].sum())
        if not den > 0.0:
            raise ZeroReferenceCost(f"reference cost integral is {den}")
        E_s = float(s[keep].sum()) / den
    return AccuracyReport(E_x=E_x, E_sigma=E_s, excluded_windows=list(exclude or []),
                          kept_samples=int(keep.sum()))


def _steps(slow, fast):
    r = slow / fast
    return max(1, math.ceil(r * (1.0 - RATIO_ROUNDOFF)))


def emulate_delayed(tau_slow, tau_fast, chi_star):
    """Delayed copy of chi* for a solver that needs tau_slow where tau_fast is one step.

    The result for sample n is delivered at n1 = n + ceil(tau_slow[n] / tau_fast[n])
    and held until the next delivery n2; once n1 runs past the last sample the
    remaining sample takes chi*(n) itself. Samples before the first delivery
    hold chi* of the first sample; when nothing is ever delivered every
    sample keeps its own chi*.
    """
    tau_slow = np.asarray(tau_slow, dtype=float)
    tau_fast = np.asarray(tau_fast, dtype=float)
    chi = np.asarray(chi_star, dtype=float)
    L = len(chi)
    if tau_slow.shape[0] != L or tau_fast.shape[0] != L:
        raise LengthMismatch(f"lengths {tau_slow.shape[0]}, {tau_fast.shape[0]}, {L}")
    if L == 0:
        raise EmptySeries("empty series")
    if not np.all(tau_fast > 0):
        raise ValueError("tau_fast must be positive")
    N = L - 1
    out = chi.copy()
    n = 0
    first = True
    while n <= N:
        n1 = n + _steps(tau_slow[n], tau_fast[n])
        if first and n1 <= N:
            out[:n1] = chi[0]
        first = False
        if n1 > N:
            out[n] = chi[n]
        else:
            n2 = n1 + _steps(tau_slow[n1], tau_fast[n1])
            out[n1:min(n2, N) + 1] = chi[n]
        n = n1
    return out


@dataclass(frozen=True)
class TrendFit:
    p1: float
    p2: float
    r_squared: float

    def predict(self, d):
        return (self.p1 * np.asarray(d, dtype=float) + self.p2) ** 3


def fit_cube_trend(dims, mean_times) -> TrendFit:
    """Fit tau = (p1 d + p2)^3 by linear least squares of tau^(1/3) on d."""
    d = np.asarray(dims, dtype=float)
    tau = np.asarray(mean_times, dtype=float)
    if d.size != tau.size:
        raise LengthMismatch("dims and times differ in length")
    if d.size < 3:
        raise DegenerateFit("need at least 3 points")
    if np.any(tau <= 0):
        raise DegenerateFit("times must be positive")
    if np.ptp(d) == 0:
        raise DegenerateFit("dims have zero variance")
    y = np.cbrt(tau)
    p1, p2 = np.polyfit(d, y, 1)
    resid = y - (p1 * d + p2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return TrendFit(float(p1), float(p2), max(0.0, min(1.0, r2)))


@dataclass(frozen=True)
class TimingSummary:
    median: float
    q25: float
    q75: float
    min: float
    max: float
    mad_over_median: float

    def as_dict(self):
        return dict(median=self.median, q25=self.q25, q75=self.q75, min=self.min,
                    max=self.max, mad_over_median=self.mad_over_median)


def timing_summary(tau_c) -> TimingSummary:
    tau = np.asarray(tau_c, dtype=float).reshape(-1)
    if tau.size == 0:
        raise EmptySeries("no timing samples")
    med = float(np.median(tau))
    q25, q75 = (float(v) for v in np.percentile(tau, [25, 75]))
    mad = float(np.median(np.abs(tau - med)))
    return TimingSummary(median=med, q25=q25, q75=q75, min=float(tau.min()), max=float(tau.max()),
                         mad_over_median=mad / med if med > 0 else 0.0)
