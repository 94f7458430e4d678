"""Closed-form tracking controller.

The control law drives the state along the interior-point direction

    eta = H^#_R (ybar - h) - (I - H^#_R H) R^-1 r

so that the closed loop realizes ``xdot = K_x * eta``. ``(r, R)`` are the
gradient and Hessian of the barrier-augmented cost in the p1 -> infinity limit.
"""
import time
from dataclasses import dataclass

import numpy as np

from .barrier import ActiveSet, BarrierConfig, active_set, design_p2
from . import _kernels
from .errors import DimensionMismatch, RankDeficient, SingularInputMatrix
from .linalg import (
    SpdFactor,
    factor_spd,
    null_project,
    pinv_identity,
    solve_spd,
    wpinv_apply,
    wpinv_build,
)
from .problem import EvalBundle


@dataclass(frozen=True)
class AugmentedDerivatives:
    r: np.ndarray
    R: np.ndarray
    R_factor: SpdFactor
    active: ActiveSet
    p2_used: float


@dataclass
class ControlDiagnostics:
    active_count: int
    eta_norm: float
    p2_used: float
    duration: float


def assemble_rR(bundle: EvalBundle, cfg: BarrierConfig, check_symmetry=True) -> AugmentedDerivatives:
    act = active_set(bundle.t, bundle.x, bundle.G, bundle.c)
    if act.empty:
        r, R, p2 = bundle.q, bundle.Q, 0.0
    else:
        p2 = design_p2(bundle.Q, act.Gbar, cfg.k_rq) if cfg.mode == "designed" else cfg.p2
        w = p2 * p2
        r = bundle.q + w * (act.Gbar.T @ act.gbar)
        R = bundle.Q + w * (act.Gbar.T @ act.Gbar)
    # the hint is re-verified against exact zeros; box rows keep R diagonal
    R_factor = factor_spd(R, diagonal_hint=bundle.diagonal_hessian, check_symmetry=check_symmetry)
    return AugmentedDerivatives(r=r, R=R, R_factor=R_factor, active=act, p2_used=p2)


def eta_parts(bundle: EvalBundle, aug: AugmentedDerivatives):
    """Return (eta, weighted pseudoinverse factor) sharing one factorization."""
    wp = wpinv_build(bundle.H, aug.R_factor)
    eta_a = wpinv_apply(wp, bundle.ybar - bundle.h)
    eta_b = null_project(wp, solve_spd(aug.R_factor, aug.r))
    return eta_a - eta_b, wp


def eta(bundle: EvalBundle, aug: AugmentedDerivatives):
    f = aug.R_factor
    if f.is_diagonal:
        return eta_parts(bundle, aug)[0]
    H = bundle.H
    if H.shape[0] > H.shape[1]:
        raise DimensionMismatch(f"H must be wide (d_y={H.shape[0]} > d_x={H.shape[1]})")
    out, info = _kernels.eta_dense(f.lower, np.ascontiguousarray(aug.r), np.ascontiguousarray(H),
                                   bundle.ybar - bundle.h)
    if info >= 0:
        raise RankDeficient(info)
    return out


def eta_direct(bundle: EvalBundle, cfg: BarrierConfig):
    """eta straight from the bundle through the fused kernel.

    Same value as ``eta(bundle, assemble_rR(bundle, cfg))`` for a dense Hessian;
    any factorization failure is redone on that path so the usual error is raised.
    """
    if bundle.diagonal_hessian:
        return eta(bundle, assemble_rR(bundle, cfg, check_symmetry=False))
    H = bundle.H
    if H.shape[0] > H.shape[1]:
        raise DimensionMismatch(f"H must be wide (d_y={H.shape[0]} > d_x={H.shape[1]})")
    out, r_info, s_info = _kernels.oed_eta(
        bundle.x, bundle.q, bundle.Q, bundle.G, bundle.c, H, bundle.ybar - bundle.h,
        cfg.mode == "designed", float(cfg.k_rq), float(cfg.p2 or 0.0))
    if r_info >= 0 or s_info >= 0:
        return eta(bundle, assemble_rR(bundle, cfg, check_symmetry=False))
    return out


def _solve_input(B, rhs):
    B = np.asarray(B, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if B.shape != (rhs.shape[0], rhs.shape[0]):
        raise DimensionMismatch(f"B has shape {B.shape}, right-hand side length {rhs.shape[0]}")
    u, info = _kernels.lu_solve(np.ascontiguousarray(B), np.ascontiguousarray(rhs))
    if info >= 0:
        raise SingularInputMatrix(f"input matrix is singular at column {info}")
    if not np.isfinite(u).all():
        raise SingularInputMatrix("input solve produced non-finite values")
    return u


def oed_control(bundle: EvalBundle, eta_val, K_x):
    """u solving B(x) u = -f_A(x) + K_x * eta."""
    return _solve_input(bundle.B, -bundle.f_A + K_x * np.asarray(eta_val))


def evaluate(bundle: EvalBundle, cfg: BarrierConfig, K_x):
    """One full controller evaluation: returns (u, eta, diagnostics)."""
    t0 = time.perf_counter()
    aug = assemble_rR(bundle, cfg)
    e = eta(bundle, aug)
    u = oed_control(bundle, e, K_x)
    diag = ControlDiagnostics(
        active_count=len(aug.active),
        eta_norm=float(np.max(np.abs(e))),
        p2_used=aug.p2_used,
        duration=time.perf_counter() - t0,
    )
    return u, e, diag


def constrained_system_terms(bundle: EvalBundle, cfg: BarrierConfig = None):
    """(omega_A, Omega_B) for the cost-free, state-constrained controller.

    The active-constraint Newton step uses the Moore-Penrose pseudoinverse of
    Gbar, which equals (Gbar^T Gbar)^-1 Gbar^T whenever that inverse exists.
    Output error is taken as h - ybar (the plain ``h`` when ybar = 0).
    """
    H = bundle.H
    n = bundle.x.size
    wp = pinv_identity(H)
    omega_a = -wpinv_apply(wp, bundle.h - bundle.ybar)
    act = active_set(bundle.t, bundle.x, bundle.G, bundle.c)
    if act.empty:
        Omega_b = np.eye(n) - wp.Z @ solve_spd(wp.S_factor, H)
        return omega_a, Omega_b
    gstep = np.linalg.pinv(act.Gbar) @ act.gbar
    omega_a = omega_a - null_project(wp, gstep)
    stacked = np.vstack([act.Gbar, H])
    ws = pinv_identity(stacked)
    Omega_b = np.eye(n) - ws.Z @ solve_spd(ws.S_factor, stacked)
    return omega_a, Omega_b


def constrained_control(bundle: EvalBundle, K_x, v, cfg: BarrierConfig = None):
    """u = B^-1 (-f_A + K_x omega_A + Omega_B v)."""
    omega_a, Omega_b = constrained_system_terms(bundle, cfg)
    return _solve_input(bundle.B, -bundle.f_A + K_x * omega_a + Omega_b @ np.asarray(v))
