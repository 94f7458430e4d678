"""Problem definitions for control-affine systems with a time-variant program.

A :class:`ProblemDef` bundles the system ``xdot = f_A(x) + B(x) u`` with the
instant-wise program ``min sigma(t, x)`` subject to ``h(t, x) = ybar(t)`` and
``G(t) x + c(t) <= 0``. Analytic first and second derivatives are required;
:func:`check_derivatives` compares them to central differences.
"""
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonFiniteEvaluation
from .linalg import SYMMETRY_RTOL


@dataclass(frozen=True)
class ProblemDef:
    d_x: int
    d_y: int
    d_c: int
    f_A: Callable
    B: Callable
    h: Callable
    H: Callable
    ybar: Callable
    sigma: Callable
    q: Callable
    Q: Callable
    G: Callable
    c: Callable
    name: str = "problem"
    # Q(t, x) is exactly diagonal for every argument (enables the reciprocal path)
    diagonal_hessian: bool = False
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(slots=True)
class EvalBundle:
    t: float
    x: np.ndarray
    f_A: np.ndarray
    B: np.ndarray
    h: np.ndarray
    H: np.ndarray
    ybar: np.ndarray
    sigma: float
    q: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    c: np.ndarray
    diagonal_hessian: bool = False


def _finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.isfinite(arr).all():
        raise NonFiniteEvaluation(name)
    return arr


def _shape(name, arr, shape):
    if arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")


def eval_bundle(p: ProblemDef, t, x, checked=True, dynamics=True, cost_value=True) -> EvalBundle:
    """Call every evaluator once at (t, x) and validate shapes and finiteness.

    ``checked=False`` skips validation; the simulator uses it inside RK4 stages
    and re-evaluates with checks when a non-finite state shows up. With
    ``dynamics=False`` (unchecked only) f_A, B and sigma are not evaluated and
    are left as None / nan; the interior-point direction does not need them.
    ``cost_value=False`` (unchecked only) skips sigma alone. The checked path
    also rejects a non-symmetric Q.
    """
    if not checked:
        return EvalBundle(
            t=float(t), x=x, f_A=np.asarray(p.f_A(t, x), dtype=float) if dynamics else None,
            B=np.asarray(p.B(t, x), dtype=float) if dynamics else None,
            h=np.atleast_1d(p.h(t, x)),
            H=np.atleast_2d(p.H(t, x)), ybar=np.atleast_1d(p.ybar(t)),
            sigma=float(p.sigma(t, x)) if dynamics and cost_value else float("nan"),
            q=np.asarray(p.q(t, x), dtype=float),
            Q=np.asarray(p.Q(t, x), dtype=float),
            G=np.atleast_2d(p.G(t)).reshape(p.d_c, p.d_x), c=np.atleast_1d(p.c(t)),
            diagonal_hessian=p.diagonal_hessian)
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise NonFiniteEvaluation("x")
    dx, dy, dc = p.d_x, p.d_y, p.d_c
    fA = _finite("f_A", p.f_A(t, x))
    B = _finite("B", p.B(t, x))
    h = np.atleast_1d(_finite("h", p.h(t, x)))
    H = np.atleast_2d(_finite("H", p.H(t, x)))
    yb = np.atleast_1d(_finite("ybar", p.ybar(t)))
    sig = float(_finite("sigma", p.sigma(t, x)))
    q = _finite("q", p.q(t, x))
    Q = _finite("Q", p.Q(t, x))
    G = np.atleast_2d(_finite("G", p.G(t))).reshape(dc, dx)
    c = np.atleast_1d(_finite("c", p.c(t)))
    for name, arr, shape in (
        ("f_A", fA, (dx,)), ("B", B, (dx, dx)), ("h", h, (dy,)), ("H", H, (dy, dx)),
        ("ybar", yb, (dy,)), ("q", q, (dx,)), ("Q", Q, (dx, dx)), ("c", c, (dc,)),
    ):
        _shape(name, arr, shape)
    if dx and np.max(np.abs(Q - Q.T)) > SYMMETRY_RTOL * max(np.max(np.abs(Q)), 1.0):
        raise ValueError("Q is not symmetric")
    return EvalBundle(t=float(t), x=x, f_A=fA, B=B, h=h, H=H, ybar=yb, sigma=sig, q=q, Q=Q,
                      G=G, c=c, diagonal_hessian=p.diagonal_hessian)


@dataclass(frozen=True)
class DerivCheckReport:
    q_error: float
    Q_error: float
    H_error: float
    fd_step: float

    @property
    def max_error(self):
        return max(self.q_error, self.Q_error, self.H_error)


def _central_jacobian(fun, x, step):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def _rel_err(analytic, estimate):
    analytic = np.asarray(analytic, dtype=float)
    return float(np.max(np.abs(analytic - estimate)) / (1.0 + np.max(np.abs(analytic))))


def check_derivatives(p: ProblemDef, t, x, fd_step=1e-6) -> DerivCheckReport:
    """Compare analytic q, Q, H with central differences of sigma, q, h."""
    if not 1e-8 <= fd_step <= 1e-3:
        raise ValueError("fd_step must lie in [1e-8, 1e-3]")
    b = eval_bundle(p, t, x)

    def checked(name, fun):
        def wrapped(z):
            return _finite(name, fun(t, z))
        return wrapped

    q_fd = _central_jacobian(checked("sigma", p.sigma), b.x, fd_step).reshape(-1)
    Q_fd = _central_jacobian(checked("q", p.q), b.x, fd_step)
    H_fd = _central_jacobian(checked("h", p.h), b.x, fd_step).reshape(p.d_y, p.d_x)
    return DerivCheckReport(
        q_error=_rel_err(b.q, q_fd),
        Q_error=_rel_err(b.Q, Q_fd),
        H_error=_rel_err(b.H, H_fd),
        fd_step=fd_step,
    )


def frozen(p: ProblemDef, t_freeze) -> ProblemDef:
    """Time-invariant copy of ``p`` with every evaluator pinned at ``t_freeze``."""
    tf = float(t_freeze)
    return replace(
        p,
        name=f"{p.name}@t={tf:g}",
        h=lambda t, x: p.h(tf, x),
        H=lambda t, x: p.H(tf, x),
        ybar=lambda t: p.ybar(tf),
        sigma=lambda t, x: p.sigma(tf, x),
        q=lambda t, x: p.q(tf, x),
        Q=lambda t, x: p.Q(tf, x),
        G=lambda t: p.G(tf),
        c=lambda t: p.c(tf),
        f_A=lambda t, x: p.f_A(tf, x),
        B=lambda t, x: p.B(tf, x),
    )


def with_output_target(p: ProblemDef, ybar) -> ProblemDef:
    """Copy of ``p`` with a constant output reference."""
    yb = np.atleast_1d(np.asarray(ybar, dtype=float))
    return replace(p, ybar=lambda t: yb)
