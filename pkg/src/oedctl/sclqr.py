"""State-constrained LQR.

The input transformation ``u = B^-1 (-A x - K_x H^# H x + (I - H^# H) v)``
turns ``xdot = A x + B u`` with ``H x = 0`` into the unconstrained system
``xdot = Omega_A x + Omega_B v``. The quadratic cost is rewritten in (x, v),
the cross-term LQ problem is solved by backward Riccati integration, and a
discretized direct optimization serves as the cost oracle.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, qr

from .controller import _solve_input
from .errors import (
    DegenerateFit,
    NoSettle,
    RankDeficient,
    SingularInputMatrix,
)
from .linalg import factor_spd, pinv_identity, solve_spd, _check_symmetric

RICCATI_STEP = 1e-3
SETTLE_RTOL = 1e-8
HORIZON_MAX = 50.0
EPS_SCALE = 1e-9


@dataclass(frozen=True)
class SclqrModel:
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    Q_xx: np.ndarray
    Q_uu: np.ndarray
    K_x: float

    def __post_init__(self):
        for name in ("A", "B", "H", "Q_xx", "Q_uu"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, n) or self.H.shape[1] != n:
            raise ValueError("A, B must be square and H must have d_x columns")
        for name in ("Q_xx", "Q_uu"):
            M = getattr(self, name)
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            _check_symmetric(M)
        if not self.K_x > 0:
            raise ValueError("K_x must be positive")
        if np.linalg.matrix_rank(self.B) < n:
            raise SingularInputMatrix("B is singular")

    @property
    def d_x(self):
        return self.A.shape[0]

    @property
    def d_y(self):
        return self.H.shape[0]


@dataclass
class RiccatiSolution:
    gain: np.ndarray
    settle_time: float
    regularization_eps: float
    settled: bool = True
    P: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class TransformedLQ:
    A_t: np.ndarray
    B_t: np.ndarray
    Qxx_t: np.ndarray
    Qvv_t: np.ndarray
    N_t: np.ndarray


def build_projectors(m: SclqrModel):
    """(Omega_A, Omega_B) = (-K_x H^# H, I - H^# H) with the identity-weighted pseudoinverse."""
    wp = pinv_identity(m.H)
    PH = wp.Z @ solve_spd(wp.S_factor, m.H)
    return -m.K_x * PH, np.eye(m.d_x) - PH


def transformed_lq(m: SclqrModel, form="exact") -> TransformedLQ:
    """Cost and dynamics of the reduced problem in (x, v).

    ``form="exact"`` substitutes u = M (K x + Omega_B v) with M = B^-1 and
    K = Omega_A - A. ``form="printed"`` uses Omega_A in place of M K and
    Omega_B in place of M Omega_B, which is the same thing only when B = I
    and A = 0.
    """
    Om_a, Om_b = build_projectors(m)
    if form == "exact":
        try:
            M = np.linalg.solve(m.B, np.eye(m.d_x))
        except np.linalg.LinAlgError as exc:
            raise SingularInputMatrix(str(exc)) from None
        Ux = M @ (Om_a - m.A)
        Uv = M @ Om_b
    elif form == "printed":
        Ux, Uv = Om_a, Om_b
    else:
        raise ValueError(f"unknown form {form!r}")
    Qxx_t = m.Q_xx + Ux.T @ m.Q_uu @ Ux
    Qvv_t = Uv.T @ m.Q_uu @ Uv
    N_t = Ux.T @ m.Q_uu @ Uv
    sym = lambda X: 0.5 * (X + X.T)
    return TransformedLQ(A_t=Om_a, B_t=Om_b, Qxx_t=sym(Qxx_t), Qvv_t=sym(Qvv_t), N_t=N_t)


def default_eps(Qvv_t):
    return EPS_SCALE * float(np.trace(Qvv_t)) / Qvv_t.shape[0]


def riccati_backward(A_t, B_t, Qxx_t, Qvv_t, N_t, eps=None, horizon_max=HORIZON_MAX,
                     step=RICCATI_STEP, rtol=SETTLE_RTOL, strict=False) -> RiccatiSolution:
    """Integrate the cross-term Riccati equation backward from P(T) = 0.

    In reverse time ``dP/dtau = A^T P + P A - (P B + N) R^-1 (B^T P + N^T) + Q``
    with ``R = Qvv + eps I``, RK4 with a fixed step, until the relative change
    of the gain ``R^-1 (B^T P + N^T)`` over one step drops below ``rtol``. On
    reaching ``horizon_max`` the last gain is returned with ``settled=False``,
    or :class:`NoSettle` is raised when ``strict``.
    """
    A_t, B_t, Q, R0, N = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (A_t, B_t, Qxx_t, Qvv_t, N_t))
    if eps is None:
        eps = default_eps(R0)
    Rf = factor_spd(R0 + eps * np.eye(R0.shape[0]))

    def gain_of(P):
        return solve_spd(Rf, B_t.T @ P + N.T)

    def rhs(P):
        PBN = P @ B_t + N
        out = A_t.T @ P + P @ A_t - PBN @ solve_spd(Rf, PBN.T) + Q
        return 0.5 * (out + out.T)

    P = np.zeros_like(Q)
    K = gain_of(P)
    n_max = int(np.ceil(horizon_max / step))
    settled = False
    k = 0
    for k in range(1, n_max + 1):
        k1 = rhs(P)
        k2 = rhs(P + 0.5 * step * k1)
        k3 = rhs(P + 0.5 * step * k2)
        k4 = rhs(P + step * k3)
        P = P + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        K_new = gain_of(P)
        scale = np.linalg.norm(K_new)
        change = np.linalg.norm(K_new - K)
        K = K_new
        if scale > 0 and change <= rtol * scale:
            settled = True
            break
        if scale == 0 and change == 0 and k > 1:
            settled = True  # no incentive: the gain stays zero
            break
    sol = RiccatiSolution(gain=K, settle_time=k * step, regularization_eps=eps, settled=settled, P=P)
    if not settled and strict:
        raise NoSettle(sol)
    return sol


def solve_sclqr(m: SclqrModel, form="exact", **kw) -> RiccatiSolution:
    lq = transformed_lq(m, form)
    return riccati_backward(lq.A_t, lq.B_t, lq.Qxx_t, lq.Qvv_t, lq.N_t, **kw)


def sclqr_control(m: SclqrModel, sol: RiccatiSolution, x):
    """u = B^-1 (-A x - K_x H^# H x + (I - H^# H) v) with v = -gain x."""
    x = np.asarray(x, dtype=float)
    Om_a, Om_b = build_projectors(m)
    v = -sol.gain @ x
    return _solve_input(m.B, -m.A @ x + Om_a @ x + Om_b @ v)


def null_param(H):
    """Basis Psi of the null space of H with H Psi = 0.

    Normalized as [I; -H2^-1 H1] (H = [H1 H2], H2 the trailing square block) so
    the leading coordinates are the free parameters. When H2 is singular the
    dependent coordinates are chosen by column-pivoted QR instead and Psi is the
    identity on the remaining ones.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    d_y, d_x = H.shape
    if d_y > d_x or np.linalg.matrix_rank(H) < d_y:
        raise RankDeficient(min(d_y, d_x), "H does not have full row rank")
    dep = np.arange(d_x - d_y, d_x)
    if np.linalg.matrix_rank(H[:, dep]) < d_y:
        dep = np.sort(qr(H, pivoting=True)[2][:d_y])
    free = np.setdiff1d(np.arange(d_x), dep)
    Psi = np.zeros((d_x, d_x - d_y))
    Psi[free, np.arange(free.size)] = 1.0
    Psi[dep] = -np.linalg.solve(H[:, dep], H[:, free])
    return Psi


@dataclass
class SclqrRun:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray


def simulate_sclqr(m: SclqrModel, sol: RiccatiSolution, x0, t_final=0.5, dt=1e-4) -> SclqrRun:
    """RK4 on xdot = A x + B u(x) with the running cost integrated as an extra state."""
    n = int(round(t_final / dt))
    Om_a, Om_b = build_projectors(m)
    # u is linear in x: u = U x
    U = _solve_input_matrix(m.B, -m.A + Om_a - Om_b @ sol.gain)
    Acl = m.A + m.B @ U
    W = m.Q_xx + U.T @ m.Q_uu @ U

    def f(z):
        x = z[:-1]
        return np.append(Acl @ x, x @ W @ x)

    z = np.append(np.asarray(x0, dtype=float), 0.0)
    Z = np.empty((n + 1, z.size))
    Z[0] = z
    for k in range(n):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Z[k + 1] = z
    X = Z[:, :-1]
    return SclqrRun(times=dt * np.arange(n + 1), states=X, controls=X @ U.T, running_cost=Z[:, -1])


def _solve_input_matrix(B, rhs):
    try:
        return np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInputMatrix(str(exc)) from None


def closed_loop_cost(m: SclqrModel, sol: RiccatiSolution, x0, t_final=0.5):
    """Exact cost of the SCLQR closed loop over [0, t_final] (Van Loan integral)."""
    Om_a, Om_b = build_projectors(m)
    U = _solve_input_matrix(m.B, -m.A + Om_a - Om_b @ sol.gain)
    Acl = m.A + m.B @ U
    W = m.Q_xx + U.T @ m.Q_uu @ U
    # accumulate over short pieces; one long Van Loan exponential overflows
    pieces = max(1, int(np.ceil(t_final / 1e-3)))
    Phi, Wh = _van_loan(Acl, W, t_final / pieces)
    x = np.asarray(x0, dtype=float)
    total = 0.0
    for _ in range(pieces):
        total += float(x @ Wh @ x)
        x = Phi @ x
    return total


def _van_loan(F, W, h):
    """(e^{F h}, int_0^h e^{F^T s} W e^{F s} ds)."""
    n = F.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -F.T
    C[:n, n:] = W
    C[n:, n:] = F
    E = expm(C * h)
    Phi = E[n:, n:]
    return Phi, Phi.T @ E[:n, n:]


@dataclass
class OracleResult:
    cost: float
    v: np.ndarray
    states: np.ndarray
    iterations: int
    times: np.ndarray


def cost_oracle(m: SclqrModel, x0, t_final=0.5, n_grid=100, tol=1e-13, max_iter=5000,
                form="exact", hold="linear") -> OracleResult:
    """Direct optimization of the reduced problem over a discretized v.

    v is parametrized on ``n_grid`` intervals, piecewise linear between the
    ``n_grid + 1`` grid values (``hold="linear"``) or piecewise constant
    (``hold="constant"``). States propagate exactly for the chosen v and the
    cost of each interval is integrated exactly, so the only approximation is
    the parametrization of v. The resulting convex quadratic is minimized by
    conjugate gradients on the gradient projected onto range(Omega_B), the
    directions of v that change the trajectory.
    """
    if hold not in ("linear", "constant"):
        raise ValueError(f"unknown hold {hold!r}")
    lq = transformed_lq(m, form)
    n = m.d_x
    h = t_final / n_grid
    # z = [x; v; s] with vdot = s on each interval
    F = np.zeros((3 * n, 3 * n))
    F[:n, :n] = lq.A_t
    F[:n, n:2 * n] = lq.B_t
    F[n:2 * n, 2 * n:] = np.eye(n)
    W = np.zeros((3 * n, 3 * n))
    W[:2 * n, :2 * n] = np.block([[lq.Qxx_t, lq.N_t], [lq.N_t.T, lq.Qvv_t]])
    Phi, Wd = _van_loan(F, W, h)
    x0 = np.asarray(x0, dtype=float)
    _, Om_b = build_projectors(m)

    n_nodes = n_grid + 1 if hold == "linear" else n_grid
    nv = n_nodes * n
    # z_k = Zx[k] x0 + Zv[k] @ v for every interval k
    E = np.eye(nv)
    X0 = np.eye(n)
    Xv = np.zeros((n, nv))
    Hq = np.zeros((nv, nv))
    g = np.zeros(nv)
    c0 = 0.0
    states_x0, states_v = [X0], [Xv]
    for k in range(n_grid):
        Vk = E[k * n:(k + 1) * n]
        if hold == "linear":
            Sk = (E[(k + 1) * n:(k + 2) * n] - Vk) / h
        else:
            Sk = np.zeros((n, nv))
        Zx = np.vstack([X0, np.zeros((2 * n, n))])
        Zv = np.vstack([Xv, Vk, Sk])
        Hq += Zv.T @ Wd @ Zv
        g += Zv.T @ Wd @ (Zx @ x0)
        c0 += x0 @ Zx.T @ Wd @ Zx @ x0
        X0 = Phi[:n] @ Zx
        Xv = Phi[:n] @ Zv
        states_x0.append(X0)
        states_v.append(Xv)
    Hq = 0.5 * (Hq + Hq.T)

    def project(w):
        return (w.reshape(n_nodes, n) @ Om_b.T).reshape(-1)

    v = np.zeros(nv)
    r = -project(Hq @ v + g)
    d = r.copy()
    rr = r @ r
    rr0 = max(rr, 1e-300)
    it = 0
    for it in range(1, max_iter + 1):
        if rr <= tol * tol * rr0:
            break
        Hd = project(Hq @ d)
        curv = d @ Hd
        if curv <= 0:
            break
        a = rr / curv
        v = v + a * d
        r = r - a * Hd
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
    cost = float(v @ Hq @ v + 2.0 * g @ v + c0)
    states = np.array([A @ x0 + Bv @ v for A, Bv in zip(states_x0, states_v)])
    return OracleResult(cost=cost, v=v.reshape(n_nodes, n), states=states, iterations=it,
                        times=h * np.arange(n_grid + 1))


def fit_decay_rate(times, values, floor=1e-12):
    """Rate k of values ~ C e^{-k t} by least squares on log(values) above ``floor``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > floor
    if keep.sum() < 2:
        raise DegenerateFit("fewer than two samples above the floor")
    slope = np.polyfit(times[keep], np.log(values[keep]), 1)[0]
    return -float(slope)
