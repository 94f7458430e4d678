"""Problem constructors: the nonlinear 2-D benchmark, scalable synthetic
families, a synthetic mean-variance portfolio, and the 3-D state-constrained
LQ example.

Synthetic problems draw from a SplitMix64 integer stream. Floats are formed as
``(z >> 11) * 2**-53`` so any language reproduces them bit for bit; matrices
are then built only from +, * and sin.
"""
import functools
import math

import numpy as np

from .problem import ProblemDef

MASK64 = (1 << 64) - 1

# Default initial conditions for the 2-D example, inside the t=0 feasible polygon.
M1_INITIAL_CONDITIONS = ((0.5, 0.4), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5))


class SplitMix64:
    """SplitMix64 generator (Steele, Lea, Flood 2014)."""

    def __init__(self, seed):
        self.state = seed & MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, n=None):
        """Floats in [0, 1) from the top 53 bits."""
        if n is None:
            return (self.next_u64() >> 11) * 2.0**-53
        return np.array([(self.next_u64() >> 11) * 2.0**-53 for _ in range(n)])

    def symmetric(self, shape):
        """Floats in [-1, 1) with the given shape, row-major fill."""
        n = int(np.prod(shape))
        return (2.0 * self.uniform(n) - 1.0).reshape(shape)


# ---------------------------------------------------------------------------
# 2-D nonlinear benchmark
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def _m1_P(t):
    th = 4.0 * math.pi**2 * math.sin(math.pi * t / 100.0)
    den = 18.0 * t + 40.0
    p11 = (9.0 * t + 9.0 * t * math.cos(th) + 40.0) / den
    p12 = 9.0 * t * math.sin(th) / den
    p22 = (9.0 * t * math.sin(0.5 * th) ** 2 + 20.0) / (9.0 * t + 20.0)
    return p11, p12, p22


@functools.lru_cache(maxsize=16)
def _m1_p(t):
    a, b = math.pi * t / 5.0, 3.0 * math.pi * t / 10.0
    return (-2.0 * math.sin(a) / 3.0 - 10.0 * math.sin(b) / 27.0,
            2.0 * math.cos(a) / 3.0 - 10.0 * math.cos(b) / 27.0)


def _m1_cost_terms(t, x):
    # q and Q are requested at the same point back to back
    return _m1_cost_terms_at(float(t), *_xy(x))


@functools.lru_cache(maxsize=8)
def _m1_cost_terms_at(t, x1, x2):
    p11, p12, p22 = _m1_P(t)
    p1, p2 = _m1_p(t)
    d1, d2 = x1 - p1, x2 - p2
    Pd1 = p11 * d1 + p12 * d2
    Pd2 = p12 * d1 + p22 * d2
    w = math.sqrt(d1 * Pd1 + d2 * Pd2 + 0.001)
    return (p11, p12, p22), (d1, d2), (Pd1, Pd2), w


def _m1_sigma(t, x):
    _, (d1, d2), _, w = _m1_cost_terms(t, x)
    return w + 0.001 * (d1 * d1 + d2 * d2)


def _m1_q(t, x):
    # grad sqrt(d'Pd + eps) = P d / w;  grad 0.001 d'd = 0.002 d
    _, (d1, d2), (Pd1, Pd2), w = _m1_cost_terms(t, x)
    return np.array([Pd1 / w + 0.002 * d1, Pd2 / w + 0.002 * d2])


def _m1_Q(t, x):
    # Hessian: P / w - (P d)(P d)^T / w^3 + 0.002 I
    (p11, p12, p22), _, (Pd1, Pd2), w = _m1_cost_terms(t, x)
    w3 = w * w * w
    return np.array([
        [p11 / w - Pd1 * Pd1 / w3 + 0.002, p12 / w - Pd1 * Pd2 / w3],
        [p12 / w - Pd1 * Pd2 / w3, p22 / w - Pd2 * Pd2 / w3 + 0.002],
    ])


def _xy(x):
    x1, x2 = np.asarray(x, dtype=float).tolist()
    return x1, x2


def _m1_h(t, x):
    x1, x2 = _xy(x)
    a = 5.0 * x1 + 25.0 * x2 * x2 - 7.0
    b = 25.0 * x1 * x1 + 5.0 * x2 - 11.0
    return np.array([-6.0 * t + a * a + b * b - 1.0])


def _m1_H(t, x):
    # dh/dx1 = 10 a + 100 x1 b;  dh/dx2 = 100 x2 a + 10 b
    x1, x2 = _xy(x)
    a = 5.0 * x1 + 25.0 * x2 * x2 - 7.0
    b = 25.0 * x1 * x1 + 5.0 * x2 - 11.0
    return np.array([[10.0 * a + 100.0 * x1 * b, 100.0 * x2 * a + 10.0 * b]])


def _frozen(a):
    a.flags.writeable = False
    return a


@functools.lru_cache(maxsize=16)
def _m1_G(t):
    s = math.sin(math.pi * t / 10.0)
    return _frozen(np.array([
        [1.0, 0.0],
        [-1.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
        [209.0 / (100.0 * s - 143.0), 1.0],
        [s / 2.0 + 73.0 / 75.0, 1.0],
        [77.0 / (8.0 * (5.0 * s + 7.0)), -1.0],
        [15.0 * s / 38.0 - 67.0 / 152.0, -1.0],
    ]))


@functools.lru_cache(maxsize=16)
def _m1_c(t):
    s = math.sin(math.pi * t / 10.0)
    return _frozen(np.array([
        -19.0 / 20.0,
        -19.0 / 20.0,
        -19.0 / 20.0,
        -19.0 / 20.0,
        -209.0 * (3.0 * s - 10.0) / (10.0 * (100.0 * s - 143.0)),
        -3.0 * s / 10.0 - 1.0,
        -77.0 * (s + 5.0) / (40.0 * (5.0 * s + 7.0)),
        3.0 * s / 10.0 - 1.0,
    ]))


def _m1_fA(t, x):
    x1, x2 = _xy(x)
    v = 1.0 / (x1 * x1 + x2 * x2 + 0.001)
    return np.array([v, v])


def _m1_B(t, x):
    x1, x2 = _xy(x)
    v = x1 * x1 + x2 * x2 + 1.0
    return np.array([[v, 0.0], [0.0, v]])


_ZERO1 = np.zeros(1)


def m1() -> ProblemDef:
    """Two-state benchmark with nonlinear output, cost, and moving polygon constraints."""
    return ProblemDef(
        d_x=2, d_y=1, d_c=8,
        f_A=_m1_fA, B=_m1_B, h=_m1_h, H=_m1_H,
        ybar=lambda t: _ZERO1,
        sigma=_m1_sigma, q=_m1_q, Q=_m1_Q, G=_m1_G, c=_m1_c,
        name="m1",
    )


# ---------------------------------------------------------------------------
# scalable synthetic family
# ---------------------------------------------------------------------------

SYNTHETIC_MODES = ("identity", "diagonal", "spd")
SYNTHETIC_DY = 6


def _cost_matrix(rng, d_x, mode):
    if mode == "identity":
        return np.eye(d_x)
    if mode == "diagonal":
        return np.diag(0.5 + 1.5 * rng.uniform(d_x))
    if mode == "spd":
        A = rng.symmetric((d_x, d_x))
        return A.T @ A / d_x + np.eye(d_x)
    raise ValueError(f"unknown mode {mode!r}; expected one of {SYNTHETIC_MODES}")


def synthetic_family(d_x, seed=0, mode="identity") -> ProblemDef:
    """Scalable stand-in for a large control-allocation problem.

    ``sigma = x^T Q x / 2`` (Q identity, diagonal or dense SPD), six outputs
    ``h = H(t) x + b(t)`` with sinusoidal H(t), b(t), target zero, and the box
    ``-1 <= x <= 1``. The actuator model is ``f_A = -100 x``, ``B = 100 I``.
    ``b(t)`` grows with d_x so that some box rows become active.
    """
    if d_x < 4 or d_x % 2:
        raise ValueError("d_x must be an even integer >= 4")
    d_y = SYNTHETIC_DY
    rng = SplitMix64(seed)
    H0 = rng.symmetric((d_y, d_x))
    H1 = 0.2 * rng.symmetric((d_y, d_x))
    b0 = 0.25 * rng.symmetric(d_y)
    b1 = 0.15 * rng.symmetric(d_y)
    omega = 1.0 + rng.uniform(d_y)
    phase = 2.0 * math.pi * rng.uniform(d_y)
    Q = _cost_matrix(rng, d_x, mode)
    scale = float(d_x)

    def H_t(t):
        return H0 + math.sin(2.0 * t) * H1

    def b_t(t):
        return scale * (b0 + b1 * np.sin(omega * t + phase))

    G = np.vstack([np.eye(d_x), -np.eye(d_x)])
    c = -np.ones(2 * d_x)
    zero_y = np.zeros(d_y)
    B = 100.0 * np.eye(d_x)
    return ProblemDef(
        d_x=d_x, d_y=d_y, d_c=2 * d_x,
        f_A=lambda t, x: -100.0 * x,
        B=lambda t, x: B,
        h=lambda t, x: H_t(t) @ x + b_t(t),
        H=lambda t, x: H_t(t),
        ybar=lambda t: zero_y,
        sigma=lambda t, x: 0.5 * float(x @ Q @ x),
        q=lambda t, x: Q @ x,
        Q=lambda t, x: Q,
        G=lambda t: G,
        c=lambda t: c,
        name=f"synthetic[{d_x},{seed},{mode}]",
        diagonal_hessian=mode != "spd",
        meta={"Q": Q, "mode": mode, "seed": seed},
    )


def portfolio_synthetic(d_x, seed=0, negative_window=None) -> ProblemDef:
    """Mean-variance allocation with a prescribed reward on synthetic data.

    ``h = [p(t)^T x, sum(x)]`` with target ``[mean of positive p_i(t), 1]``,
    switching to ``[0, 0]`` when no expected return is positive; ``sigma =
    x^T Q(t) x`` with a smoothly varying SPD covariance; box ``0 <= x <= 1``.
    ``negative_window=(t0, t1)`` shifts every return below zero on that
    interval (exercises the switching rule).
    """
    if d_x < 4:
        raise ValueError("d_x must be >= 4")
    rng = SplitMix64(seed)
    A0 = rng.symmetric((d_x, d_x))
    A1 = rng.symmetric((d_x, d_x))
    mu = 0.01 * rng.symmetric(d_x) + 0.004
    amp = 0.01 * rng.uniform(d_x)
    omega = 0.5 + rng.uniform(d_x)
    phase = 2.0 * math.pi * rng.uniform(d_x)

    def p_t(t):
        p = mu + amp * np.sin(omega * t + phase)
        if negative_window is not None and negative_window[0] <= t <= negative_window[1]:
            p = -np.abs(p) - 1e-3
        return p

    def Q_t(t):
        A = A0 + 0.3 * math.sin(t) * A1
        return (A.T @ A) / d_x + 0.1 * np.eye(d_x)

    def ybar(t):
        p = p_t(t)
        pos = p[p > 0]
        if pos.size == 0:
            return np.zeros(2)
        return np.array([pos.mean(), 1.0])

    ones = np.ones(d_x)
    G = np.vstack([np.eye(d_x), -np.eye(d_x)])
    c = np.concatenate([-np.ones(d_x), np.zeros(d_x)])
    B = 100.0 * np.eye(d_x)
    return ProblemDef(
        d_x=d_x, d_y=2, d_c=2 * d_x,
        f_A=lambda t, x: -100.0 * x,
        B=lambda t, x: B,
        h=lambda t, x: np.array([p_t(t) @ x, x.sum()]),
        H=lambda t, x: np.vstack([p_t(t), ones]),
        ybar=ybar,
        sigma=lambda t, x: float(x @ Q_t(t) @ x),
        q=lambda t, x: 2.0 * Q_t(t) @ x,
        Q=lambda t, x: 2.0 * Q_t(t),
        G=lambda t: G,
        c=lambda t: c,
        name=f"portfolio[{d_x},{seed}]",
        meta={"p": p_t, "Qcov": Q_t},
    )


# ---------------------------------------------------------------------------
# 3-D state-constrained LQ example
# ---------------------------------------------------------------------------

def sclqr_paper():
    from .sclqr import SclqrModel

    Q_xx = np.array([
        [1.04, -0.01695, 0.2303],
        [-0.01695, 0.7284, 0.2473],
        [0.2303, 0.2473, 1.898],
    ])
    Q_uu = np.array([
        [7.331, 0.1877, 2.067],
        [0.1877, 2.328, -0.6628],
        [2.067, -0.6628, 3.956],
    ]) * 1e-5
    A = np.array([
        [0.1086, -0.2032, -0.02073],
        [0.1763, 0.6136, 0.5626],
        [-0.5076, -0.3963, -0.1000],
    ])
    B = np.array([
        [0.6665, 0.9614, -0.8088],
        [0.3533, 0.1329, -0.875],
        [-0.8267, -0.5846, -0.9484],
    ])
    H = np.array([[-0.3317, 0.1136, 0.6919]])
    return SclqrModel(A=A, B=B, H=H, Q_xx=Q_xx, Q_uu=Q_uu, K_x=500.0)


# Default initial conditions for the 3-D example; both start off the plane H x = 0.
SCLQR_INITIAL_CONDITIONS = ((1.0, -0.5, 0.8), (-0.8, 1.0, -0.3))


def build(example_id, **kw):
    """Construct a packaged example by name (m1, synthetic, portfolio, sclqr_paper)."""
    if example_id == "m1":
        return m1()
    if example_id == "synthetic":
        return synthetic_family(kw.get("d_x", 32), kw.get("seed", 0), kw.get("mode", "identity"))
    if example_id == "portfolio":
        return portfolio_synthetic(kw.get("d_x", 16), kw.get("seed", 0))
    if example_id == "sclqr_paper":
        return sclqr_paper()
    raise ValueError(f"unknown example {example_id!r}")
