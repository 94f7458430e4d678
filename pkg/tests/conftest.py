import numpy as np
import pytest

from oedctl import _kernels
from oedctl.problem import ProblemDef


def quadratic_problem(Q, H, b=None, G=None, c=None, q0=None, ybar=None, f_A=None, B=None):
    """sigma = x'Qx/2 + q0'x, h = Hx + b, optional box rows G x + c <= 0."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, m = Q.shape[0], H.shape[0]
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    q0 = np.zeros(n) if q0 is None else np.asarray(q0, dtype=float)
    yb = np.zeros(m) if ybar is None else np.asarray(ybar, dtype=float)
    if G is None:
        G, c = np.zeros((1, n)), -np.ones(1)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    c = np.asarray(c, dtype=float)
    Bm = np.eye(n) if B is None else np.asarray(B, dtype=float)
    return ProblemDef(
        d_x=n, d_y=m, d_c=G.shape[0],
        f_A=f_A or (lambda t, x: np.zeros(n)),
        B=lambda t, x: Bm,
        h=lambda t, x: H @ x + b, H=lambda t, x: H,
        ybar=lambda t: yb,
        sigma=lambda t, x: 0.5 * float(x @ Q @ x) + float(q0 @ x),
        q=lambda t, x: Q @ x + q0, Q=lambda t, x: Q,
        G=lambda t: G, c=lambda t: c, name="quadratic")


@pytest.fixture
def quad():
    return quadratic_problem


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)
