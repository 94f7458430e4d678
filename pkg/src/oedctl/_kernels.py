"""Dense Cholesky kernels with two interchangeable backends.

``numba``: hand-written loops compiled with ``@njit``.
``numpy``: LAPACK ``potrf``/``potrs`` through scipy's raw wrappers.

The backend is chosen at import time from the ``OEDCTL_NUMBA`` environment
variable (``1`` by default when numba is importable, ``0`` forces numpy) and
can be switched at runtime with :func:`set_backend` for benchmarking.
``eta_dense`` fuses the weighted-pseudoinverse step for a dense factor;
``oed_eta`` also fuses the active-set and barrier assembly, so a controller
evaluation is one compiled call. Every factorization returns an ``info``
integer: ``-1`` on success, otherwise the 0-based index of the first
non-positive pivot.
"""
import math
import os

import numpy as np
from scipy.linalg import lapack

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _jit(func):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


@_jit
def _cholesky_nb(a):
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return L, j
        d = math.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / d
    return L, -1


@_jit
def _cho_solve_nb(L, b):
    # b is (n, k); forward then back substitution, column by column
    n, m = b.shape
    x = np.empty_like(b)
    for c in range(m):
        for i in range(n):
            s = b[i, c]
            for k in range(i):
                s -= L[i, k] * x[k, c]
            x[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = x[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * x[k, c]
            x[i, c] = s / L[i, i]
    return x


@_jit
def _eta_nb(L, r, H, err):
    # eta = Z S^-1 (err + H R^-1 r) - R^-1 r with Z = R^-1 H^T, S = H Z
    m = H.shape[0]
    Z = _cho_solve_nb(L, np.ascontiguousarray(H.T))
    S = H @ Z
    Ls, info = _cholesky_nb(S)
    Rr = _cho_solve_nb(L, np.ascontiguousarray(r).reshape(-1, 1))[:, 0]
    if info >= 0:
        return Rr, info
    w = np.empty((m, 1))
    for i in range(m):
        s = err[i]
        for k in range(H.shape[1]):
            s += H[i, k] * Rr[k]
        w[i, 0] = s
    v = _cho_solve_nb(Ls, w)
    out = -Rr
    for i in range(Z.shape[0]):
        for j in range(m):
            out[i] += Z[i, j] * v[j, 0]
    return out, -1


@_jit
def _oed_eta_nb(x, q, Q, G, c, H, err, designed, k_rq, p2):
    # active rows, barrier-augmented (r, R), Cholesky and eta in one call;
    # returns (eta, info of R, info of H R^-1 H^T)
    n = x.shape[0]
    g = G @ x + c
    act = np.flatnonzero(g > 0.0)
    r = q.copy()
    R = Q.copy()
    if act.size:
        Gb = np.empty((act.size, n))
        for i in range(act.size):
            Gb[i] = G[act[i]]
        GtG = Gb.T @ Gb
        if designed:
            qn = 0.0
            gn = 0.0
            for i in range(n):
                sq = 0.0
                sg = 0.0
                for j in range(n):
                    sq += abs(Q[i, j])
                    sg += abs(GtG[i, j])
                qn = max(qn, sq)
                gn = max(gn, sg)
            w = (k_rq - 1.0) * qn / gn
        else:
            w = p2 * p2
        for i in range(act.size):
            gi = g[act[i]]
            for j in range(n):
                r[j] += w * Gb[i, j] * gi
        R += w * GtG
    L, info = _cholesky_nb(R)
    if info >= 0:
        return r, info, -1
    out, sinfo = _eta_nb(L, r, H, err)
    return out, -1, sinfo


@_jit
def _lu_solve_nb(A, b):
    # Gaussian elimination with partial pivoting; info is the singular column
    n = A.shape[0]
    M = A.copy()
    x = b.copy()
    for j in range(n):
        p = j
        big = abs(M[j, j])
        for i in range(j + 1, n):
            if abs(M[i, j]) > big:
                big, p = abs(M[i, j]), i
        if big == 0.0:
            return x, j
        if p != j:
            for k in range(n):
                M[j, k], M[p, k] = M[p, k], M[j, k]
            x[j], x[p] = x[p], x[j]
        for i in range(j + 1, n):
            f = M[i, j] / M[j, j]
            if f != 0.0:
                for k in range(j, n):
                    M[i, k] -= f * M[j, k]
                x[i] -= f * x[j]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= M[i, k] * x[k]
        x[i] = s / M[i, i]
    return x, -1


@_jit
def _asymmetry_nb(M):
    # (max |M - M^T|, max |M|)
    n = M.shape[0]
    asym = 0.0
    big = 0.0
    for i in range(n):
        for j in range(n):
            a = abs(M[i, j])
            if a > big:
                big = a
            d = abs(M[i, j] - M[j, i])
            if d > asym:
                asym = d
    return asym, big


def _cholesky_np(a):
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        return c, info - 1
    if info < 0:  # pragma: no cover - argument error from LAPACK
        raise ValueError(f"dpotrf argument {-info} invalid")
    return c, -1


def _cho_solve_np(L, b):
    x, info = lapack.dpotrs(L, b, lower=1)
    if info != 0:  # pragma: no cover
        raise ValueError(f"dpotrs argument {-info} invalid")
    return x


def _eta_np(L, r, H, err):
    Z = _cho_solve_np(L, np.ascontiguousarray(H.T))
    Ls, info = _cholesky_np(H @ Z)
    Rr = _cho_solve_np(L, r[:, None])[:, 0]
    if info >= 0:
        return Rr, info
    w = err + H @ Rr
    return Z @ _cho_solve_np(Ls, w[:, None])[:, 0] - Rr, -1


def _oed_eta_np(x, q, Q, G, c, H, err, designed, k_rq, p2):
    g = G @ x + c
    Gb = G[g > 0.0]
    r, R = q, Q
    if Gb.shape[0]:
        GtG = Gb.T @ Gb
        if designed:
            w = (k_rq - 1.0) * np.max(np.sum(np.abs(Q), axis=1)) / np.max(np.sum(np.abs(GtG), axis=1))
        else:
            w = p2 * p2
        r = q + w * (Gb.T @ g[g > 0.0])
        R = Q + w * GtG
    L, info = _cholesky_np(R)
    if info >= 0:
        return r, info, -1
    out, sinfo = _eta_np(L, r, H, err)
    return out, -1, sinfo


def _lu_solve_np(A, b):
    lu, piv, x, info = lapack.dgesv(A, b)
    if info > 0:
        return x, info - 1
    return x, -1


def _asymmetry_np(M):
    return float(np.max(np.abs(M - M.T))), float(np.max(np.abs(M)))


_BACKENDS = {
    "numba": (_cholesky_nb, _cho_solve_nb, _eta_nb, _lu_solve_nb, _asymmetry_nb, _oed_eta_nb),
    "numpy": (_cholesky_np, _cho_solve_np, _eta_np, _lu_solve_np, _asymmetry_np, _oed_eta_np),
}

BACKEND = "numba" if HAVE_NUMBA and os.environ.get("OEDCTL_NUMBA", "1") != "0" else "numpy"
cholesky, cho_solve, eta_dense, lu_solve, asymmetry, oed_eta = _BACKENDS[BACKEND]


def set_backend(name):
    """Switch the active kernel backend; returns the previous name."""
    global BACKEND, cholesky, cho_solve, eta_dense, lu_solve, asymmetry, oed_eta
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev = BACKEND
    BACKEND = name
    cholesky, cho_solve, eta_dense, lu_solve, asymmetry, oed_eta = _BACKENDS[name]
    return prev


def get_backend():
    return BACKEND
