import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oedctl.errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from oedctl.linalg import (factor_spd, identity_factor, null_project, pinv_identity, solve_spd,
                           wpinv_apply, wpinv_build)


@pytest.mark.parametrize("M, b, x", [
    (np.eye(2), [3.0, -1.0], [3.0, -1.0]),
    ([[4.0]], [8.0], [2.0]),
    ([[4.0, 2.0], [2.0, 3.0]], [2.0, 1.0], [0.5, 0.0]),
])
def test_factor_and_solve_small(M, b, x, backend):
    f = factor_spd(M)
    np.testing.assert_allclose(solve_spd(f, b), x, atol=1e-14)


def test_solve_matrix_rhs(backend):
    np.testing.assert_allclose(solve_spd(factor_spd(np.eye(3)), np.eye(3)), np.eye(3))
    f = factor_spd(np.diag([2.0, 8.0]), diagonal_hint=True)
    assert f.is_diagonal
    np.testing.assert_allclose(solve_spd(f, np.array([[2.0], [8.0]])), [[1.0], [1.0]])
    inv = solve_spd(factor_spd([[4.0, 2.0], [2.0, 3.0]]), np.eye(2))
    np.testing.assert_allclose(inv, np.array([[3.0, -2.0], [-2.0, 4.0]]) / 8.0, atol=1e-15)


def test_diagonal_hint_falls_back_on_offdiagonal():
    f = factor_spd([[4.0, 2.0], [2.0, 3.0]], diagonal_hint=True)
    assert not f.is_diagonal


def test_not_pd_reports_pivot(backend):
    with pytest.raises(NotPositiveDefinite) as ei:
        factor_spd([[1.0, 0.0], [0.0, -1.0]])
    assert ei.value.pivot == 1
    with pytest.raises(NotPositiveDefinite) as ei:
        factor_spd(np.diag([1.0, 0.0, 2.0]), diagonal_hint=True)
    assert ei.value.pivot == 1


def test_asymmetric_and_shape_errors():
    with pytest.raises(ValueError):
        factor_spd([[2.0, 1.0], [0.0, 2.0]])
    with pytest.raises(DimensionMismatch):
        factor_spd(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        solve_spd(factor_spd(np.eye(2)), np.ones(3))


def test_wpinv_examples():
    f = wpinv_build([[1.0, 0.0]], identity_factor(2))
    np.testing.assert_allclose(f.matrix(), [[1.0], [0.0]])
    np.testing.assert_allclose(wpinv_apply(f, [2.0]), [2.0, 0.0])
    np.testing.assert_allclose(null_project(f, [3.0, 7.0]), [0.0, 7.0])
    g = wpinv_build([[1.0, 1.0]], factor_spd(np.diag([1.0, 4.0]), diagonal_hint=True))
    np.testing.assert_allclose(g.matrix(), [[0.8], [0.2]])
    np.testing.assert_allclose(wpinv_apply(g, [1.0]), [0.8, 0.2])
    np.testing.assert_allclose(wpinv_apply(g, [0.0]), [0.0, 0.0])


def test_rank_deficient_and_tall():
    with pytest.raises(RankDeficient):
        pinv_identity([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        pinv_identity(np.ones((3, 2)))


def _spd(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 9), m=st.integers(1, 4))
def test_pinv_identities(seed, n, m):
    if m > n:
        m = n
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((m, n))
    W = _spd(seed + 1, n)
    f = wpinv_build(H, factor_spd(W))
    P = f.matrix()
    np.testing.assert_allclose(H @ P, np.eye(m), atol=1e-9)
    v = rng.standard_normal(n)
    Nv = null_project(f, v)
    np.testing.assert_allclose(H @ Nv, 0.0, atol=1e-9 * (1 + np.abs(v).sum()))
    # the projector is idempotent and W-orthogonal to range(W^-1 H^T)
    np.testing.assert_allclose(null_project(f, Nv), Nv, atol=1e-9 * (1 + np.abs(v).sum()))
    np.testing.assert_allclose(P.T @ W @ Nv, 0.0, atol=1e-8 * (1 + np.abs(v).sum()))


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5,), elements=st.floats(-10, 10)), st.integers(0, 1000))
def test_cholesky_solve_matches_numpy(b, seed):
    M = _spd(seed, 5)
    np.testing.assert_allclose(solve_spd(factor_spd(M), b), np.linalg.solve(M, b),
                               rtol=1e-10, atol=1e-10)
