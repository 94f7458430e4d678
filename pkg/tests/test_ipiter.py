import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import quadratic_problem
from oedctl.acceptance import box_qp_problem
from oedctl.barrier import BarrierConfig
from oedctl.errors import MaxIterationsExceeded
from oedctl.examples import m1
from oedctl.ipiter import (contraction_ratios, detect_jumps, ip_step, kkt_residual,
                           lagrange_multiplier, reference_trajectory, solve_instant,
                           solve_stacked, stacked_ip_step, tracking_control_from_solution)
from oedctl.problem import eval_bundle, frozen

CFG = BarrierConfig()


def test_linear_quadratic_one_step(quad):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 5))
    Q = A @ A.T + np.eye(5)
    H = rng.standard_normal((2, 5))
    p = quad(Q, H, b=[0.3, -0.1], q0=rng.standard_normal(5))
    rep = solve_instant(p, CFG, 0.0, rng.standard_normal(5), tol=1e-12)
    assert rep.converged and rep.iterations <= 2
    z = lagrange_multiplier(p, CFG, 0.0, rep.chi_star)
    assert kkt_residual(p, CFG, 0.0, rep.chi_star, z) <= 1e-9
    assert kkt_residual(p, CFG, 0.0, rep.chi_star + 0.1, z) > 0


def test_zero_multiplier_at_feasible_stationary(quad):
    p = quad(np.eye(2), [[1.0, 0.0]])
    z = lagrange_multiplier(p, CFG, 0.0, np.zeros(2))
    np.testing.assert_allclose(z.zeta, 0.0)


def test_m1_instant_solve():
    p = m1()
    rep = solve_instant(p, CFG, 0.0, np.array([0.9, 0.9]), tol=1e-10, max_iter=200,
                        method="safeguarded")
    assert rep.converged
    z = lagrange_multiplier(p, CFG, 0.0, rep.chi_star)
    assert kkt_residual(p, CFG, 0.0, rep.chi_star, z) <= 1e-8


def test_max_iter_zero_raises(quad):
    p = quad(np.eye(2), [[1.0, 0.0]])
    with pytest.raises(MaxIterationsExceeded) as ei:
        solve_instant(p, CFG, 0.0, np.ones(2), max_iter=0)
    assert not ei.value.report.converged
    with pytest.raises(ValueError):
        solve_instant(p, CFG, 0.0, np.ones(2), tol=1e-16)


def _simplex_problem(quad):
    # min |x|^2/2 with sum(x) = 1.5 and x <= 0.6, pulled towards x1
    G = np.eye(3)
    return quad(np.eye(3), [[1.0, 1.0, 1.0]], b=[-1.5], q0=[-1.0, 0.0, 0.0], G=G, c=-0.6 * np.ones(3))


def test_barrier_fidelity(quad):
    # exact minimizer: x1 at its bound, the rest share the remainder
    p = _simplex_problem(quad)
    exact = np.array([0.6, 0.45, 0.45])
    for k_rq, tol in ((1e4, 1e-3), (1e6, 1e-4)):
        rep = solve_instant(p, BarrierConfig.designed(k_rq), 0.0, np.zeros(3), method="safeguarded")
        assert np.max(np.abs(rep.chi_star - exact)) <= tol
    p, exact = box_qp_problem()
    rep = solve_instant(p, BarrierConfig.designed(1e6), 0.0, np.zeros(3), method="safeguarded")
    assert np.max(np.abs(rep.chi_star - exact)) <= 1e-4


def test_feasible_interior_solution_unchanged(quad):
    p = quad(np.eye(3), [[1.0, 1.0, 1.0]], b=[-1.0], G=np.eye(3), c=-0.6 * np.ones(3))
    rep = solve_instant(p, CFG, 0.0, np.zeros(3))
    np.testing.assert_allclose(rep.chi_star, np.full(3, 1.0 / 3.0), atol=1e-12)


@pytest.mark.parametrize("N", [1, 4, 32])
def test_stacked_equals_instant(N):
    p = m1()
    times = list(np.linspace(1.0, 2.0, N))
    rng = np.random.default_rng(N)
    phi = rng.uniform(-0.5, 0.5, size=(N, 2))
    blk = stacked_ip_step(p, CFG, times, phi)
    dense = stacked_ip_step(p, CFG, times, phi, assemble="dense")
    inst = np.concatenate([ip_step(p, CFG, t, c) for t, c in zip(times, phi)])
    np.testing.assert_allclose(blk, inst, atol=1e-12)
    np.testing.assert_allclose(dense, inst, atol=1e-12 * (1 + np.abs(inst).max()))


def test_solve_stacked_linear(quad):
    p = quad(np.eye(2), [[1.0, 1.0]], b=[-1.0])
    phi, k = solve_stacked(p, CFG, [0.0, 1.0, 2.0], np.zeros(6))
    np.testing.assert_allclose(phi, 0.5, atol=1e-12)
    assert k <= 2


def test_reference_time_invariant():
    p = frozen(m1(), 0.0)
    start = solve_instant(p, CFG, 0.0, np.array([0.5, 0.4]), method="safeguarded").chi_star
    ref = reference_trajectory(p, CFG, np.linspace(0, 0.05, 21), start)
    assert ref.converged.all()
    assert np.max(np.abs(ref.chi - ref.chi[0])) <= 1e-9
    assert not ref.jump_flags.any()
    assert ref.iterations[1:].max() <= 3


def test_reference_warm_start_m1():
    times = np.arange(0, 201) * 5e-4
    ref = reference_trajectory(m1(), CFG, times, np.array([0.5, 0.4]))
    assert ref.converged.all() and np.isfinite(ref.chi).all()
    assert np.median(ref.iterations[10:]) <= 3


def test_reference_rejects_unsorted_times(quad):
    with pytest.raises(ValueError):
        reference_trajectory(quad(np.eye(2), [[1.0, 0.0]]), CFG, [0.0, 0.0], np.zeros(2))


def test_detect_jumps():
    chi = np.cumsum(np.full((50, 2), 0.01), axis=0)
    chi[30:] += 1.0
    flags = detect_jumps(chi)
    assert list(np.flatnonzero(flags)) == [30]
    assert not detect_jumps(np.ones((10, 2))).any()


def test_contraction_ratios():
    star = np.zeros(2)
    hist = [np.array([1e-4 * 0.5 ** k, 0.0]) for k in range(6)]
    np.testing.assert_allclose(contraction_ratios(hist, star), 0.5)


@settings(max_examples=20, deadline=None)
@given(x=st.floats(-1, 1), K=st.floats(1, 1000))
def test_tracking_control(x, K):
    p = quadratic_problem(np.eye(2), [[1.0, 0.0]])
    b = eval_bundle(p, 0.0, np.array([x, -x]))
    np.testing.assert_allclose(tracking_control_from_solution(b, b.x, K), 0.0)
    u = tracking_control_from_solution(b, np.array([1.0, 2.0]), K)
    np.testing.assert_allclose(u, K * (np.array([1.0, 2.0]) - b.x))
