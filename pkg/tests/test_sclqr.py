import numpy as np
import pytest

from oedctl.errors import NoSettle, RankDeficient, SingularInputMatrix
from oedctl.examples import SCLQR_INITIAL_CONDITIONS, sclqr_paper
from oedctl.sclqr import (SclqrModel, build_projectors, closed_loop_cost, cost_oracle,
                          fit_decay_rate, null_param, riccati_backward, sclqr_control,
                          simulate_sclqr, solve_sclqr, transformed_lq)


def _model(H=((1.0, 0.0, 0.0),), K_x=500.0, A=None, B=None):
    return SclqrModel(A=np.zeros((3, 3)) if A is None else A, B=np.eye(3) if B is None else B,
                      H=np.array(H), Q_xx=np.eye(3), Q_uu=np.eye(3), K_x=K_x)


def test_projectors_coordinate_row():
    Om_a, Om_b = build_projectors(_model())
    np.testing.assert_allclose(Om_a, np.diag([-500.0, 0.0, 0.0]))
    np.testing.assert_allclose(Om_b, np.diag([0.0, 1.0, 1.0]))


def test_scalar_riccati_toy():
    one = np.ones((1, 1))
    sol = riccati_backward(0 * one, one, one, one, 0 * one, eps=0.0)
    assert sol.settled
    # the settle rule stops once the gain moves by < 1e-8 relative per step
    assert sol.gain[0, 0] == pytest.approx(1.0, abs=1e-5)


def test_no_state_cost_zero_gain():
    one = np.ones((1, 1))
    sol = riccati_backward(-one, one, 0 * one, one, 0 * one)
    assert sol.settled and sol.gain[0, 0] == 0.0


def test_no_settle_strict():
    one = np.ones((1, 1))
    with pytest.raises(NoSettle):
        riccati_backward(one, one, one, one, 0 * one, horizon_max=0.01, strict=True)


def test_control_on_plane_with_zero_gain():
    A = np.arange(9.0).reshape(3, 3) / 10.0
    B = np.eye(3) + 0.1 * np.ones((3, 3))
    m = _model(A=A, B=B)
    sol = solve_sclqr(m)
    sol.gain = np.zeros((3, 3))
    x = np.array([0.0, 1.0, -2.0])
    np.testing.assert_allclose(sclqr_control(m, sol, x), -np.linalg.solve(B, A @ x), atol=1e-12)


def test_null_param():
    P = null_param([[1.0, 0.0, 0.0]])
    np.testing.assert_allclose(P, [[0, 0], [1, 0], [0, 1]])
    Pp = null_param(sclqr_paper().H)
    np.testing.assert_allclose(Pp[2], [0.4795, -0.1642], atol=5e-4)
    np.testing.assert_allclose(sclqr_paper().H @ Pp, 0.0, atol=1e-15)
    with pytest.raises(RankDeficient):
        null_param([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])


def test_coordinate_row_spans_e2_e3():
    P = null_param([[0.0, 0.0, 1.0]])
    np.testing.assert_allclose(P, [[1, 0], [0, 1], [0, 0]])


def test_forms_agree_only_for_trivial_plant():
    a = transformed_lq(_model(), "exact")
    b = transformed_lq(_model(), "printed")
    np.testing.assert_allclose(a.Qxx_t, b.Qxx_t)
    m = sclqr_paper()
    assert not np.allclose(transformed_lq(m, "exact").Qxx_t, transformed_lq(m, "printed").Qxx_t)
    with pytest.raises(ValueError):
        transformed_lq(m, "other")


def test_model_validation():
    with pytest.raises(SingularInputMatrix):
        _model(B=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        _model(K_x=0.0)


def test_sclqr_example_decay_and_cost():
    m = sclqr_paper()
    sol = solve_sclqr(m)
    assert sol.settled
    x0 = np.array(SCLQR_INITIAL_CONDITIONS[0])
    run = simulate_sclqr(m, sol, x0, t_final=0.05, dt=1e-4)
    y = np.abs(run.states @ m.H.T)[:, 0]
    assert fit_decay_rate(run.times, y) == pytest.approx(500.0, rel=1e-3)
    exact = closed_loop_cost(m, sol, x0, t_final=0.05)
    assert run.running_cost[-1] == pytest.approx(exact, rel=1e-8)


def test_oracle_lower_bounds_linear_hold():
    m = _model(A=np.diag([0.5, -0.2, 0.1]))
    x0 = np.array([0.0, 1.0, -1.0])
    sol = solve_sclqr(m)
    ora = cost_oracle(m, x0, t_final=0.5, n_grid=50)
    lqr = closed_loop_cost(m, sol, x0, t_final=0.5)
    # finite-horizon optimum vs the infinite-horizon gain: same order, gain not better
    assert ora.cost <= lqr * (1 + 1e-6)
    assert ora.cost > 0.5 * lqr


def test_decay_fit():
    t = np.linspace(0, 1, 50)
    assert fit_decay_rate(t, 3.0 * np.exp(-7.0 * t)) == pytest.approx(7.0)
