import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oedctl.barrier import BarrierConfig
from oedctl.controller import (assemble_rR, constrained_control, constrained_system_terms, eta,
                               eta_direct, evaluate, oed_control)
from oedctl.errors import SingularInputMatrix
from oedctl.examples import m1, synthetic_family
from oedctl.problem import eval_bundle


def test_no_active_rows_keeps_q_Q(quad):
    p = quad(np.eye(2), [[1.0, 0.0]])
    b = eval_bundle(p, 0.0, np.array([0.3, 0.4]))
    aug = assemble_rR(b, BarrierConfig())
    np.testing.assert_array_equal(aug.R, np.eye(2))
    np.testing.assert_array_equal(aug.r, b.q)
    assert aug.p2_used == 0.0


def test_active_row_assembly(quad):
    # g = x1 - 0.5 at x = (1, 0) gives gbar = 0.5
    p = quad(np.eye(2), [[0.0, 1.0]], G=[[1.0, 0.0]], c=[-0.5])
    b = eval_bundle(p, 0.0, np.array([1.0, 0.0]))
    b.q = np.zeros(2)
    aug = assemble_rR(b, BarrierConfig.fixed(10.0))
    np.testing.assert_allclose(aug.R, np.diag([101.0, 1.0]))
    np.testing.assert_allclose(aug.r, [50.0, 0.0])


def test_eta_one_step_to_minimizer(quad):
    p = quad(np.eye(2), [[1.0, 0.0]])
    b = eval_bundle(p, 0.0, np.array([1.0, 1.0]))
    e = eta(b, assemble_rR(b, BarrierConfig()))
    np.testing.assert_allclose(e, [-1.0, -1.0], atol=1e-14)


def test_eta_zero_at_stationary(quad):
    p = quad(np.eye(2), [[1.0, 0.0]], b=[0.0])
    b = eval_bundle(p, 0.0, np.zeros(2))
    assert np.all(eta(b, assemble_rR(b, BarrierConfig())) == 0.0)


def test_oed_control_identity_input(quad, backend):
    p = quad(np.eye(2), [[1.0, 0.0]])
    b = eval_bundle(p, 0.0, np.array([1.0, 1.0]))
    u = oed_control(b, np.array([-1.0, 2.0]), 100.0)
    np.testing.assert_allclose(u, [-100.0, 200.0])


def test_singular_input(quad, backend):
    p = quad(np.eye(2), [[1.0, 0.0]], B=np.zeros((2, 2)))
    b = eval_bundle(p, 0.0, np.ones(2))
    with pytest.raises(SingularInputMatrix):
        oed_control(b, np.ones(2), 1.0)


def test_closed_loop_identity_m1():
    # B u + f_A = K_x eta exactly
    p = m1()
    b = eval_bundle(p, 2.0, np.array([0.3, -0.2]))
    u, e, diag = evaluate(b, BarrierConfig(), 100.0)
    np.testing.assert_allclose(b.B @ u + b.f_A, 100.0 * e, rtol=1e-12, atol=1e-9)
    assert diag.eta_norm == pytest.approx(np.max(np.abs(e)))


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 20), x1=st.floats(-1.2, 1.2), x2=st.floats(-1.2, 1.2))
def test_eta_direct_matches_eta_m1(t, x1, x2):
    b = eval_bundle(m1(), t, np.array([x1, x2]))
    cfg = BarrierConfig()
    try:
        ref = eta(b, assemble_rR(b, cfg))
    except Exception as exc:
        with pytest.raises(type(exc)):
            eta_direct(b, cfg)
        return
    got = eta_direct(b, cfg)
    np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-11 * (1 + np.abs(ref).max()))


@pytest.mark.parametrize("mode", ["identity", "spd"])
def test_eta_direct_matches_eta_synthetic(mode, backend):
    p = synthetic_family(16, seed=1, mode=mode)
    x = np.linspace(-1.4, 1.4, 16)
    b = eval_bundle(p, 0.7, x)
    for cfg in (BarrierConfig(), BarrierConfig.fixed(30.0)):
        ref = eta(b, assemble_rR(b, cfg))
        np.testing.assert_allclose(eta_direct(b, cfg), ref, rtol=1e-10, atol=1e-12)


def test_constrained_terms_on_plane(quad):
    H = np.array([[1.0, 1.0, 0.0]])
    p = quad(np.eye(3), H)
    b = eval_bundle(p, 0.0, np.array([1.0, -1.0, 0.5]))
    om_a, Om_b = constrained_system_terms(b)
    np.testing.assert_allclose(om_a, 0.0, atol=1e-15)
    np.testing.assert_allclose(Om_b, np.eye(3) - H.T @ H / 2.0, atol=1e-15)


def test_constrained_control_keeps_output(quad):
    H = np.array([[1.0, 2.0, -1.0]])
    p = quad(np.eye(3), H, G=[[0.0, 0.0, 1.0]], c=[-0.2])
    b = eval_bundle(p, 0.0, np.array([0.1, 0.3, 0.5]))
    v = np.array([1.0, -2.0, 0.5])
    xdot = constrained_control(b, 10.0, v)
    assert H @ xdot == pytest.approx(-10.0 * (H @ b.x))
    # v moves only inside the joint null space of H and the active row
    other = constrained_control(b, 10.0, -3.0 * v)
    assert H @ (xdot - other) == pytest.approx(0.0, abs=1e-12)
    assert (xdot - other)[2] == pytest.approx(0.0, abs=1e-12)
