import numpy as np
import pytest

from oedctl.barrier import BarrierConfig
from oedctl.examples import (M1_INITIAL_CONDITIONS, SplitMix64, build, m1, portfolio_synthetic,
                             sclqr_paper, synthetic_family)
from oedctl.ipiter import solve_instant
from oedctl.linalg import factor_spd
from oedctl.problem import check_derivatives, eval_bundle


def test_splitmix_reference_values():
    # first outputs for seed 0 as published with the generator
    g = SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    u = SplitMix64(7).uniform(1000)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_m1_structure_and_values():
    p = m1()
    assert (p.d_x, p.d_y, p.d_c) == (2, 1, 8)
    # h(0, 0) = (-7)^2 + (-11)^2 - 1
    assert p.h(0.0, np.zeros(2))[0] == 169.0
    assert p.h(1.0, np.zeros(2))[0] == 163.0
    np.testing.assert_allclose(p.f_A(0.0, np.zeros(2)), [1000.0, 1000.0])
    np.testing.assert_allclose(p.B(0.0, np.ones(2)), 3.0 * np.eye(2))


def test_m1_initial_conditions_feasible():
    p = m1()
    for x0 in M1_INITIAL_CONDITIONS:
        b = eval_bundle(p, 0.0, np.array(x0))
        assert np.all(b.G @ b.x + b.c < 0.0)


def test_m1_derivatives_at_random_points():
    rng = np.random.default_rng(5)
    p = m1()
    for _ in range(20):
        t = rng.uniform(0, 20)
        x = rng.uniform(-1, 1, 2)
        assert check_derivatives(p, t, x, fd_step=1e-5).max_error <= 1e-5


@pytest.mark.parametrize("mode", ["identity", "diagonal", "spd"])
def test_synthetic_family(mode):
    p = synthetic_family(32, seed=2, mode=mode)
    assert (p.d_x, p.d_y, p.d_c) == (32, 6, 64)
    q = synthetic_family(32, seed=2, mode=mode)
    x = np.linspace(-1, 1, 32)
    for t in (0.0, 0.37):
        assert np.array_equal(p.h(t, x), q.h(t, x)) and np.array_equal(p.Q(t, x), q.Q(t, x))
    assert check_derivatives(p, 0.3, x).max_error <= 1e-4
    with pytest.raises(ValueError):
        synthetic_family(7)


def test_synthetic_spd_for_ten_seeds():
    for seed in range(10):
        factor_spd(synthetic_family(16, seed=seed, mode="spd").meta["Q"])


def test_portfolio():
    p = portfolio_synthetic(8, seed=1)
    assert (p.d_y, p.d_c) == (2, 16)
    assert check_derivatives(p, 0.5, np.full(8, 0.125)).max_error <= 1e-4
    q = portfolio_synthetic(8, seed=1, negative_window=(1.0, 2.0))
    np.testing.assert_array_equal(q.ybar(1.5), [0.0, 0.0])
    assert q.ybar(0.5)[1] == 1.0
    for seed in range(5):
        rep = solve_instant(portfolio_synthetic(8, seed), BarrierConfig(), 0.0, np.full(8, 0.125),
                            method="safeguarded")
        assert rep.converged


def test_sclqr_example_model():
    m = sclqr_paper()
    np.testing.assert_array_equal(m.H, [[-0.3317, 0.1136, 0.6919]])
    assert m.Q_xx[0, 0] == 1.04 and m.K_x == 500.0
    factor_spd(m.Q_uu)
    np.linalg.solve(m.B, np.ones(3))


def test_build():
    assert build("m1").name == "m1"
    assert build("synthetic", d_x=8).d_x == 8
    assert build("portfolio", d_x=6).d_x == 6
    with pytest.raises(ValueError):
        build("nope")
