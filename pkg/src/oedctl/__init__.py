"""Closed-form optimal tracking control for time-variant constrained programs.

The controller steers ``xdot = f_A(x) + B(x) u`` so that the state follows a
minimizer of ``sigma(t, x)`` subject to ``h(t, x) = ybar(t)`` and linear
inequalities, using one interior-point direction per control evaluation.
"""
from .barrier import BarrierConfig
from .controller import assemble_rR, eta, evaluate, oed_control
from .errors import OedError
from .examples import build, m1, portfolio_synthetic, sclqr_paper, synthetic_family
from .ipiter import reference_trajectory, solve_instant
from .problem import ProblemDef, eval_bundle
from .sim import SimConfig, Trajectory, simulate_closed_loop

__version__ = "0.1.0"

__all__ = [
    "BarrierConfig", "OedError", "ProblemDef", "SimConfig", "Trajectory",
    "assemble_rR", "build", "eta", "eval_bundle", "evaluate", "m1", "oed_control",
    "portfolio_synthetic", "reference_trajectory", "sclqr_paper", "simulate_closed_loop",
    "solve_instant", "synthetic_family",
]
