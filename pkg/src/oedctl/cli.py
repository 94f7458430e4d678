"""Command-line interface: ``oedctl {run,solve,bench,sclqr,verify}``.

Exit codes: 0 success, 1 usage error, 2 numerical failure (a JSON error
record goes to stderr).
"""
import argparse
import contextlib
import fcntl
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels
from .barrier import BarrierConfig
from .errors import OedError
from .examples import M1_INITIAL_CONDITIONS, SCLQR_INITIAL_CONDITIONS, build, sclqr_paper
from .ipiter import reference_trajectory, solve_instant
from .metrics import fit_cube_trend, timing_summary
from .sim import SimConfig, simulate_closed_loop

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
BENCH_LOCK = os.path.join(tempfile.gettempdir(), "oedctl-bench.lock")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _fmt(v):
    # shortest round-trip decimal
    return repr(float(v))


def thread_limit():
    """Worker cap for non-timed phases from OEDCTL_THREADS (default 1)."""
    raw = os.environ.get("OEDCTL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"OEDCTL_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"OEDCTL_THREADS must be a positive integer, got {raw!r}")
    return n


@contextlib.contextmanager
def exclusive_slot(path=BENCH_LOCK):
    """Hold an exclusive lock so timed runs never overlap another benchmark."""
    with open(path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _problem(args):
    return build(args.example, d_x=args.dims[0] if args.dims else 32, seed=args.seed, mode=args.mode)


def _x0(args, p):
    if args.x0 is not None:
        if len(args.x0) != p.d_x:
            raise UsageError(f"--x0 needs {p.d_x} values, got {len(args.x0)}")
        return np.array(args.x0)
    if args.example == "m1":
        return np.array(M1_INITIAL_CONDITIONS[0])
    return np.zeros(p.d_x)


def write_trajectory_csv(fh, tr):
    d_x, d_y = tr.states.shape[1], tr.outputs.shape[1]
    head = ["t"] + [f"x{i + 1}" for i in range(d_x)] + [f"y{i + 1}" for i in range(d_y)]
    fh.write(",".join(head + ["sigma", "tau_c"]) + "\n")
    for k, t in enumerate(tr.times):
        # the last sample has no control evaluation after it
        tau = _fmt(tr.tau_c[k]) if k < len(tr.tau_c) else "nan"
        row = [_fmt(t)] + [_fmt(v) for v in tr.states[k]] + [_fmt(v) for v in tr.outputs[k]]
        fh.write(",".join(row + [_fmt(tr.sigma_values[k]), tau]) + "\n")


def write_reference_csv(fh, ref):
    d_x = ref.chi.shape[1]
    fh.write(",".join(["t"] + [f"chi{i + 1}" for i in range(d_x)] + ["iterations", "jump_flag"]) + "\n")
    for k, t in enumerate(ref.times):
        row = [_fmt(t)] + [_fmt(v) for v in ref.chi[k]]
        fh.write(",".join(row + [str(int(ref.iterations[k])), str(int(ref.jump_flags[k]))]) + "\n")


def cmd_run(args):
    p = _problem(args)
    x0 = _x0(args, p)
    cfg = SimConfig(t_final=args.t_final, dt=args.dt, K_x=args.kx)
    tr = simulate_closed_loop(p, cfg, BarrierConfig.designed(args.k_rq), x0)
    with _output(args.out) as fh:
        write_trajectory_csv(fh, tr)
    if tr.error is not None:
        print(json.dumps(tr.error), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_solve(args):
    p = _problem(args)
    x0 = _x0(args, p)
    times = SimConfig(t_final=args.t_final, dt=args.dt).n_steps()
    times = args.dt * np.arange(times + 1)
    ref = reference_trajectory(p, BarrierConfig.designed(args.k_rq), times, x0, tol=args.tol)
    with _output(args.out) as fh:
        write_reference_csv(fh, ref)
    if not ref.converged.all():
        bad = int(np.flatnonzero(~ref.converged)[0])
        print(json.dumps({"error": "MaxIterationsExceeded", "message": "reference samples did not converge",
                          "failed_samples": int((~ref.converged).sum()), "first_time": float(times[bad])}),
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def bench(dims, mode="spd", steps=100, warmup=5, seed=0, K_x=500.0, dt=5e-4):
    """Time controller evaluations on synthetic problems of each size.

    Problems are built (and their start points solved) in parallel up to
    OEDCTL_THREADS workers; the timed simulations then run one after another
    inside an exclusive slot. Returns the JSON-ready result.
    """
    from .examples import synthetic_family

    def prepare(d):
        p = synthetic_family(d, seed, mode)
        # quadratic cost, linear output: the plain iteration is Newton's method
        x0 = solve_instant(p, BarrierConfig(), 0.0, np.zeros(d), max_iter=50,
                           raise_on_fail=False, keep_history=False).chi_star
        return p, x0

    with ThreadPoolExecutor(max_workers=thread_limit()) as pool:
        prepared = list(pool.map(prepare, dims))
    per_dim, means = [], []
    with exclusive_slot():
        for d, (p, x0) in zip(dims, prepared):
            cfg = SimConfig(t_final=(steps + warmup) * dt, dt=dt, K_x=K_x, zoh=True)
            tr = simulate_closed_loop(p, cfg, BarrierConfig(), x0)
            if tr.error is not None:
                raise OedError(f"bench run d_x={d} failed: {tr.error}")
            tau = tr.tau_c[warmup:]
            s = timing_summary(tau)
            means.append(float(np.mean(tau)))
            per_dim.append(dict(d_x=int(d), **s.as_dict(), mean=means[-1]))
    fit = fit_cube_trend(dims, means)
    return {"dims": [int(d) for d in dims], "mode": mode, "per_dim": per_dim,
            "trend": {"p1": fit.p1, "p2": fit.p2, "r_squared": fit.r_squared}}


def cmd_bench(args):
    dims = args.dims or [32, 64, 128, 256]
    if any(d < 4 or d % 2 for d in dims):
        raise UsageError("--dims must be even integers >= 4")
    result = bench(dims, mode=args.mode, steps=args.steps, seed=args.seed, K_x=args.kx, dt=args.dt)
    with _output(args.out) as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_sclqr(args):
    from . import sclqr as S

    m = sclqr_paper()
    if args.kx is not None:
        m = S.SclqrModel(A=m.A, B=m.B, H=m.H, Q_xx=m.Q_xx, Q_uu=m.Q_uu, K_x=args.kx)
    x0s = [args.x0] if args.x0 is not None else [list(x) for x in SCLQR_INITIAL_CONDITIONS]
    for x0 in x0s:
        if len(x0) != m.d_x:
            raise UsageError(f"--x0 needs {m.d_x} values")
    sol = S.solve_sclqr(m, form=args.form)
    runs = []
    for x0 in x0s:
        run = S.simulate_sclqr(m, sol, x0, t_final=args.t_final)
        oracle = S.cost_oracle(m, x0, t_final=args.t_final, form=args.form)
        cost = S.closed_loop_cost(m, sol, x0, t_final=args.t_final)
        hx = np.linalg.norm(run.states @ m.H.T, axis=1)
        runs.append({"x0": [float(v) for v in x0], "decay_rate": S.fit_decay_rate(run.times, hx),
                     "cost": cost, "oracle_cost": oracle.cost,
                     "relative_gap": (cost - oracle.cost) / oracle.cost})
    result = {"K_x": m.K_x, "form": args.form, "gain": sol.gain.tolist(),
              "settle_time": sol.settle_time, "settled": bool(sol.settled),
              "regularization_eps": sol.regularization_eps, "runs": runs}
    with _output(args.out) as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_verify(args):
    from .acceptance import QUICK, run_criteria

    which = args.criteria or (QUICK if args.quick else None)
    results = run_criteria(which, stream=sys.stdout)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def make_parser():
    ap = _Parser(prog="oedctl", description=__doc__.splitlines()[0])
    ap.add_argument("--backend", choices=("numba", "numpy"), help="linear-algebra kernel backend")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def problem_flags(sp, t_final):
        sp.add_argument("--example", default="m1", choices=("m1", "synthetic", "portfolio"))
        sp.add_argument("--dims", type=_ints, help="d_x for synthetic examples")
        sp.add_argument("--mode", default="identity", choices=("identity", "diagonal", "spd"))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dt", type=float, default=5e-4)
        sp.add_argument("--t-final", type=float, default=t_final)
        sp.add_argument("--x0", type=_floats)
        sp.add_argument("--k-rq", type=float, default=1e4)
        sp.add_argument("--out", default="-")

    sp = sub.add_parser("run", help="simulate the closed loop and write a trajectory CSV")
    problem_flags(sp, 20.0)
    sp.add_argument("--kx", type=float, default=100.0)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("solve", help="solve the instant programs on a time grid (reference CSV)")
    problem_flags(sp, 1.0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bench", help="time controller evaluations across problem sizes")
    sp.add_argument("--dims", type=_ints)
    sp.add_argument("--mode", default="spd", choices=("identity", "diagonal", "spd"))
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--kx", type=float, default=500.0)
    sp.add_argument("--dt", type=float, default=5e-4)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sclqr", help="state-constrained LQR example: gain, decay rate, cost gap")
    sp.add_argument("--kx", type=float)
    sp.add_argument("--x0", type=_floats)
    sp.add_argument("--t-final", type=float, default=0.5)
    sp.add_argument("--form", default="exact", choices=("exact", "printed"))
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sclqr)

    sp = sub.add_parser("verify", help="run the acceptance criteria and print a pass/fail table")
    sp.add_argument("--quick", action="store_true", help="skip the long simulation criteria")
    sp.add_argument("--criteria", type=_ints, help="comma-separated criterion numbers")
    sp.set_defaults(func=cmd_verify)
    return ap


def dispatch(argv=None):
    """Parse ``argv`` and run the subcommand; returns the exit code."""
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
        prev = _kernels.set_backend(args.backend) if args.backend else None
        try:
            for name in ("kx", "dt", "t_final"):
                v = getattr(args, name, None)
                if v is not None and not v > 0:
                    raise UsageError(f"--{name.replace('_', '-')} must be positive")
            return args.func(args)
        finally:
            if prev is not None:
                _kernels.set_backend(prev)
    except UsageError as exc:
        print(f"oedctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OedError, np.linalg.LinAlgError, FloatingPointError) as exc:
        rec = exc.record() if isinstance(exc, OedError) else {"error": type(exc).__name__,
                                                                "message": str(exc)}
        print(json.dumps(rec), file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid values that pass parsing, e.g. a grid that does not divide evenly
        print(f"oedctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(dispatch())
