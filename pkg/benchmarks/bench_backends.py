"""Compare the numba and numpy kernel backends.

Times one controller evaluation (fused eta plus the input solve) on the
synthetic family, and the full closed-loop step on the 2-D benchmark, for
each backend. Run from the repository root:

    python benchmarks/bench_backends.py [--dims 8,32,128,512] [--repeat 200] [--json out.json]
"""
import argparse
import json
import statistics
import time

import numpy as np

from oedctl import _kernels
from oedctl.barrier import BarrierConfig
from oedctl.controller import eta_direct, oed_control
from oedctl.examples import m1, synthetic_family
from oedctl.problem import eval_bundle
from oedctl.sim import SimConfig, simulate_closed_loop


def time_controller(d, repeat):
    p = synthetic_family(d, seed=0, mode="spd")
    cfg = BarrierConfig()
    x = np.linspace(-1.2, 1.2, d)
    b = eval_bundle(p, 0.3, x)
    for _ in range(5):
        oed_control(b, eta_direct(b, cfg), 500.0)
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        oed_control(b, eta_direct(b, cfg), 500.0)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def time_m1_sim():
    cfg = SimConfig(t_final=0.5, dt=5e-4, K_x=100.0)
    simulate_closed_loop(m1(), SimConfig(t_final=0.01, dt=5e-4), BarrierConfig(), np.array([0.5, 0.4]))
    t0 = time.perf_counter()
    simulate_closed_loop(m1(), cfg, BarrierConfig(), np.array([0.5, 0.4]))
    return (time.perf_counter() - t0) / cfg.n_steps()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="8,32,128,512")
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--json")
    args = ap.parse_args()
    dims = [int(v) for v in args.dims.split(",")]
    backends = ["numba", "numpy"] if _kernels.HAVE_NUMBA else ["numpy"]
    result = {}
    prev = _kernels.get_backend()
    try:
        for name in backends:
            _kernels.set_backend(name)
            result[name] = {"controller_median_s": {d: time_controller(d, args.repeat) for d in dims},
                            "m1_step_s": time_m1_sim()}
    finally:
        _kernels.set_backend(prev)

    print(f"{'d_x':>6} " + " ".join(f"{b + ' [us]':>14}" for b in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for d in dims:
        vals = [result[b]["controller_median_s"][d] for b in backends]
        line = f"{d:>6} " + " ".join(f"{1e6 * v:>14.2f}" for v in vals)
        if len(vals) == 2:
            line += f"   {vals[1] / vals[0]:7.2f}x"
        print(line)
    print("m1 closed-loop step [us]: " + ", ".join(
        f"{b} {1e6 * result[b]['m1_step_s']:.1f}" for b in backends))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
