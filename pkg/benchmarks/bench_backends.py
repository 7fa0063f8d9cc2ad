"""Throughput comparison: compiled kernel backend vs pure-Python fallback.

The compiled backend is the default when the extension builds; setting
MEMSDE_PURE_PYTHON=1 forces the NumPy/SciPy implementation.  This script
times both on the same workloads by re-invoking itself with the flag
set, so each process imports exactly one backend.

Usage: python benchmarks/bench_backends.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmarks(quick):
    from memsde import backend_name
    from memsde.noise import NoisePlan, gaussians
    from memsde.problems import make_builtin
    from memsde.schemes import make_scheme
    from memsde.simulate import run_levels

    scale = 0.1 if quick else 1.0
    results = {"backend": backend_name()}

    # raw Gaussian generation
    n_traj, n_vals = int(2000 * scale) or 64, 4096
    traj = np.arange(n_traj, dtype=np.uint64)
    results["gaussians_per_s"] = n_traj * n_vals / _time(
        lambda: gaussians(1, traj, 0, n_vals))

    # single-level TEM chain
    dw = make_builtin("double_well")
    scheme = make_scheme("tem", dw)
    tau, n_steps = 0.01, 2048
    M = int(20000 * scale) or 2048
    plan = NoisePlan(1, 1, tau, 1, n_steps)

    def chain():
        run_levels(dw, scheme, np.array([1.0]), tau, [1], n_steps, plan, M)

    steps = M * n_steps
    t = _time(chain)
    results["tem_fine_steps_per_s"] = steps / t
    results["tem_step_time_ns"] = 1e9 * t / steps

    # coupled 3-level run (the weak-rate workload shape)
    refs = [8, 2, 1]
    plan3 = NoisePlan(1, 1, tau, 1, n_steps)

    def coupled():
        run_levels(dw, scheme, np.array([1.0]), tau, refs, n_steps,
                   plan3, M)

    t = _time(coupled)
    results["coupled3_fine_steps_per_s"] = steps / t
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller workloads (CI-sized)")
    ap.add_argument("--single", action="store_true",
                    help="benchmark only the current backend and print "
                         "JSON (used by the self-invocation)")
    args = ap.parse_args()

    if args.single:
        print(json.dumps(run_benchmarks(args.quick)))
        return

    rows = []
    for pure in ("0", "1"):
        env = dict(os.environ, MEMSDE_PURE_PYTHON=pure)
        cmd = [sys.executable, os.path.abspath(__file__), "--single"]
        if args.quick:
            cmd.append("--quick")
        out = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if out.returncode != 0:
            sys.stderr.write(out.stderr)
            sys.exit(out.returncode)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    keys = [k for k in rows[0] if k != "backend"]
    name_w = max(len(k) for k in keys) + 2
    print(f"{'metric':<{name_w}}{rows[0]['backend']:>16}"
          f"{rows[1]['backend']:>16}{'ratio':>9}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        ratio = a / b if k.endswith("per_s") else b / a
        print(f"{k:<{name_w}}{a:>16.3g}{b:>16.3g}{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
