"""Compare the compiled and pure-Python integrators.

Times one mesh integration of the generic solution and one full shot for
each backend, and reports how far the two results differ.

    python3 benchmarks/bench_integrator.py --n 2048 --repeat 5
"""
import argparse
import json
import sys
import time

import numpy as np

from polyradial import _integrate_py, _kernels, solvers
from polyradial.kinematics import graded_mesh
from polyradial.penalty import PenaltySpec
from polyradial.solvers import ShootingConfig, shoot_immediate

try:
    from polyradial import _integrate
except ImportError:
    _integrate = None

GENERIC = PenaltySpec.smooth_step(5.0, 0.5)
A_STAR = 21.802878012231325


def best_of(fn, repeat):
    times = []
    result = None
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t)
    return min(times), result


def bench_kernel(backend, n, repeat):
    mesh = graded_mesh(n, 1e-6, 1.02)
    r0, rd0 = A_STAR * mesh[0] ** 2, 2 * A_STAR * mesh[0]
    args = _kernels.penalty_args(GENERIC)
    return best_of(lambda: backend.integrate_mesh(mesh, r0, rd0, 2, *args, 1e-10, 1e-10, 1_000_000), repeat)


def bench_shot(backend, n, repeat, monkey):
    # route the solver through the chosen backend for the duration of the call
    saved = _kernels.integrate_mesh
    monkey(backend.integrate_mesh)
    try:
        return best_of(lambda: shoot_immediate(GENERIC, ShootingConfig(2, n=n)), repeat)
    finally:
        monkey(saved)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2048, help="mesh cells")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-shot", action="store_true", help="time the mesh integration only")
    parser.add_argument("--json", action="store_true", help="print a JSON document instead of a table")
    args = parser.parse_args(argv)

    backends = [("python", _integrate_py)]
    if _integrate is not None:
        backends.append(("cython", _integrate))
    else:
        print("compiled core not built; timing the fallback only", file=sys.stderr)

    def monkey(fn):
        _kernels.integrate_mesh = fn
        solvers._kernels.integrate_mesh = fn

    rows = {}
    for name, backend in backends:
        t_kernel, (r, rd, status, steps) = bench_kernel(backend, args.n, args.repeat)
        row = {"kernel_s": t_kernel, "steps": int(steps), "r_end": float(r[-1])}
        if not args.skip_shot:
            t_shot, res = bench_shot(backend, args.n, max(1, args.repeat // 2), monkey)
            row.update(shot_s=t_shot, a=res.a)
        rows[name] = (row, r)

    doc = {"n": args.n, "backends": {k: v[0] for k, v in rows.items()}}
    if len(rows) == 2:
        rp, rc = rows["python"][1], rows["cython"][1]
        doc["max_relative_difference"] = float(np.max(np.abs(rp - rc) / np.abs(rc)))
        doc["kernel_speedup"] = rows["python"][0]["kernel_s"] / rows["cython"][0]["kernel_s"]
        if not args.skip_shot:
            doc["shot_speedup"] = rows["python"][0]["shot_s"] / rows["cython"][0]["shot_s"]

    if args.json:
        print(json.dumps(doc, indent=2))
        return 0
    print(f"n = {args.n}")
    print(f"{'backend':<8} {'kernel ms':>10} {'shot ms':>10} {'steps':>7}")
    for name, (row, _) in rows.items():
        shot = f"{1e3 * row['shot_s']:10.2f}" if "shot_s" in row else f"{'-':>10}"
        print(f"{name:<8} {1e3 * row['kernel_s']:10.3f} {shot} {row['steps']:7d}")
    if "kernel_speedup" in doc:
        print(f"kernel speedup {doc['kernel_speedup']:.1f}x", end="")
        if "shot_speedup" in doc:
            print(f", shot speedup {doc['shot_speedup']:.1f}x", end="")
        print(f", max relative difference {doc['max_relative_difference']:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
