"""Time the compiled and pure-Python simulation kernels on the built-in scenarios.

    python benchmarks/bench_kernels.py [--n 2000] [--reps 3]

Both backends are fed identical noise tables; the script also checks that
their outputs agree bit for bit.
"""
import argparse
import time

import numpy as np

from saver_lab.harness.scenarios import SCENARIOS, scenario
from saver_lab.kernels import CompiledProblem, NoiseTables, backends, simulate
from saver_lab.strategies import StrategyConfig


def bench(name, n, reps, kind="SaVeR"):
    sc = scenario(name)
    prob = CompiledProblem.build(sc.mdp, sc.policy)
    cfg = StrategyConfig(kind=kind, alpha=sc.alpha, width_scale=sc.defaults["width_scale"])
    noise = NoiseTables.draw(sc.mdp, n // sc.mdp.L, np.random.SeedSequence([0]))
    row, outs = {}, {}
    for backend in sorted(backends()):
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            res = simulate(prob, cfg, n, noise, record=True, track_true=True, backend=backend)
            best = min(best, time.perf_counter() - t0)
        row[backend], outs[backend] = best, res
    if len(outs) == 2:
        a, b = outs["cython"], outs["python"]
        same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("count", "sum_r", "z_trace", "actions"))
    else:
        same = None
    return row, same


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    print(f"{'scenario':<20}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}  identical")
    for name in SCENARIOS:
        row, same = bench(name, args.n, args.reps)
        py, cy = row.get("python"), row.get("cython")
        speed = f"{py / cy:.0f}x" if cy else "-"
        cy_txt = f"{cy:.4f}" if cy else "n/a"
        print(f"{name:<20}{py:>12.4f}{cy_txt:>12}{speed:>10}  {same}")


if __name__ == "__main__":
    main()
