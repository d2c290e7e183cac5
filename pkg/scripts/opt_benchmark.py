"""Heuristic selectors against exhaustive search: optimality rate and run time.

    python scripts/opt_benchmark.py --grid 16 --trials 50
"""

import argparse
from dataclasses import replace

import numpy as np

from bssbf.cli import shipped_specs
from bssbf.harness import load_spec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--grid", type=int, default=16, help="N = L")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--candidates", choices=("full", "support"), default="full")
    args = ap.parse_args()

    spec = replace(load_spec(shipped_specs()["opt_benchmark"]), num_antennas=args.grid, grid_len=args.grid,
                   trials=args.trials, candidates=args.candidates)
    table = run_experiment(spec)
    exact = {r.extras["trial"]: r for r in table.select("bs-sbf-exhaustive-G2")}
    t_ex = np.mean([r.extras["select_time"] for r in exact.values()])
    print(f"N = L = {args.grid}, K = {spec.num_users}, {args.trials} trials")
    print(f"{'method':<22}{'optimal':>10}{'mean ratio':>12}{'time [ms]':>12}{'speedup':>10}")
    for label in ("bs-sbf-fs-G2", "bs-sbf-gibbs-G2", "bs-sbf-exhaustive-G2"):
        rows = table.select(label)
        ratio = np.array([r.sum_rate / exact[r.extras["trial"]].sum_rate for r in rows])
        t = np.mean([r.extras["select_time"] for r in rows])
        print(f"{label:<22}{np.mean(ratio >= 1 - 1e-9):>10.0%}{ratio.mean():>12.4f}{1e3 * t:>12.2f}{t_ex / t:>10.1f}")


if __name__ == "__main__":
    main()
