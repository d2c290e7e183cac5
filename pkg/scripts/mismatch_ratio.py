"""Sum-rate ratio under angle mismatch, varpi(delta0) = R(delta0) / R(0), for K = 2, 4, 8.

    python scripts/mismatch_ratio.py --trials 300
"""

import argparse
from dataclasses import replace

from bssbf.cli import shipped_specs
from bssbf.harness import load_spec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trials", type=int, default=300)
    args = ap.parse_args()
    specs = shipped_specs()
    for K in (2, 4, 8):
        spec = replace(load_spec(specs[f"varpi_k{K}"]), trials=args.trials)
        rows = run_experiment(spec).rows
        base = rows[0].sum_rate
        ratios = ", ".join(f"{r.sweep_value:g}: {r.sum_rate / base:.3f}" for r in rows)
        print(f"K = {K}: varpi by delta0 -> {ratios}")


if __name__ == "__main__":
    main()
