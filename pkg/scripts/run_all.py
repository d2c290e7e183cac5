"""Run shipped experiment specs and write one CSV per spec.

    python scripts/run_all.py --out results --trials 20 p_sweep k_sweep
"""

import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from bssbf.cli import shipped_specs
from bssbf.harness import load_spec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="shipped spec names (default: all)")
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--trials", type=int, default=None, help="override the trial count")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    specs = shipped_specs()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names or sorted(specs):
        spec = load_spec(specs[name])
        if args.trials is not None:
            spec = replace(spec, trials=args.trials)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        t0 = time.perf_counter()
        table = run_experiment(spec, threads=args.threads)
        table.write(out / f"{name}.csv")
        logging.info("%s: %d rows in %.1f s", name, len(table.rows), time.perf_counter() - t0)


if __name__ == "__main__":
    main()
