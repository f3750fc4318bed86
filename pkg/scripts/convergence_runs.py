"""IAPI convergence traces over several seeds on one case.

Writes one CSV row per (seed, iteration) with the elite mean, elite std and
convergence statistic, enough to plot the elite-value rise and plateau.

    python3 scripts/convergence_runs.py --case case6 --config stressed6 --seeds 10 --out runs/convergence.csv
"""

from __future__ import annotations

import argparse
import csv
import time
from pathlib import Path

from hiergrid.cli import default_catalog
from hiergrid.config import load_config
from hiergrid.grid import load_case
from hiergrid.learning import run_iapi


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", default="case6")
    ap.add_argument("--config", default="stressed6")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("convergence.csv"))
    args = ap.parse_args(argv)

    case = load_case(args.case)
    scenario, iapi = load_config(args.config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "iteration", "elite_mean", "elite_std", "statistic", "pool_size"])
        for seed in range(args.seeds):
            t0 = time.perf_counter()
            rep = run_iapi(case, default_catalog(case, args.config, seed), scenario, iapi, seed, args.workers)
            for r in rep.iterations:
                w.writerow([seed, r.iteration, r.elite_mean, r.elite_std, "" if r.statistic is None else r.statistic, r.pool_size])
            state = "converged" if rep.converged else "cap"
            print(f"seed {seed}: {state} after {len(rep.iterations)} iterations, "
                  f"elite mean {rep.iterations[-1].elite_mean:.4f} ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
