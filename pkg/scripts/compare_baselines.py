"""Train IAPI for one seed and compare the learned DA policy with the
Random, Cost and Elastic baselines on common evaluation episodes.

Writes per-episode means (one column per policy) and a summary table, the
inputs of a box plot.

    python3 scripts/compare_baselines.py --case case6 --config stressed6 --seed 0 --episodes 200 --out runs/
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from hiergrid.cli import default_catalog
from hiergrid.config import load_config
from hiergrid.grid import load_case
from hiergrid.harness import BaselineKind, BaselinePolicy, evaluate_policy
from hiergrid.learning import ArgmaxPolicy, run_iapi


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", default="case6")
    ap.add_argument("--config", default="stressed6")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("."))
    args = ap.parse_args(argv)

    case = load_case(args.case)
    scenario, iapi = load_config(args.config)
    catalog = default_catalog(case, args.config, args.seed)
    rep = run_iapi(case, catalog, scenario, iapi, args.seed, args.workers)
    policies = {"iapi": ArgmaxPolicy(rep.psi_star, catalog)}
    policies.update({k.value: BaselinePolicy(k, catalog) for k in BaselineKind})
    stats = {name: evaluate_policy(case, pol, args.episodes, scenario, args.seed, args.workers) for name, pol in policies.items()}

    args.out.mkdir(parents=True, exist_ok=True)
    with (args.out / "baseline_episodes.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", *stats])
        for i in range(args.episodes):
            w.writerow([i, *(s.episode_means[i] for s in stats.values())])
    with (args.out / "baseline_summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "mean", "q1", "median", "q3", "iqr", "min", "max"])
        for name, s in stats.items():
            w.writerow([name, s.mean, s.q1, s.median, s.q3, s.iqr, s.min, s.max])
    for name, s in stats.items():
        print(f"{name:8s} mean {s.mean:.4f}  median {s.median:.4f}  IQR {s.iqr:.4f}")


if __name__ == "__main__":
    main()
