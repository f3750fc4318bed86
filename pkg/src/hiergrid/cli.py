"""Command-line entry point: ``hiergrid <command> [options]``.

Exit status is 0 on success, 1 on invalid input (bad flags, malformed or
inconsistent files) and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from hiergrid.config import load_config, load_operating_point
from hiergrid.env import build_profile_library, library_demand_range
from hiergrid.features import ActionCatalog, CatalogError, build_action_catalog, load_catalog
from hiergrid.grid import CaseValidationError, GridCase, load_case
from hiergrid.harness import evaluate_policy, make_policy, simulate_traces
from hiergrid.learning import run_iapi
from hiergrid.parallel import STREAM_CATALOG, stream
from hiergrid.powerflow import InjectionProfile, check_feasibility, dump_flow_csv, n1_reward, n1_screen, solve_dc
from hiergrid.textfmt import FormatError

log = logging.getLogger("hiergrid")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", default="case6", help="case file or bundled name (case6, rts96)")
    p.add_argument("--config", default=None, help="config file or bundled name (stressed6, smoke96)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hiergrid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pf-check", help="power flow and single-outage screen of one operating point")
    _common(p)
    p.add_argument("--op", default=None, help="operating-point file (default: the case's bundled .op)")
    p.add_argument("--realized", type=int, default=None, help="line that fails after dispatch")

    p = sub.add_parser("simulate", help="roll out a policy and write the RT trace as JSON lines")
    _common(p)
    p.add_argument("--policy", default="random", help="random, cost, elastic or a policy JSON file")
    p.add_argument("--catalog", default=None, help="catalog file (default: drawn from the seed)")
    p.add_argument("--episodes", type=int, default=1)

    p = sub.add_parser("train", help="run IAPI and write the report, trace, policy and catalog")
    _common(p)
    p.add_argument("--catalog", default=None)

    p = sub.add_parser("evaluate", help="rollout statistics of a policy")
    _common(p)
    p.add_argument("--policy", default="random")
    p.add_argument("--catalog", default=None)
    p.add_argument("--episodes", type=int, default=200)

    p = sub.add_parser("catalog", help="draw and write an action catalog")
    _common(p)
    return ap


def default_catalog(case: GridCase, config: str | None, seed: int) -> ActionCatalog:
    """The catalog a run with this (case, config, seed) uses when none is given."""
    scenario, iapi = load_config(config)
    lib = build_profile_library(case, scenario)
    return build_action_catalog(case, iapi.K, stream(seed, STREAM_CATALOG), demand_range=library_demand_range(lib))


def _catalog(args, case: GridCase) -> ActionCatalog:
    if args.catalog is not None:
        return load_catalog(case, args.catalog)
    return default_catalog(case, args.config, args.seed)


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _pf_check(args, case: GridCase) -> None:
    op = load_operating_point(case, args.op if args.op is not None else case.name)
    inj = InjectionProfile.from_state(case, op.state)
    verdict = check_feasibility(case, op.outages, inj)
    screen = n1_screen(case, op.outages, inj)
    reward = n1_reward(case, op.state, args.realized)
    print(f"base {'feasible' if verdict.feasible else 'infeasible: ' + verdict.violation.value}")
    print(f"contingencies passed {int(screen.sum())}/{case.n_lines}")
    print(f"reward {reward:.3f}")
    if args.out is not None and verdict.feasible:
        args.out.mkdir(parents=True, exist_ok=True)
        dump_flow_csv(case, solve_dc(case, op.outages, inj), args.out / "flows.csv")


def _simulate(args, case: GridCase) -> None:
    scenario, _ = load_config(args.config)
    policy, _ = make_policy(args.policy, _catalog(args, case), case)
    lines = []
    for i, trace in simulate_traces(case, policy, args.episodes, scenario, args.seed):
        lines.append(trace.to_jsonl(episode=i))
    _write(args.out, "trace.jsonl", "".join(lines))


def _train(args, case: GridCase) -> None:
    scenario, iapi = load_config(args.config)
    catalog = _catalog(args, case)
    report = run_iapi(case, catalog, scenario, iapi, args.seed, args.workers)
    out = args.out or Path(".")
    _write(out, "report.json", report.to_json())
    _write(out, "convergence.csv", report.convergence_csv())
    _write(out, "policy.json", report.policy_json())
    _write(out, "catalog.txt", catalog.to_text())
    last = report.iterations[-1]
    state = "converged" if report.converged else "hit the iteration cap"
    print(f"{state} after {len(report.iterations)} iterations, elite mean {last.elite_mean:.4f}")


def _evaluate(args, case: GridCase) -> None:
    scenario, _ = load_config(args.config)
    catalog = None if args.policy.lower() not in ("random", "cost", "elastic") else _catalog(args, case)
    policy, _ = make_policy(args.policy, catalog, case)
    stats = evaluate_policy(case, policy, args.episodes, scenario, args.seed, args.workers)
    label = Path(args.policy).stem
    out = args.out or Path(".")
    _write(out, "episodes.csv", stats.episodes_csv())
    _write(out, "summary.csv", stats.summary_csv(label))
    print(f"{label}: mean {stats.mean:.4f}, median {stats.median:.4f}, IQR {stats.iqr:.4f}")


def _catalog_cmd(args, case: GridCase) -> None:
    _write(args.out, "catalog.txt", default_catalog(case, args.config, args.seed).to_text())


COMMANDS = {
    "pf-check": _pf_check,
    "simulate": _simulate,
    "train": _train,
    "evaluate": _evaluate,
    "catalog": _catalog_cmd,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if getattr(args, "episodes", 1) < 1:
            raise UsageError("--episodes must be >= 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        case = load_case(args.case)
        COMMANDS[args.command](args, case)
    except (FormatError, CaseValidationError, CatalogError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a failed run
        log.debug("run failed", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
