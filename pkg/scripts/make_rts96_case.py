"""Generate the bundled 73-bus / 99-unit / 120-line case and its healthy
operating point.

Three identical 24-bus areas with the unit mix and load buses of the IEEE
reliability test system, joined by six tie lines (two of them through a
hub bus 72). Reactances are drawn from a fixed stream. Thermal limits are
sized from the worst single-outage flow over a sweep of load levels with
every unit committed, so the healthy point passes the full screen.

    python3 scripts/make_rts96_case.py [--out-dir src/hiergrid/data]
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np

from hiergrid.env import DaAction, RtState, dispatch_heuristic
from hiergrid.grid import Bus, Generator, GridCase, Line, WindGenerator, format_case, validate_case
from hiergrid.powerflow import InjectionProfile, solve_dc

AREA = 24
HUB = 3 * AREA
FAIL_PROB = 5e-4
REPAIR = 5
LOAD_MW = 150.0  # per load bus, matches the smoke96 config
HEALTHY_LOAD = 110.0
HEALTHY_WIND = 40.0
WIND_CAP = 120.0

# 24-bus area: ring 0-1-...-23-0 plus chords, all 0-based local ids
CHORDS = [(0, 2), (0, 4), (1, 5), (2, 8), (3, 8), (5, 9), (6, 7), (7, 9), (10, 13), (11, 22), (12, 22), (14, 20), (15, 18), (16, 21)]
# (local bus, unit type, count)
UNITS = [
    (0, "U20", 2), (0, "U76", 2),
    (1, "U20", 2), (1, "U76", 2),
    (6, "U100", 3),
    (12, "U197", 3),
    (14, "U12", 5), (14, "U155", 1),
    (15, "U155", 1),
    (17, "U400", 1),
    (20, "U400", 1),
    (21, "U50", 7),
    (22, "U155", 2), (22, "U350", 1),
]  # fmt: skip
# type: (g_min, g_max, cost per MWh)
UNIT_TYPES = {
    "U12": (2.4, 12.0, 56.0),
    "U20": (16.0, 20.0, 130.0),
    "U50": (10.0, 50.0, 1.0),
    "U76": (15.2, 76.0, 17.0),
    "U100": (25.0, 100.0, 44.0),
    "U155": (54.3, 155.0, 14.0),
    "U197": (69.0, 197.0, 48.0),
    "U350": (140.0, 350.0, 15.0),
    "U400": (100.0, 400.0, 6.0),
}
LOAD_BUSES = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 14, 15, 17, 18, 19]
WIND_BUSES = [3, 10, 16]  # arbitrary placement, three farms per area
# (area, local bus, area, local bus); None marks the hub
TIES = [(0, 6, 1, 2), (0, 22, 1, 16), (1, 21, 2, 9), (0, 12, 2, 12), (1, 11, None, None), (2, 11, None, None)]


def topology(rng: np.random.Generator) -> list[tuple[int, int, float]]:
    edges = []
    for a in range(3):
        base = a * AREA
        local = [(i, (i + 1) % AREA) for i in range(AREA)] + CHORDS
        edges += [(base + i, base + j) for i, j in local]
    for a, i, b, j in TIES:
        edges.append((a * AREA + i, HUB if b is None else b * AREA + j))
    x = rng.uniform(0.02, 0.15, size=len(edges))
    return [(min(i, j), max(i, j), 1.0 / xi) for (i, j), xi in zip(edges, x)]


def build(rng: np.random.Generator, limits: np.ndarray | None = None) -> GridCase:
    edges = topology(rng)
    if limits is None:
        limits = np.full(len(edges), 1e6)
    lines = tuple(
        Line(k, i, j, float(b), float(limits[k]), FAIL_PROB, REPAIR) for k, (i, j, b) in enumerate(edges)
    )
    load = set(LOAD_BUSES)
    buses = tuple(Bus(a * AREA + i, i in load) for a in range(3) for i in range(AREA)) + (Bus(HUB, False),)
    gens = []
    for a in range(3):
        for bus, kind, count in UNITS:
            lo, hi, cost = UNIT_TYPES[kind]
            gens += [Generator(len(gens) + n, a * AREA + bus, lo, hi, cost) for n in range(count)]
    wind = tuple(
        WindGenerator(3 * a + n, a * AREA + bus, WIND_CAP) for a in range(3) for n, bus in enumerate(WIND_BUSES)
    )
    ref = 0 * AREA + 17  # a 400 MW unit
    return GridCase(buses, lines, tuple(gens), wind, ref, name="rts96")


def healthy_state(case: GridCase, load_mw: float, wind_mw: float) -> RtState:
    demand = np.where(case.has_load, load_mw, 0.0)
    wind = np.full(case.n_wind, wind_mw)
    active = np.ones(case.n_gens, dtype=bool)
    zb, zw = np.zeros(case.n_buses), np.zeros(case.n_wind)
    state = RtState(demand, wind, np.zeros(case.n_gens), np.zeros(case.n_lines, dtype=np.int64), active, 0, 0, zb, zw, zb, zw)
    return dispatch_heuristic(state, DaAction(-1, active), case)


def size_limits(case: GridCase) -> np.ndarray:
    """1.3 x the largest |flow| over every single outage and load level."""
    worst = np.zeros(case.n_lines)
    for level in np.linspace(0.3, 1.0, 8) * LOAD_MW:
        for wind_mw in (0.0, WIND_CAP):
            inj = InjectionProfile.from_state(case, healthy_state(case, level, wind_mw))
            for out in [()] + [(k,) for k in range(case.n_lines)]:
                worst = np.maximum(worst, np.abs(solve_dc(case, out, inj).line_flows))
    return np.ceil(1.3 * worst / 5.0) * 5.0


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path(__file__).resolve().parents[1] / "src/hiergrid/data")
    ap.add_argument("--seed", type=int, default=96)
    args = ap.parse_args(argv)
    draft = build(np.random.default_rng(args.seed))
    case = build(np.random.default_rng(args.seed), size_limits(draft))
    validate_case(case, "rts96")
    header = (
        "# Synthetic 73-bus case with the bus, unit and line counts of the three-area\n"
        "# reliability test system. Generated by scripts/make_rts96_case.py.\n"
        "# Wind farm placement is arbitrary.\n"
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "rts96.case").write_text(header + format_case(case), encoding="utf-8")
    op = ["# Healthy operating point, every unit committed.", "DEMAND"]
    op += [f"{b} {HEALTHY_LOAD!r}" for b in np.flatnonzero(case.has_load)]
    op += ["WIND"] + [f"{w} {HEALTHY_WIND!r}" for w in range(case.n_wind)]
    (args.out_dir / "rts96.op").write_text("\n".join(op) + "\n", encoding="utf-8")
    print(f"wrote {case.n_buses} buses, {case.n_lines} lines, {case.n_gens} units, {case.n_wind} wind")
    print(f"capacity {case.total_gen_max:.0f} MW, line limits {case.thermal_limit.min():.0f}..{math.ceil(case.thermal_limit.max())} MW")


if __name__ == "__main__":
    main()
