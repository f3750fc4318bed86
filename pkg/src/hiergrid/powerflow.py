"""DC power flow, feasibility verdicts and N-1 contingency screening.

Injections are in MW and susceptances in per unit on ``BASE_MVA``; angles are
reported in radians. Each island is balanced by a single slack unit: the
active generator with the largest ``g_max`` in the island (ties to the lowest
bus id, then lowest unit id).
"""

from __future__ import annotations

import csv
import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from hiergrid.grid import GridCase, island_labels

BASE_MVA = 100.0
# |flow| may exceed the limit by this much before it counts as an overload
OVERLOAD_TOL = 1e-6
# island injection imbalance below this is treated as zero
BALANCE_TOL = 1e-6
# reduced susceptance matrices above this 2-norm condition number are singular
COND_LIMIT = 1e12
SCREEN_CACHE_SIZE = 32


class SingularSystemError(np.linalg.LinAlgError):
    pass


class Violation(enum.Enum):
    ISLAND_WITHOUT_GENERATION = "island-without-generation"
    SLACK_LIMIT_EXCEEDED = "slack-limit-exceeded"
    LINE_OVERLOAD = "line-overload"
    SINGULAR_SYSTEM = "singular-system"


@dataclass(frozen=True)
class InjectionProfile:
    """Nodal net injection (generation + wind - demand) plus the unit state
    needed to judge slack limits.

    ``generation`` and ``active`` are per controllable unit. When ``active`` is
    None every unit is considered available; when ``generation`` is None the
    slack-limit check is skipped. ``demand`` marks which buses carry load; it
    falls back to the case's ``has_load`` flags.
    """

    net_injection: np.ndarray
    demand: np.ndarray | None = None
    generation: np.ndarray | None = None
    active: np.ndarray | None = None

    @classmethod
    def from_state(cls, case: GridCase, state) -> "InjectionProfile":
        gen_bus = case.gen_to_bus @ state.generation
        wind_bus = case.wind_to_bus @ state.wind if case.n_wind else 0.0
        return cls(gen_bus + wind_bus - state.demand, state.demand, state.generation, state.active)


@dataclass(frozen=True)
class FlowSolution:
    angles: np.ndarray
    line_flows: np.ndarray
    slack_adjustment: np.ndarray  # change of slack output per island (MW)
    islands: np.ndarray  # island label per bus
    slack_bus: np.ndarray  # per island
    slack_unit: np.ndarray  # per island, -1 if the island has no active unit


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    violation: Violation | None = None

    def __bool__(self) -> bool:
        return self.feasible


def _active_mask(case: GridCase, inj: InjectionProfile) -> np.ndarray:
    if inj.active is None:
        return np.ones(case.n_gens, dtype=bool)
    return np.asarray(inj.active, dtype=bool)


def _load_mask(case: GridCase, inj: InjectionProfile) -> np.ndarray:
    if inj.demand is None:
        return case.has_load
    return np.asarray(inj.demand) > 0


def _slack_choice(case: GridCase, buses: np.ndarray, active: np.ndarray) -> tuple[int, int]:
    """(slack bus, slack unit) for one island; unit is -1 without active units."""
    in_island = np.isin(case.gen_bus, buses) & active
    units = np.flatnonzero(in_island)
    if len(units) == 0:
        return int(buses.min()), -1
    key = sorted(units, key=lambda u: (-case.gen_max[u], case.gen_bus[u], u))
    return int(case.gen_bus[key[0]]), int(key[0])


def _laplacian(case: GridCase, outages: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    b = case.susceptance.copy()
    out = list(outages)
    if out:
        b[out] = 0.0
    a = case.incidence
    return a.T @ (b[:, None] * a), b


def solve_dc(case: GridCase, outages: Iterable[int], injections: InjectionProfile) -> FlowSolution:
    """Linearized power flow over the network with ``outages`` removed.

    Raises SingularSystemError if an island's reduced susceptance matrix has a
    condition number above ``COND_LIMIT``.
    """
    outages = sorted(set(outages))
    p = np.asarray(injections.net_injection, dtype=float)
    if p.shape != (case.n_buses,):
        raise ValueError(f"injection vector must have length {case.n_buses}")
    active = _active_mask(case, injections)
    labels = island_labels(case, outages)
    n_isl = int(labels.max()) + 1
    lap, b = _laplacian(case, outages)

    theta = np.zeros(case.n_buses)
    p_adj = p.copy()
    adjust = np.zeros(n_isl)
    slack_bus = np.zeros(n_isl, dtype=np.intp)
    slack_unit = np.full(n_isl, -1, dtype=np.intp)
    for k in range(n_isl):
        buses = np.flatnonzero(labels == k)
        sb, su = _slack_choice(case, buses, active)
        slack_bus[k], slack_unit[k] = sb, su
        imbalance = p[buses].sum()
        adjust[k] = -imbalance
        p_adj[sb] -= imbalance
        if len(buses) == 1:
            continue
        ref = case.reference_bus if case.reference_bus in buses else sb
        rest = buses[buses != ref]
        sub = lap[np.ix_(rest, rest)]
        if np.linalg.cond(sub) > COND_LIMIT:
            raise SingularSystemError(f"island {k} reduced susceptance matrix is singular")
        theta[rest] = np.linalg.solve(sub, p_adj[rest])

    flows = b * (theta[case.line_from] - theta[case.line_to])
    return FlowSolution(theta / BASE_MVA, flows, adjust, labels, slack_bus, slack_unit)


def check_feasibility(case: GridCase, outages: Iterable[int], injections: InjectionProfile) -> FeasibilityVerdict:
    outages = sorted(set(outages))
    p = np.asarray(injections.net_injection, dtype=float)
    active = _active_mask(case, injections)
    loaded = _load_mask(case, injections)
    labels = island_labels(case, outages)
    for k in range(int(labels.max()) + 1):
        buses = np.flatnonzero(labels == k)
        has_gen = bool((np.isin(case.gen_bus, buses) & active).any())
        if not has_gen and (loaded[buses].any() or abs(p[buses].sum()) > BALANCE_TOL):
            return FeasibilityVerdict(False, Violation.ISLAND_WITHOUT_GENERATION)
    try:
        sol = solve_dc(case, outages, injections)
    except SingularSystemError:
        return FeasibilityVerdict(False, Violation.SINGULAR_SYSTEM)
    if injections.generation is not None:
        g = np.asarray(injections.generation, dtype=float)
        for k, unit in enumerate(sol.slack_unit):
            if unit < 0:
                continue
            out = g[unit] + sol.slack_adjustment[k]
            if out < case.gen_min[unit] - BALANCE_TOL or out > case.gen_max[unit] + BALANCE_TOL:
                return FeasibilityVerdict(False, Violation.SLACK_LIMIT_EXCEEDED)
    if np.any(np.abs(sol.line_flows) > case.thermal_limit + OVERLOAD_TOL):
        return FeasibilityVerdict(False, Violation.LINE_OVERLOAD)
    return FeasibilityVerdict(True)


# -- vectorized N-1 screen ---------------------------------------------------


@dataclass(frozen=True)
class _Screen:
    labels: np.ndarray  # (C, n_b) island labels with contingency c added
    ptdf: np.ndarray  # (C, L, n_b) flow response to balanced injections
    singular: np.ndarray  # (C,)
    layouts: dict = field(default_factory=dict)


def _build_screen(case: GridCase, base: frozenset[int]) -> _Screen:
    nl, nb = case.n_lines, case.n_buses
    labels = np.zeros((nl, nb), dtype=np.intp)
    ptdf = np.zeros((nl, nl, nb))
    singular = np.zeros(nl, dtype=bool)
    a = case.incidence
    for c in range(nl):
        outs = sorted(base | {c})
        lab = island_labels(case, outs)
        labels[c] = lab
        lap, b = _laplacian(case, outs)
        theta = np.zeros((nb, nb))
        for k in range(int(lab.max()) + 1):
            buses = np.flatnonzero(lab == k)
            if len(buses) < 2:
                continue
            rest = buses[1:]
            sub = lap[np.ix_(rest, rest)]
            if np.linalg.cond(sub) > COND_LIMIT:
                singular[c] = True
                break
            theta[np.ix_(rest, rest)] = np.linalg.inv(sub)
        ptdf[c] = (b[:, None] * a) @ theta
    return _Screen(labels, ptdf, singular)


def _screen_for(case: GridCase, base: frozenset[int]) -> _Screen:
    cache = case.cache.setdefault("n1_screens", OrderedDict())
    scr = cache.get(base)
    if scr is None:
        scr = _build_screen(case, base)
        cache[base] = scr
        if len(cache) > SCREEN_CACHE_SIZE:
            cache.popitem(last=False)
    else:
        cache.move_to_end(base)
    return scr


@dataclass(frozen=True)
class _SlackLayout:
    """Per (outage set, active set): one row per (contingency, island) pair."""

    member: np.ndarray  # (P, n_b) island membership
    owner: np.ndarray  # (C, P) contingency owning each pair
    has_gen: np.ndarray  # (P,)
    slack_unit: np.ndarray  # (P,) -1 without generation
    shift: np.ndarray  # (P, L) flow change per MW withdrawn at the slack bus


def _slack_layout(case: GridCase, scr: _Screen, active: np.ndarray) -> _SlackLayout:
    nl, nb = case.n_lines, case.n_buses
    units = np.flatnonzero(active)
    bus_score = np.full(nb, -np.inf)
    bus_unit = np.full(nb, -1, dtype=np.intp)
    if len(units):
        # best active unit per bus, ordered by (g_max desc, bus, unit)
        order = units[np.lexsort((units, case.gen_bus[units], -case.gen_max[units]))]
        ub, first = np.unique(case.gen_bus[order], return_index=True)
        bus_score[ub] = case.gen_max[order[first]]
        bus_unit[ub] = order[first]
    # slack bus of each island is its first bus in (score desc, bus id) order
    bus_order = np.lexsort((np.arange(nb), -bus_score))
    rows = np.arange(nl)[:, None] * nb
    keys, pos = np.unique((scr.labels[:, bus_order] + rows).ravel(), return_index=True)
    c_idx, isl_idx = np.divmod(keys, nb)
    sbus = bus_order[pos % nb]
    member = (scr.labels[c_idx] == isl_idx[:, None]).astype(float)
    owner = np.zeros((nl, len(keys)))
    owner[c_idx, np.arange(len(keys))] = 1.0
    has_gen = bus_score[sbus] > -np.inf
    shift = scr.ptdf[c_idx, :, sbus] * has_gen[:, None]
    return _SlackLayout(member, owner, has_gen, np.where(has_gen, bus_unit[sbus], -1), shift)


def n1_screen(case: GridCase, base_outages: Iterable[int], injections: InjectionProfile) -> np.ndarray:
    """Feasibility of every single-line contingency on top of ``base_outages``.

    Returns a boolean vector over lines with the same semantics as calling
    ``check_feasibility`` once per contingency.
    """
    base = frozenset(int(i) for i in base_outages)
    scr = _screen_for(case, base)
    active = _active_mask(case, injections)
    key = active.tobytes()
    lay = scr.layouts.get(key)
    if lay is None:
        lay = scr.layouts[key] = _slack_layout(case, scr, active)
    p = np.asarray(injections.net_injection, dtype=float)
    loaded = _load_mask(case, injections).astype(float)

    sums = lay.member @ p
    bad = ~lay.has_gen & ((lay.member @ loaded > 0) | (np.abs(sums) > BALANCE_TOL))
    if injections.generation is not None:
        g = np.asarray(injections.generation, dtype=float)
        su = lay.slack_unit[lay.has_gen]
        out = g[su] - sums[lay.has_gen]
        bad[lay.has_gen] |= (out < case.gen_min[su] - BALANCE_TOL) | (out > case.gen_max[su] + BALANCE_TOL)
    flows = scr.ptdf @ p - lay.owner @ (lay.shift * sums[:, None])
    ok = ~scr.singular & ~(lay.owner @ bad > 0)
    ok &= ~(np.abs(flows) > case.thermal_limit + OVERLOAD_TOL).any(axis=1)
    return ok


def n1_reward(case: GridCase, post_state, realized_outage: int | None = None) -> float:
    """Fraction of single-line contingency tests passed by ``post_state``.

    Base outages are the lines with a positive countdown plus the failure
    realized this step; the contingency list is every line of the case.
    """
    base = set(np.flatnonzero(np.asarray(post_state.line_countdown) > 0).tolist())
    if realized_outage is not None:
        base.add(int(realized_outage))
    ok = n1_screen(case, base, InjectionProfile.from_state(case, post_state))
    return float(ok.mean())


def n1_reward_bruteforce(case: GridCase, post_state, realized_outage: int | None = None) -> float:
    """Reference N-1 reward: one full ``check_feasibility`` per contingency."""
    base = set(np.flatnonzero(np.asarray(post_state.line_countdown) > 0).tolist())
    if realized_outage is not None:
        base.add(int(realized_outage))
    inj = InjectionProfile.from_state(case, post_state)
    passed = sum(check_feasibility(case, base | {c}, inj).feasible for c in range(case.n_lines))
    return passed / case.n_lines


def dump_flow_csv(case: GridCase, solution: FlowSolution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "value"])
        for i, a in enumerate(solution.angles):
            w.writerow(["bus_angle", i, repr(float(a))])
        for i, f in enumerate(solution.line_flows):
            w.writerow(["line_flow", i, repr(float(f))])
