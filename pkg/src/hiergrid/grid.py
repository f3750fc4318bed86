"""Static grid data model, case-file I/O and topology helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from hiergrid.textfmt import FormatError, Record, convert, read_sections

SECTIONS = {"BUS", "LINE", "GEN", "WIND", "REF"}

BUNDLED_CASES = ("case6", "rts96")


class CaseValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    has_load: bool


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    thermal_limit: float
    fail_prob: float
    repair_steps: int


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    g_min: float
    g_max: float
    cost: float


@dataclass(frozen=True)
class WindGenerator:
    id: int
    bus: int
    capacity: float


@dataclass(frozen=True, eq=False)
class GridCase:
    """Immutable network description.

    Array views of the records (``line_from``, ``gen_max`` ...) are computed once
    and cached on the instance; ``cache`` holds per-topology factorizations built
    by the power-flow module.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    wind: tuple[WindGenerator, ...]
    reference_bus: int
    name: str = "case"
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, GridCase):
            return NotImplemented
        return (
            self.buses == other.buses
            and self.lines == other.lines
            and self.generators == other.generators
            and self.wind == other.wind
            and self.reference_bus == other.reference_bus
        )

    def __hash__(self):
        return hash((self.buses, self.lines, self.generators, self.wind, self.reference_bus))

    def __getstate__(self):
        state = {k: v for k, v in self.__dict__.items() if k in _PICKLED}
        state["cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @property
    def n_wind(self) -> int:
        return len(self.wind)

    @cached_property
    def line_from(self) -> np.ndarray:
        return np.array([ln.from_bus for ln in self.lines], dtype=np.intp)

    @cached_property
    def line_to(self) -> np.ndarray:
        return np.array([ln.to_bus for ln in self.lines], dtype=np.intp)

    @cached_property
    def susceptance(self) -> np.ndarray:
        return np.array([ln.susceptance for ln in self.lines], dtype=float)

    @cached_property
    def thermal_limit(self) -> np.ndarray:
        return np.array([ln.thermal_limit for ln in self.lines], dtype=float)

    @cached_property
    def fail_prob(self) -> np.ndarray:
        return np.array([ln.fail_prob for ln in self.lines], dtype=float)

    @cached_property
    def repair_steps(self) -> np.ndarray:
        return np.array([ln.repair_steps for ln in self.lines], dtype=np.int64)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Line-by-bus incidence: +1 at the from bus, -1 at the to bus."""
        a = np.zeros((self.n_lines, self.n_buses))
        rows = np.arange(self.n_lines)
        a[rows, self.line_from] = 1.0
        a[rows, self.line_to] = -1.0
        return a

    @cached_property
    def has_load(self) -> np.ndarray:
        return np.array([b.has_load for b in self.buses], dtype=bool)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([g.bus for g in self.generators], dtype=np.intp)

    @cached_property
    def gen_min(self) -> np.ndarray:
        return np.array([g.g_min for g in self.generators], dtype=float)

    @cached_property
    def gen_max(self) -> np.ndarray:
        return np.array([g.g_max for g in self.generators], dtype=float)

    @cached_property
    def gen_cost(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @cached_property
    def wind_bus(self) -> np.ndarray:
        return np.array([w.bus for w in self.wind], dtype=np.intp)

    @cached_property
    def wind_capacity(self) -> np.ndarray:
        return np.array([w.capacity for w in self.wind], dtype=float)

    @cached_property
    def gen_to_bus(self) -> np.ndarray:
        """Bus-by-generator aggregation matrix."""
        m = np.zeros((self.n_buses, self.n_gens))
        m[self.gen_bus, np.arange(self.n_gens)] = 1.0
        return m

    @cached_property
    def wind_to_bus(self) -> np.ndarray:
        m = np.zeros((self.n_buses, self.n_wind))
        m[self.wind_bus, np.arange(self.n_wind)] = 1.0
        return m

    @property
    def total_gen_max(self) -> float:
        return float(self.gen_max.sum())


_PICKLED = {"buses", "lines", "generators", "wind", "reference_bus", "name"}


def _default_reference(generators: Sequence[Generator]) -> int:
    best = max(generators, key=lambda g: (g.g_max, -g.bus))
    return best.bus


def _records(sections: dict[str, list[Record]], name: str, types, names, source):
    return [convert(r, types, names, source) for r in sections[name]]


def parse_case(sections: dict[str, list[Record]], source: str = "<text>", name: str = "case") -> GridCase:
    buses = [Bus(*v) for v in _records(sections, "BUS", (int, bool), ("id", "has_load"), source)]
    lines = [
        Line(*v)
        for v in _records(
            sections,
            "LINE",
            (int, int, int, float, float, float, int),
            ("id", "from_bus", "to_bus", "susceptance", "thermal_limit", "fail_prob", "repair_steps"),
            source,
        )
    ]
    gens = [
        Generator(*v)
        for v in _records(sections, "GEN", (int, int, float, float, float), ("id", "bus", "g_min", "g_max", "cost"), source)
    ]
    wind = [WindGenerator(*v) for v in _records(sections, "WIND", (int, int, float), ("id", "bus", "capacity"), source)]
    refs = sections["REF"]
    if len(refs) > 1:
        raise FormatError("REF section holds more than one record", source, refs[1].lineno)
    if not gens:
        raise CaseValidationError(f"{source}: case must contain at least one generator")
    ref = convert(refs[0], (int,), ("bus",), source)[0] if refs else _default_reference(gens)
    case = GridCase(tuple(buses), tuple(lines), tuple(gens), tuple(wind), ref, name=name)
    validate_case(case, source)
    return case


def _check_ids(items, kind, source):
    ids = [it.id for it in items]
    if ids != list(range(len(ids))):
        raise CaseValidationError(f"{source}: {kind} ids must be contiguous 0..{len(ids) - 1} in file order")


def validate_case(case: GridCase, source: str = "<case>") -> None:
    def fail(msg):
        raise CaseValidationError(f"{source}: {msg}")

    if case.n_buses < 2:
        fail("a case needs at least 2 buses")
    for kind, items in (("bus", case.buses), ("line", case.lines), ("generator", case.generators), ("wind", case.wind)):
        _check_ids(items, kind, source)
    nb = case.n_buses
    for ln in case.lines:
        if not (0 <= ln.from_bus < nb and 0 <= ln.to_bus < nb):
            fail(f"line {ln.id} references a missing bus")
        if ln.from_bus == ln.to_bus:
            fail(f"line {ln.id} is a self-loop at bus {ln.from_bus}")
        if not (ln.susceptance > 0 and math.isfinite(ln.susceptance)):
            fail(f"line {ln.id} susceptance must be positive and finite")
        if not (ln.thermal_limit > 0 and math.isfinite(ln.thermal_limit)):
            fail(f"line {ln.id} thermal_limit must be positive and finite")
        if not 0.0 <= ln.fail_prob <= 1.0:
            fail(f"line {ln.id} fail_prob must lie in [0, 1]")
        if ln.repair_steps < 1:
            fail(f"line {ln.id} repair_steps must be >= 1")
    if not case.generators:
        fail("case must contain at least one generator")
    for g in case.generators:
        if not 0 <= g.bus < nb:
            fail(f"generator {g.id} references a missing bus")
        if not (0.0 <= g.g_min <= g.g_max and g.g_max > 0 and math.isfinite(g.g_max)):
            fail(f"generator {g.id} needs 0 <= g_min <= g_max and g_max > 0")
    for w in case.wind:
        if not 0 <= w.bus < nb:
            fail(f"wind unit {w.id} references a missing bus")
        if not (w.capacity > 0 and math.isfinite(w.capacity)):
            fail(f"wind unit {w.id} capacity must be positive and finite")
    if not 0 <= case.reference_bus < nb:
        fail("reference bus does not exist")
    islands = connected_components(case, ())
    if len(islands) != 1:
        fail(f"base network is disconnected into {len(islands)} islands")


def load_case(path: str | Path) -> GridCase:
    """Load and validate a case file, or a bundled case given by name."""
    path = resolve_case_path(path)
    sections = read_sections(path, SECTIONS)
    return parse_case(sections, source=str(path), name=Path(path).stem)


def resolve_case_path(name: str | Path) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[: -len(".case")] if p.name.endswith(".case") else p.name
    if stem in BUNDLED_CASES:
        return Path(str(resources.files("hiergrid") / "data" / f"{stem}.case"))
    raise FileNotFoundError(f"no case file or bundled case named {str(name)!r}")


def format_case(case: GridCase) -> str:
    out = ["BUS"]
    out += [f"{b.id} {int(b.has_load)}" for b in case.buses]
    out.append("LINE")
    out += [
        f"{ln.id} {ln.from_bus} {ln.to_bus} {ln.susceptance!r} {ln.thermal_limit!r} {ln.fail_prob!r} {ln.repair_steps}"
        for ln in case.lines
    ]
    out.append("GEN")
    out += [f"{g.id} {g.bus} {g.g_min!r} {g.g_max!r} {g.cost!r}" for g in case.generators]
    out.append("WIND")
    out += [f"{w.id} {w.bus} {w.capacity!r}" for w in case.wind]
    out += ["REF", str(case.reference_bus)]
    return "\n".join(out) + "\n"


def island_labels(case: GridCase, outages: Iterable[int]) -> np.ndarray:
    """Island label per bus; labels are numbered by their lowest bus id."""
    up = np.ones(case.n_lines, dtype=bool)
    out = list(outages)
    if out:
        up[out] = False
    nb = case.n_buses
    adj = coo_matrix(
        (np.ones(int(up.sum())), (case.line_from[up], case.line_to[up])),
        shape=(nb, nb),
    )
    _, raw = _cc(adj, directed=False)
    # renumber by first appearance so labels are canonical
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[raw]


def connected_components(case: GridCase, outages: Iterable[int] = ()) -> list[tuple[int, ...]]:
    """Partition buses into islands over the lines not in ``outages``."""
    outages = list(outages)
    for i in outages:
        if not 0 <= i < case.n_lines:
            raise IndexError(f"line {i} out of range")
    labels = island_labels(case, outages)
    return [tuple(int(b) for b in np.flatnonzero(labels == k)) for k in range(labels.max() + 1)]


def apply_outage(countdown: np.ndarray, line: int, repair_steps: int) -> np.ndarray:
    """Return a copy of ``countdown`` with ``line`` set to ``repair_steps``.

    Resets the countdown if the line is already out; callers that must not
    re-fail a line check the entry first.
    """
    countdown = np.asarray(countdown)
    if not 0 <= line < len(countdown):
        raise IndexError(f"line {line} out of range for {len(countdown)} lines")
    out = countdown.copy()
    out[line] = repair_steps
    return out
