"""Config and operating-point files, in the same sectioned text format as
case files.

Config files hold ``key value`` records in SCENARIO and IAPI sections and
optional PROFILE rows (``name kind valley peak tilt wind``). Operating-point
files hold DEMAND (``bus mw``), WIND (``unit mw``), optional GEN (``unit mw``,
listed units are the active set) and optional OUTAGE (``line``) records.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from hiergrid.env import DaAction, ProfileSpec, RtState, ScenarioConfig, dispatch_heuristic
from hiergrid.grid import GridCase
from hiergrid.learning import IapiConfig
from hiergrid.textfmt import FormatError, Record, convert, parse_sections

CONFIG_SECTIONS = {"SCENARIO", "IAPI", "PROFILE"}
OP_SECTIONS = {"DEMAND", "WIND", "GEN", "OUTAGE"}
BUNDLED_CONFIGS = ("stressed6", "smoke96")


def _parse_value(token: str, annotation: str, default, where: str):
    if token.lower() == "none" and "None" in annotation:
        return None
    try:
        if "bool" in annotation:
            if token.lower() not in ("0", "1", "true", "false"):
                raise ValueError
            return token.lower() in ("1", "true")
        if "int" in annotation and "float" not in annotation:
            return int(token)
        if "float" in annotation:
            return float(token)
    except ValueError:
        raise FormatError(f"cannot read {token!r} as {annotation}", where) from None
    raise FormatError(f"field of type {annotation} cannot be set from a config file", where)


def _apply(cls, records: list[Record], source: str, **extra):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = dict(extra)
    for rec in records:
        where = f"{source}:{rec.lineno}"
        if len(rec.tokens) != 2:
            raise FormatError(f"{rec.section} records are 'key value' pairs", source, rec.lineno)
        key, tok = rec.tokens
        if key not in fields or key == "profiles":
            raise FormatError(f"unknown {rec.section} key {key!r}", source, rec.lineno)
        f = fields[key]
        values[key] = _parse_value(tok, str(f.type), f.default, where)
    try:
        return cls(**values)
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def parse_config(text: str, source: str = "<config>") -> tuple[ScenarioConfig, IapiConfig]:
    sections = parse_sections(text, CONFIG_SECTIONS, source)
    extra = {}
    if sections["PROFILE"]:
        names = ("name", "kind", "valley", "peak", "tilt", "wind")
        extra["profiles"] = tuple(
            ProfileSpec(*convert(r, (str, str, float, float, float, float), names, source)) for r in sections["PROFILE"]
        )
        for spec in extra["profiles"]:
            if spec.kind not in ("flat", "single", "double"):
                raise FormatError(f"unknown profile kind {spec.kind!r}", source)
    scenario = _apply(ScenarioConfig, sections["SCENARIO"], source, **extra)
    iapi = _apply(IapiConfig, sections["IAPI"], source)
    return scenario, iapi


def resolve_config_path(name: str | Path) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[: -len(".cfg")] if p.name.endswith(".cfg") else p.name
    if stem in BUNDLED_CONFIGS:
        return Path(str(resources.files("hiergrid") / "data" / f"{stem}.cfg"))
    raise FileNotFoundError(f"no config file or bundled config named {str(name)!r}")


def load_config(path: str | Path | None) -> tuple[ScenarioConfig, IapiConfig]:
    if path is None:
        return ScenarioConfig(), IapiConfig()
    path = resolve_config_path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def format_config(scenario: ScenarioConfig, iapi: IapiConfig) -> str:
    out = ["SCENARIO"]
    for f in dataclasses.fields(scenario):
        if f.name != "profiles":
            out.append(f"{f.name} {_fmt(getattr(scenario, f.name))}")
    out.append("PROFILE")
    for p in scenario.profiles:
        out.append(f"{p.name} {p.kind} {p.valley!r} {p.peak!r} {p.tilt!r} {p.wind!r}")
    out.append("IAPI")
    for f in dataclasses.fields(iapi):
        out.append(f"{f.name} {_fmt(getattr(iapi, f.name))}")
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


@dataclass(frozen=True)
class OperatingPoint:
    state: RtState
    outages: tuple[int, ...]


def parse_operating_point(case: GridCase, text: str, source: str = "<op>") -> OperatingPoint:
    sections = parse_sections(text, OP_SECTIONS, source)
    demand = np.zeros(case.n_buses)
    wind = np.zeros(case.n_wind)
    for r in sections["DEMAND"]:
        bus, mw = convert(r, (int, float), ("bus", "mw"), source)
        if not 0 <= bus < case.n_buses:
            raise FormatError(f"bus {bus} not in case", source, r.lineno)
        demand[bus] = mw
    for r in sections["WIND"]:
        unit, mw = convert(r, (int, float), ("unit", "mw"), source)
        if not 0 <= unit < case.n_wind:
            raise FormatError(f"wind unit {unit} not in case", source, r.lineno)
        wind[unit] = mw
    outages = []
    for r in sections["OUTAGE"]:
        (line,) = convert(r, (int,), ("line",), source)
        if not 0 <= line < case.n_lines:
            raise FormatError(f"line {line} not in case", source, r.lineno)
        outages.append(line)
    countdown = np.zeros(case.n_lines, dtype=np.int64)
    countdown[outages] = 1
    gen = np.zeros(case.n_gens)
    zeros_b, zeros_w = np.zeros(case.n_buses), np.zeros(case.n_wind)
    if sections["GEN"]:
        active = np.zeros(case.n_gens, dtype=bool)
        for r in sections["GEN"]:
            unit, mw = convert(r, (int, float), ("unit", "mw"), source)
            if not 0 <= unit < case.n_gens:
                raise FormatError(f"generator {unit} not in case", source, r.lineno)
            gen[unit] = mw
            active[unit] = True
    else:
        active = np.ones(case.n_gens, dtype=bool)
    state = RtState(demand, wind, gen, countdown, active, 0, 0, zeros_b, zeros_w, zeros_b, zeros_w)
    if not sections["GEN"]:
        state = dispatch_heuristic(state, DaAction(-1, active), case)
    return OperatingPoint(state, tuple(outages))


def load_operating_point(case: GridCase, path: str | Path) -> OperatingPoint:
    p = Path(path)
    if not p.exists():
        bundled = Path(str(resources.files("hiergrid") / "data" / f"{p.stem}.op"))
        if p.suffix in ("", ".op") and bundled.exists():
            p = bundled
        else:
            raise FileNotFoundError(f"no operating-point file {str(path)!r}")
    return parse_operating_point(case, p.read_text(encoding="utf-8"), str(p))
