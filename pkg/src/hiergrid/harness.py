"""Heuristic DA baselines and seeded rollout evaluation of DA policies."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from hiergrid.env import DaAction, DaPolicy, DaState, Profile, ScenarioConfig, build_profile_library
from hiergrid.env import run_episode, sample_initial_da_state
from hiergrid.features import ActionCatalog
from hiergrid.grid import GridCase
from hiergrid.learning import ArgmaxPolicy
from hiergrid.parallel import STREAM_ROLLOUT, context_map, stream


class BaselineKind(enum.Enum):
    RANDOM = "random"
    COST = "cost"
    ELASTIC = "elastic"


def eligible_subsets(state: DaState, catalog: ActionCatalog) -> np.ndarray:
    """Subsets whose summed g_max covers the peak hourly effective demand."""
    return np.flatnonzero(catalog.sum_max >= state.effective_demand.max())


def baseline_act(state: DaState, kind: BaselineKind | str, catalog: ActionCatalog, rng: np.random.Generator) -> DaAction:
    kind = BaselineKind(kind)
    elig = eligible_subsets(state, catalog)
    if len(elig) == 0:
        return catalog.action(int(np.argmax(catalog.sum_max)))
    if kind is BaselineKind.RANDOM:
        return catalog.action(int(elig[rng.integers(len(elig))]))
    if kind is BaselineKind.COST:
        return catalog.action(int(elig[np.argmin(catalog.capacity_cost[elig])]))
    return catalog.action(int(elig[np.argmax(catalog.elasticity[elig])]))


@dataclass(frozen=True)
class BaselinePolicy:
    kind: BaselineKind
    catalog: ActionCatalog

    def __call__(self, state: DaState, rng: np.random.Generator) -> DaAction:
        return baseline_act(state, self.kind, self.catalog, rng)


def make_policy(source: str, catalog: ActionCatalog | None, case: GridCase) -> tuple[DaPolicy, ActionCatalog]:
    """A baseline by name, or an argmax policy from a policy JSON file.

    Policy files carry their own catalog, which wins over ``catalog``.
    """
    if source.lower() in {k.value for k in BaselineKind}:
        if catalog is None:
            raise ValueError("baseline policies need an action catalog")
        return BaselinePolicy(BaselineKind(source.lower()), catalog), catalog
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    if doc.get("catalog") is not None:
        catalog = ActionCatalog.from_masks(case, doc["catalog"])
    if catalog is None:
        raise ValueError(f"{source}: policy file has no catalog")
    psi = np.asarray(doc["psi"], dtype=float)
    if psi.shape != (len(catalog) + 4,):
        raise ValueError(f"{source}: psi has {psi.size} entries, catalog needs {len(catalog) + 4}")
    return ArgmaxPolicy(psi, catalog), catalog


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    """Q1, median, Q3 with linear interpolation between order statistics
    (position (n-1)*q in the sorted list)."""
    v = np.sort(np.asarray(values, dtype=float))
    q = np.percentile(v, [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


@dataclass(frozen=True)
class RolloutStats:
    episode_means: tuple[float, ...]
    mean: float
    q1: float
    median: float
    q3: float
    min: float
    max: float

    @classmethod
    def from_means(cls, means: Sequence[float]) -> "RolloutStats":
        srt = sorted(float(m) for m in means)
        q1, med, q3 = quartiles(srt)
        return cls(tuple(float(m) for m in means), math.fsum(srt) / len(srt), q1, med, q3, srt[0], srt[-1])

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "mean_reward"])
        for i, m in enumerate(self.episode_means):
            w.writerow([i, repr(m)])
        return buf.getvalue()

    def summary_csv(self, label: str = "policy") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "episodes", "mean", "q1", "median", "q3", "min", "max"])
        w.writerow([label, len(self.episode_means)] + [repr(x) for x in (self.mean, self.q1, self.median, self.q3, self.min, self.max)])
        return buf.getvalue()


@dataclass(frozen=True)
class _RolloutContext:
    case: GridCase
    policy: DaPolicy
    scenario: ScenarioConfig
    library: tuple[Profile, ...]
    seed: int


def _episode(ctx: _RolloutContext, index: int):
    rng = stream(ctx.seed, STREAM_ROLLOUT, index)
    da0 = sample_initial_da_state(ctx.case, ctx.scenario, rng, ctx.library)
    return run_episode(ctx.case, da0, ctx.policy, ctx.scenario, rng)


def _episode_mean(ctx: _RolloutContext, index: int) -> float:
    return float(np.mean(_episode(ctx, index).rewards))


def rollout_context(case, policy, scenario, seed) -> _RolloutContext:
    return _RolloutContext(case, policy, scenario, tuple(build_profile_library(case, scenario)), seed)


def evaluate_policy(
    case: GridCase,
    policy: DaPolicy,
    episodes: int,
    scenario: ScenarioConfig,
    seed: int,
    workers: int = 1,
) -> RolloutStats:
    """Mean RT reward of ``episodes`` seeded episodes.

    Episode ``i`` always uses the stream (seed, i), so every policy faces the
    same exogenous scenarios and the result is independent of ``workers``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    ctx = rollout_context(case, policy, scenario, seed)
    return RolloutStats.from_means(context_map(_episode_mean, ctx, range(episodes), workers))


def simulate_traces(case, policy, episodes: int, scenario: ScenarioConfig, seed: int):
    ctx = rollout_context(case, policy, scenario, seed)
    for i in range(episodes):
        yield i, _episode(ctx, i)
