"""Day-ahead and real-time processes of the two-layer grid model.

The day-ahead (DA) layer sees 24-hour forecasts and picks a generator subset;
the real-time (RT) layer realizes demand and wind around those forecasts,
redispatches the active units, draws line failures and scores the post-decision
state with the N-1 screen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from hiergrid.grid import GridCase
from hiergrid.powerflow import n1_reward

HOURS = 24


@dataclass(frozen=True)
class ProfileSpec:
    """One daily shape of the synthetic profile library.

    ``kind`` is ``flat``, ``single`` (evening peak) or ``double`` (morning and
    evening peaks). Demand runs between ``valley`` and ``peak`` as fractions of
    the per-bus load; ``tilt`` skews load toward high (>0) or low (<0) bus ids;
    ``wind`` is the mean wind capacity factor.
    """

    name: str
    kind: str
    valley: float
    peak: float
    tilt: float = 0.0
    wind: float = 0.3


DEFAULT_PROFILES = (
    ProfileSpec("flat", "flat", 0.70, 0.70, 0.0, 0.35),
    ProfileSpec("single", "single", 0.55, 1.00, 0.3, 0.20),
    ProfileSpec("double", "double", 0.60, 0.90, -0.3, 0.40),
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Exogenous-process parameters.

    ``fail_prob`` / ``repair_steps`` left as None fall back to the per-line
    values in the case file.
    """

    demand_error_scale: float = 0.01
    wind_error_scale: float = 0.05
    bias_walk_scale: float = 0.05
    fail_prob: float | None = None
    repair_steps: int | None = None
    horizon_days: int = 3
    load_mw: float = 100.0
    initial_noise_scale: float = 0.05
    day_bias_scale: float = 0.02
    profiles: tuple[ProfileSpec, ...] = DEFAULT_PROFILES
    seed: int = 0

    def __post_init__(self):
        for name in (
            "demand_error_scale",
            "wind_error_scale",
            "bias_walk_scale",
            "load_mw",
            "initial_noise_scale",
            "day_bias_scale",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.fail_prob is not None and not 0 <= self.fail_prob <= 1:
            raise ValueError("fail_prob must lie in [0, 1]")
        if self.repair_steps is not None and self.repair_steps < 1:
            raise ValueError("repair_steps must be >= 1")
        if self.horizon_days < 1:
            raise ValueError("horizon_days must be >= 1")
        if not self.profiles:
            raise ValueError("profile library is empty")


@dataclass(frozen=True)
class Profile:
    demand: np.ndarray  # (HOURS, n_b)
    wind: np.ndarray  # (HOURS, n_wind)


def _shape(kind: str, valley: float, peak: float) -> np.ndarray:
    h = np.arange(HOURS)
    if kind == "flat":
        bump = np.zeros(HOURS)
    elif kind == "single":
        bump = np.exp(-0.5 * ((h - 18) / 3.0) ** 2)
    elif kind == "double":
        bump = np.maximum(np.exp(-0.5 * ((h - 9) / 2.5) ** 2), np.exp(-0.5 * ((h - 19) / 2.5) ** 2))
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    return valley + (peak - valley) * bump


def _wind_shape(kind: str, mean: float) -> np.ndarray:
    h = np.arange(HOURS)
    if kind == "flat":
        s = np.ones(HOURS)
    else:
        # windier at night, calmer mid-afternoon
        s = 1.0 + 0.4 * np.cos(2 * np.pi * (h - 3) / HOURS)
    return np.clip(mean * s, 0.0, 1.0)


def build_profile_library(case: GridCase, config: ScenarioConfig) -> list[Profile]:
    loads = np.flatnonzero(case.has_load)
    rank = np.zeros(case.n_buses)
    if len(loads) > 1:
        rank[loads] = np.linspace(-1.0, 1.0, len(loads))
    library = []
    for spec in config.profiles:
        weight = np.where(case.has_load, 1.0 + spec.tilt * rank, 0.0)
        demand = np.outer(_shape(spec.kind, spec.valley, spec.peak), config.load_mw * weight)
        wind = np.outer(_wind_shape(spec.kind, spec.wind), case.wind_capacity)
        library.append(Profile(demand, wind))
    return library


@dataclass(frozen=True)
class DaState:
    demand_forecast: np.ndarray  # (HOURS, n_b)
    wind_forecast: np.ndarray  # (HOURS, n_wind)
    day_index: int = 0
    profile: int = -1

    @property
    def effective_demand(self) -> np.ndarray:
        """Hourly total forecast demand minus forecast wind."""
        return self.demand_forecast.sum(axis=1) - self.wind_forecast.sum(axis=1)


@dataclass(frozen=True)
class DaAction:
    subset_index: int
    active: np.ndarray  # bool per controllable unit


@dataclass(frozen=True)
class RtState:
    """RT state (d, w, g, e) plus the forecast-error biases.

    The same type carries post-decision states, where ``generation`` already
    includes the redispatch.
    """

    demand: np.ndarray
    wind: np.ndarray
    generation: np.ndarray
    line_countdown: np.ndarray
    active: np.ndarray
    hour: int
    day: int
    demand_bias: np.ndarray
    wind_bias: np.ndarray
    demand_bias0: np.ndarray
    wind_bias0: np.ndarray


RtPostState = RtState


@dataclass(frozen=True)
class ExogenousEvent:
    failed_line: int | None = None


def _clamp(case: GridCase, demand: np.ndarray, wind: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(demand, 0.0), np.clip(wind, 0.0, case.wind_capacity)


def sample_initial_da_state(
    case: GridCase, config: ScenarioConfig, rng: np.random.Generator, library: Sequence[Profile] | None = None
) -> DaState:
    """Pick a library profile uniformly and perturb every entry with Gaussian
    noise of standard deviation ``initial_noise_scale`` times the entry."""
    library = build_profile_library(case, config) if library is None else library
    k = int(rng.integers(len(library)))
    prof = library[k]
    s = config.initial_noise_scale
    demand = prof.demand + rng.normal(0.0, 1.0, prof.demand.shape) * (s * prof.demand)
    wind = prof.wind + rng.normal(0.0, 1.0, prof.wind.shape) * (s * prof.wind)
    demand, wind = _clamp(case, demand, wind)
    return DaState(demand, wind, 0, k)


def da_transition(case: GridCase, state: DaState, config: ScenarioConfig, rng: np.random.Generator) -> DaState:
    """Next-day forecast: a per-bus (per-unit for wind) relative bias, constant
    over the day, applied to the previous profile. Independent of any action."""
    s = config.day_bias_scale
    bd = rng.normal(0.0, 1.0, state.demand_forecast.shape[1]) * s
    bw = rng.normal(0.0, 1.0, state.wind_forecast.shape[1]) * s
    demand, wind = _clamp(case, state.demand_forecast * (1.0 + bd), state.wind_forecast * (1.0 + bw))
    return DaState(demand, wind, state.day_index + 1, state.profile)


def proportional_dispatch(target: float, g_min: np.ndarray, g_max: np.ndarray) -> np.ndarray:
    """Split ``target`` proportionally to ``g_max``, clipping to the limits and
    re-splitting the residual over unclipped units until nothing clips.

    Saturates at the nearest bound when ``target`` is outside
    [sum(g_min), sum(g_max)].
    """
    cap = g_max.sum()
    if target >= cap:
        return g_max.astype(float)
    if target <= g_min.sum():
        return g_min.astype(float)
    share = g_max * (target / cap)
    if (share >= g_min).all():
        return share
    g = np.zeros(len(g_max))
    free = np.ones(len(g_max), dtype=bool)
    while free.any():
        idx = np.flatnonzero(free)
        remaining = target - g[~free].sum()
        share = remaining * g_max[idx] / g_max[idx].sum()
        lo = share < g_min[idx]
        hi = share > g_max[idx]
        if not (lo | hi).any():
            g[idx] = share
            break
        g[idx[lo]] = g_min[idx[lo]]
        g[idx[hi]] = g_max[idx[hi]]
        free[idx[lo | hi]] = False
    return g


def dispatch_heuristic(state: RtState, da_action: DaAction, case: GridCase) -> RtPostState:
    """Redispatch the active units to meet the realized effective demand."""
    act = np.asarray(da_action.active, dtype=bool)
    target = float(state.demand.sum() - state.wind.sum())
    gen = np.zeros(case.n_gens)
    gen[act] = proportional_dispatch(target, case.gen_min[act], case.gen_max[act])
    return RtState(
        state.demand,
        state.wind,
        gen,
        state.line_countdown,
        act,
        state.hour,
        state.day,
        state.demand_bias,
        state.wind_bias,
        state.demand_bias0,
        state.wind_bias0,
    )


def init_rt_day(
    case: GridCase,
    da_state: DaState,
    da_action: DaAction,
    prev: RtState | None,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> RtState:
    d0 = da_state.demand_forecast[0]
    w0 = da_state.wind_forecast[0]
    bd = rng.normal(0.0, 1.0, d0.shape) * (config.demand_error_scale * d0)
    bw = rng.normal(0.0, 1.0, w0.shape) * (config.wind_error_scale * w0)
    demand, wind = _clamp(case, d0 + bd, w0 + bw)
    countdown = np.zeros(case.n_lines, dtype=np.int64) if prev is None else prev.line_countdown.copy()
    act = np.asarray(da_action.active, dtype=bool)
    state = RtState(
        demand=demand,
        wind=wind,
        generation=np.zeros(case.n_gens),
        line_countdown=countdown,
        active=act,
        hour=0,
        day=da_state.day_index,
        demand_bias=bd,
        wind_bias=bw,
        demand_bias0=bd,
        wind_bias0=bw,
    )
    return replace(state, generation=dispatch_heuristic(state, da_action, case).generation)


def _fail_prob(case: GridCase, config: ScenarioConfig) -> np.ndarray:
    if config.fail_prob is None:
        return case.fail_prob
    return np.full(case.n_lines, config.fail_prob)


def _repair_steps(case: GridCase, config: ScenarioConfig, line: int) -> int:
    return int(case.repair_steps[line]) if config.repair_steps is None else config.repair_steps


def sample_contingency(
    case: GridCase, state: RtPostState, config: ScenarioConfig, rng: np.random.Generator
) -> ExogenousEvent:
    """At most one new failure per step, among lines that are operational."""
    fired = rng.random(case.n_lines) < _fail_prob(case, config)
    if not fired.any():
        return ExogenousEvent(None)
    hits = np.flatnonzero(fired & (state.line_countdown == 0))
    if len(hits) == 0:
        return ExogenousEvent(None)
    if len(hits) == 1:
        return ExogenousEvent(int(hits[0]))
    return ExogenousEvent(int(hits[rng.integers(len(hits))]))


def rt_step(
    case: GridCase,
    post: RtPostState,
    event: ExogenousEvent,
    da_state: DaState,
    da_action: DaAction,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> tuple[float, RtState]:
    """Score ``post`` against ``event`` and move to the next hour.

    On the last hour of the day the returned state only carries the topology
    forward (hour == HOURS); the caller opens the next day with ``init_rt_day``.
    """
    reward = n1_reward(case, post, event.failed_line)
    countdown = post.line_countdown.copy()
    countdown[countdown > 0] -= 1
    if event.failed_line is not None:
        countdown[event.failed_line] = _repair_steps(case, config, event.failed_line)
    s = config.bias_walk_scale
    bd = post.demand_bias + rng.normal(0.0, 1.0, post.demand_bias.shape) * (s * np.abs(post.demand_bias0))
    bw = post.wind_bias + rng.normal(0.0, 1.0, post.wind_bias.shape) * (s * np.abs(post.wind_bias0))
    hour = post.hour + 1
    if hour < HOURS:
        demand, wind = _clamp(case, da_state.demand_forecast[hour] + bd, da_state.wind_forecast[hour] + bw)
    else:
        demand, wind = post.demand, post.wind
    act = np.asarray(da_action.active, dtype=bool)
    nxt = RtState(
        demand=demand,
        wind=wind,
        generation=np.where(act, post.generation, 0.0),
        line_countdown=countdown,
        active=act,
        hour=hour,
        day=post.day,
        demand_bias=bd,
        wind_bias=bw,
        demand_bias0=post.demand_bias0,
        wind_bias0=post.wind_bias0,
    )
    return reward, nxt


DaPolicy = Callable[[DaState, np.random.Generator], DaAction]


@dataclass
class EpisodeTrace:
    da_states: list[DaState] = field(default_factory=list)
    da_actions: list[DaAction] = field(default_factory=list)
    states: list[RtState] = field(default_factory=list)
    posts: list[RtPostState] = field(default_factory=list)
    failed_lines: list[int | None] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    policy_seed: int | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    def records(self, episode: int | None = None) -> Iterator[dict]:
        for post, line, r in zip(self.posts, self.failed_lines, self.rewards):
            head = {} if episode is None else {"episode": episode}
            yield head | {
                "day": post.day,
                "hour": post.hour,
                "reward": r,
                "failed_line": line,
                "total_demand": float(post.demand.sum()),
                "total_generation": float(post.generation.sum()),
                "subset": self.da_actions[post.day - self.da_states[0].day_index].subset_index,
            }

    def to_jsonl(self, episode: int | None = None) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.records(episode))


def run_episode(
    case: GridCase,
    initial_da: DaState,
    da_policy: DaPolicy,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> EpisodeTrace:
    """Roll ``horizon_days`` days of 24 RT steps under ``da_policy``.

    The policy draws from its own stream seeded from ``rng`` at the start, so
    the exogenous draws are identical for every policy under the same ``rng``.
    """
    policy_seed = int(rng.integers(2**63))
    policy_rng = np.random.default_rng(policy_seed)
    trace = EpisodeTrace(policy_seed=policy_seed)
    da = initial_da
    prev = None
    for _ in range(config.horizon_days):
        action = da_policy(da, policy_rng)
        trace.da_states.append(da)
        trace.da_actions.append(action)
        state = init_rt_day(case, da, action, prev, config, rng)
        for _ in range(HOURS):
            post = dispatch_heuristic(state, action, case)
            event = sample_contingency(case, post, config, rng)
            reward, nxt = rt_step(case, post, event, da, action, config, rng)
            trace.states.append(state)
            trace.posts.append(post)
            trace.failed_lines.append(event.failed_line)
            trace.rewards.append(reward)
            state = nxt
        prev = state
        da = da_transition(case, da, config, rng)
    return trace


def library_demand_range(library: Sequence[Profile]) -> tuple[float, float]:
    """(lowest, highest) hourly total effective demand over the library."""
    eff = [p.demand.sum(axis=1) - p.wind.sum(axis=1) for p in library]
    return float(min(e.min() for e in eff)), float(max(e.max() for e in eff))
