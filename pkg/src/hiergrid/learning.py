"""Interleaved approximate policy improvement.

Each iteration draws DA policy parameters from a Gaussian mixture, learns a
linear RT value function for every candidate with TD(0), scores the candidates
by their mean value over a shared pool of visited RT states, and refits the
mixture to the top fraction.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hiergrid.env import DaAction, DaState, Profile, ScenarioConfig, build_profile_library, run_episode
from hiergrid.env import sample_initial_da_state
from hiergrid.features import N_RT_FEATURES, ActionCatalog, da_feature_matrix, rt_features
from hiergrid.grid import GridCase
from hiergrid.parallel import STREAM_DRAW, STREAM_EVAL, context_map, stream

log = logging.getLogger(__name__)

# relative width of the argmax tie band, scaled by the largest |psi_j * Phi_j| sum
TIE_RTOL = 1e-9


class TdDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class IapiConfig:
    n_candidates: int = 200
    elite_frac: float = 0.2
    n_episodes: int = 50
    gamma: float = 0.95
    alpha0: float = 0.01
    tau: float = 1e4
    theta_bound: float = 1e6
    sigma0: float = 1.0
    var_floor: float = 1e-4
    max_iter: int = 30
    epsilon: float = 1e-4
    cumulative_pool: bool = False
    common_scenarios: bool = False
    K: int = 20
    effective_demand: bool = True
    scale_demand: bool = True

    def __post_init__(self):
        if self.n_candidates < 1 or self.n_episodes < 1 or self.max_iter < 1:
            raise ValueError("n_candidates, n_episodes and max_iter must be >= 1")
        if not 0 < self.elite_frac <= 1:
            raise ValueError("elite_frac must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.var_floor <= 0 or self.sigma0 < 0:
            raise ValueError("var_floor must be > 0 and sigma0 >= 0")

    @property
    def n_elite(self) -> int:
        return max(1, math.ceil(self.elite_frac * self.n_candidates - 1e-9))


@dataclass(frozen=True)
class ValueParams:
    theta: np.ndarray
    gamma: float = 0.95
    transitions: int = 0

    def value(self, features: np.ndarray) -> np.ndarray:
        return features @ self.theta


# -- DA policy ---------------------------------------------------------------


def da_policy_act(
    state: DaState, psi: np.ndarray, catalog: ActionCatalog, rng: np.random.Generator, effective: bool = True
) -> DaAction:
    """argmax over the catalog of psi . Phi(state, a), ties broken uniformly."""
    return catalog.action(_argmax_index(da_feature_matrix(state, catalog, effective), psi, rng))


def _argmax_index(phi: np.ndarray, psi: np.ndarray, rng: np.random.Generator) -> int:
    scores = phi @ psi
    band = TIE_RTOL * float(np.abs(phi * psi).sum(axis=1).max())
    tied = np.flatnonzero(scores >= scores.max() - band)
    return int(tied[0] if len(tied) == 1 else tied[rng.integers(len(tied))])


@dataclass(frozen=True)
class ArgmaxPolicy:
    psi: np.ndarray
    catalog: ActionCatalog
    effective: bool = True

    def __call__(self, state: DaState, rng: np.random.Generator) -> DaAction:
        return da_policy_act(state, self.psi, self.catalog, rng, self.effective)


# -- TD(0) -------------------------------------------------------------------


def step_size(alpha0: float, tau: float, n: int) -> float:
    return alpha0 / (1.0 + n / tau)


def td0(
    episodes: Iterable[tuple[np.ndarray, np.ndarray]],
    n_features: int,
    gamma: float,
    alpha0: float = 0.01,
    tau: float = 1e4,
    theta_bound: float = math.inf,
    terminal: bool = False,
) -> tuple[np.ndarray, int]:
    """One pass of linear TD(0) over episodes of (features, rewards).

    ``features`` has one row per visited state, ``rewards[t]`` is the reward
    received on leaving state t. Every consecutive pair is one update; with
    ``terminal`` the last state of each episode also gets an update toward its
    reward alone. Returns theta and the number of updates.
    """
    theta = np.zeros(n_features)
    n = 0
    for phi, rewards in episodes:
        T = len(phi)
        last = T if terminal else T - 1
        for t in range(last):
            nxt = theta @ phi[t + 1] if t + 1 < T else 0.0
            delta = rewards[t] + gamma * nxt - theta @ phi[t]
            theta += step_size(alpha0, tau, n) * delta * phi[t]
            n += 1
        if not np.all(np.abs(theta) <= theta_bound):
            raise TdDivergenceError(f"|theta| exceeded {theta_bound} after {n} updates")
    return theta, n


@dataclass(frozen=True)
class EvalContext:
    case: GridCase
    catalog: ActionCatalog
    scenario: ScenarioConfig
    iapi: IapiConfig
    library: tuple[Profile, ...]


def make_context(case: GridCase, catalog: ActionCatalog, scenario: ScenarioConfig, iapi: IapiConfig) -> EvalContext:
    return EvalContext(case, catalog, scenario, iapi, tuple(build_profile_library(case, scenario)))


def simulate_features(ctx: EvalContext, psi: np.ndarray, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    policy = ArgmaxPolicy(np.asarray(psi, dtype=float), ctx.catalog, ctx.iapi.effective_demand)
    out = []
    for _ in range(ctx.iapi.n_episodes):
        da0 = sample_initial_da_state(ctx.case, ctx.scenario, rng, ctx.library)
        trace = run_episode(ctx.case, da0, policy, ctx.scenario, rng)
        phi = np.array([rt_features(s, ctx.case, ctx.iapi.scale_demand) for s in trace.states])
        out.append((phi, np.asarray(trace.rewards)))
    return out


def td0_evaluate(ctx: EvalContext, psi: np.ndarray, rng: np.random.Generator) -> tuple[ValueParams, np.ndarray]:
    """Learn the RT value of the DA policy ``psi`` from ``n_episodes`` rollouts.

    Returns the value parameters and the feature rows of every visited RT
    state. On divergence the step size is halved and the pass repeated once.
    """
    cfg = ctx.iapi
    data = simulate_features(ctx, psi, rng)
    alpha = cfg.alpha0
    for attempt in range(2):
        try:
            theta, n = td0(data, N_RT_FEATURES, cfg.gamma, alpha, cfg.tau, cfg.theta_bound)
            break
        except TdDivergenceError:
            if attempt == 1:
                raise
            log.warning("TD(0) diverged at alpha0=%g, retrying with %g", alpha, alpha / 2)
            alpha /= 2
    pool = np.concatenate([phi for phi, _ in data])
    return ValueParams(theta, cfg.gamma, n), pool


@dataclass(frozen=True)
class ScenarioSkeleton:
    """DA feature matrices and policy seeds of a fixed set of episodes.

    The DA states and every exogenous draw of an episode do not depend on the
    actions taken, so under a fixed stream two policies that choose the same
    subsets on these DA states produce identical traces.
    """

    da_phi: tuple[tuple[np.ndarray, ...], ...]  # per episode, per day: (K, K+4)
    policy_seeds: tuple[int, ...]

    def signature(self, psi: np.ndarray) -> tuple[int, ...]:
        """The subsets ``psi`` picks on every DA state, in episode order."""
        out = []
        for phis, seed in zip(self.da_phi, self.policy_seeds):
            rng = np.random.default_rng(seed)
            out.extend(_argmax_index(phi, psi, rng) for phi in phis)
        return tuple(out)


def scenario_skeleton(ctx: EvalContext, rng: np.random.Generator) -> ScenarioSkeleton:
    """Roll ``n_episodes`` episodes from ``rng`` (in the order td0_evaluate
    does) and keep their DA side."""
    fixed = ArgmaxPolicy(np.zeros(len(ctx.catalog) + 4), ctx.catalog, ctx.iapi.effective_demand)
    phis, seeds = [], []
    for _ in range(ctx.iapi.n_episodes):
        da0 = sample_initial_da_state(ctx.case, ctx.scenario, rng, ctx.library)
        trace = run_episode(ctx.case, da0, fixed, ctx.scenario, rng)
        phis.append(tuple(da_feature_matrix(d, ctx.catalog, ctx.iapi.effective_demand) for d in trace.da_states))
        seeds.append(trace.policy_seed)
    return ScenarioSkeleton(tuple(phis), tuple(seeds))


# -- policy comparison and the cross-entropy update ---------------------------


def rank_policies(values: Sequence[ValueParams], pool: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices sorted by mean pool value (descending, index tiebreak) and the
    per-candidate mean values."""
    pool = np.asarray(pool)
    if len(pool) == 0:
        raise ValueError("test-state pool is empty")
    thetas = np.array([v.theta for v in values])
    vhat = (pool @ thetas.T).mean(axis=0)
    order = np.argsort(-vhat, kind="stable")
    return order, vhat


@dataclass(frozen=True)
class SamplingDistribution:
    """Equal-weight Gaussian mixture with a shared diagonal covariance."""

    means: np.ndarray  # (M, d)
    var: np.ndarray  # (d,)
    iteration: int = 0
    var_floor: float = 1e-4

    @classmethod
    def initial(cls, dim: int, sigma0: float, var_floor: float) -> "SamplingDistribution":
        return cls(np.zeros((1, dim)), np.full(dim, max(sigma0**2, var_floor)), 0, var_floor)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.integers(len(self.means), size=n)
        noise = rng.standard_normal((n, self.means.shape[1]))
        return self.means[comp] + noise * np.sqrt(self.var)


def cross_entropy_update(dist: SamplingDistribution, elites: np.ndarray) -> SamplingDistribution:
    """One mixture component per elite; shared variance is the elite set's
    per-coordinate population variance, floored."""
    elites = np.atleast_2d(np.asarray(elites, dtype=float))
    if len(elites) == 0:
        raise ValueError("elite set is empty")
    var = np.maximum(elites.var(axis=0), dist.var_floor)
    return SamplingDistribution(elites.copy(), var, dist.iteration + 1, dist.var_floor)


def convergence_statistic(prev: Sequence[float], curr: Sequence[float]) -> float:
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape:
        raise ValueError(f"elite value lists differ in length: {len(prev)} vs {len(curr)}")
    return float(np.mean((curr - prev) ** 2))


def check_convergence(prev: Sequence[float], curr: Sequence[float], epsilon: float) -> bool:
    """Mean squared rank-paired change of the elite values is below ``epsilon``."""
    return convergence_statistic(prev, curr) < epsilon


# -- IAPI --------------------------------------------------------------------


@dataclass
class IterationRecord:
    iteration: int
    psi: np.ndarray  # (N, d)
    values: np.ndarray  # (N,)
    elite: np.ndarray  # (N,) bool
    elite_values: np.ndarray  # sorted descending
    statistic: float | None
    transitions: int
    pool_size: int

    @property
    def elite_mean(self) -> float:
        return float(self.elite_values.mean())

    @property
    def elite_std(self) -> float:
        return float(self.elite_values.std())


@dataclass
class IapiReport:
    iterations: list[IterationRecord] = field(default_factory=list)
    psi_star: np.ndarray | None = None
    converged: bool = False
    catalog: ActionCatalog | None = None
    config: IapiConfig | None = None
    seed: int = 0

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "config": asdict(self.config) if self.config else None,
            "converged": self.converged,
            "psi_star": self.psi_star.tolist() if self.psi_star is not None else None,
            "catalog": self.catalog.masks.astype(int).tolist() if self.catalog is not None else None,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "psi": r.psi.tolist(),
                    "value": r.values.tolist(),
                    "elite": r.elite.tolist(),
                    "elite_mean": r.elite_mean,
                    "elite_std": r.elite_std,
                    "statistic": r.statistic,
                    "transitions": r.transitions,
                    "pool_size": r.pool_size,
                }
                for r in self.iterations
            ],
        }
        return json.dumps(doc, indent=1) + "\n"

    def convergence_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "elite_mean", "elite_std", "statistic"])
        for r in self.iterations:
            w.writerow([r.iteration, repr(r.elite_mean), repr(r.elite_std), "" if r.statistic is None else repr(r.statistic)])
        return buf.getvalue()

    def policy_json(self) -> str:
        return json.dumps({"psi": self.psi_star.tolist(), "catalog": self.catalog.masks.astype(int).tolist()}) + "\n"


def _evaluate_candidate(ctx: EvalContext, item) -> tuple[ValueParams, np.ndarray]:
    psi, key = item
    return td0_evaluate(ctx, psi, stream(*key))


def _evaluate_common(ctx, skeleton, memo, psis, seed, workers):
    """Evaluate candidates on the fixed stream, once per distinct subset
    sequence; ``memo`` carries results across iterations."""
    sigs = [skeleton.signature(psi) for psi in psis]
    todo: dict[tuple[int, ...], np.ndarray] = {}
    for sig, psi in zip(sigs, psis):
        if sig not in memo and sig not in todo:
            todo[sig] = psi
    items = [(psi, (seed, STREAM_EVAL)) for psi in todo.values()]
    for sig, res in zip(todo, context_map(_evaluate_candidate, ctx, items, workers)):
        memo[sig] = res
    return [memo[sig] for sig in sigs]


def run_iapi(
    case: GridCase,
    catalog: ActionCatalog,
    scenario: ScenarioConfig,
    iapi: IapiConfig,
    seed: int,
    workers: int = 1,
) -> IapiReport:
    ctx = make_context(case, catalog, scenario, iapi)
    dim = len(catalog) + 4
    dist = SamplingDistribution.initial(dim, iapi.sigma0, iapi.var_floor)
    report = IapiReport(catalog=catalog, config=iapi, seed=seed)
    prev_elite = None
    kept_pool: list[np.ndarray] = []
    skeleton = scenario_skeleton(ctx, stream(seed, STREAM_EVAL)) if iapi.common_scenarios else None
    memo: dict[tuple[int, ...], tuple[ValueParams, np.ndarray]] = {}
    for k in range(iapi.max_iter):
        psis = dist.sample(iapi.n_candidates, stream(seed, STREAM_DRAW, k))
        if skeleton is None:
            keys = [(seed, STREAM_EVAL, k, i) for i in range(iapi.n_candidates)]
            results = context_map(_evaluate_candidate, ctx, list(zip(psis, keys)), workers)
        else:
            results = _evaluate_common(ctx, skeleton, memo, psis, seed, workers)
        values = [v for v, _ in results]
        pools = [p for _, p in results]
        if not iapi.cumulative_pool:
            kept_pool = []
        kept_pool.extend(pools)
        # the test pool is a set of states: repeated feature rows count once
        pool = np.unique(np.concatenate(kept_pool), axis=0)
        kept_pool = [pool]
        order, vhat = rank_policies(values, pool)
        elites = order[: iapi.n_elite]
        elite_vals = vhat[elites]
        stat = None if prev_elite is None else convergence_statistic(prev_elite, elite_vals)
        flags = np.zeros(iapi.n_candidates, dtype=bool)
        flags[elites] = True
        report.iterations.append(
            IterationRecord(k, psis, vhat, flags, elite_vals, stat, sum(v.transitions for v in values), len(pool))
        )
        report.psi_star = psis[elites[0]].copy()
        log.info("iteration %d: elite mean %.5f, statistic %s", k, elite_vals.mean(), stat)
        dist = cross_entropy_update(dist, psis[elites])
        if stat is not None and stat < iapi.epsilon:
            report.converged = True
            break
        prev_elite = elite_vals
    return report
