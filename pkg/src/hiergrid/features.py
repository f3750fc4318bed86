"""Feature maps for the DA policy and the RT value function, and the fixed
catalog of DA generator subsets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hiergrid.env import DaAction, DaState, RtState
from hiergrid.grid import GridCase
from hiergrid.textfmt import FormatError, read_sections

# floor of the barrier margins, bounds the penalty at 2 * ln(1e-3)
BARRIER_FLOOR = 1e-3
# lower bound on a subset's summed g_min in the elasticity ratio (MW)
ELASTIC_KAPPA = 1.0
N_RT_FEATURES = 10


class CatalogError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ActionCatalog:
    masks: np.ndarray  # (K, n_gens) bool
    sum_min: np.ndarray
    sum_max: np.ndarray
    sum_cost: np.ndarray
    capacity_cost: np.ndarray  # sum of cost * g_max
    elasticity: np.ndarray  # sum_max / max(sum_min, kappa)

    @classmethod
    def from_masks(cls, case: GridCase, masks) -> "ActionCatalog":
        m = np.asarray(masks, dtype=bool)
        if m.ndim != 2 or m.shape[1] != case.n_gens:
            raise CatalogError(f"catalog rows must have {case.n_gens} entries")
        if len(m) == 0:
            raise CatalogError("catalog is empty")
        if not m.any(axis=1).all():
            raise CatalogError("every subset must contain at least one generator")
        mf = m.astype(float)
        smin = mf @ case.gen_min
        smax = mf @ case.gen_max
        return cls(
            masks=m,
            sum_min=smin,
            sum_max=smax,
            sum_cost=mf @ case.gen_cost,
            capacity_cost=mf @ (case.gen_cost * case.gen_max),
            elasticity=smax / np.maximum(smin, ELASTIC_KAPPA),
        )

    def __len__(self) -> int:
        return len(self.masks)

    def __eq__(self, other):
        return isinstance(other, ActionCatalog) and np.array_equal(self.masks, other.masks)

    def action(self, index: int) -> DaAction:
        return DaAction(int(index), self.masks[index])

    def to_text(self) -> str:
        rows = [" ".join("1" if x else "0" for x in row) for row in self.masks]
        return "SUBSET\n" + "\n".join(rows) + "\n"


def save_catalog(catalog: ActionCatalog, path: str | Path) -> None:
    Path(path).write_text(catalog.to_text(), encoding="utf-8")


def load_catalog(case: GridCase, path: str | Path) -> ActionCatalog:
    sections = read_sections(path, {"SUBSET"})
    rows = []
    for rec in sections["SUBSET"]:
        if len(rec.tokens) != case.n_gens or any(t not in ("0", "1") for t in rec.tokens):
            raise FormatError(f"SUBSET row must be {case.n_gens} tokens of 0/1", str(path), rec.lineno)
        rows.append([t == "1" for t in rec.tokens])
    return ActionCatalog.from_masks(case, rows)


def build_action_catalog(
    case: GridCase,
    K: int,
    rng: np.random.Generator,
    demand_range: tuple[float, float] | None = None,
    capacity_range: tuple[float, float] | None = None,
    max_tries: int = 200,
) -> ActionCatalog:
    """Draw ``K`` distinct random generator subsets.

    Each subset gets a capacity target drawn uniformly from ``capacity_range``
    and collects randomly ordered units until its summed ``g_max`` reaches the
    target. With ``demand_range = (lo, hi)`` the catalog must contain a subset
    with summed ``g_max >= hi`` and one with summed ``g_min <= lo``; draws are
    repeated up to ``max_tries`` times before giving up.
    """
    n = case.n_gens
    if K < 1:
        raise CatalogError("K must be >= 1")
    if n < 63 and K > 2**n - 1:
        raise CatalogError(f"cannot draw {K} distinct non-empty subsets of {n} generators")
    total = case.total_gen_max
    if capacity_range is None:
        if demand_range is None:
            capacity_range = (0.0, total)
        else:
            capacity_range = (max(demand_range[0], 0.0), min(total, 1.3 * demand_range[1]))
    lo_cap, hi_cap = capacity_range
    for _ in range(max_tries):
        masks: list[np.ndarray] = []
        seen: set[bytes] = set()
        for _ in range(50 * K):
            target = rng.uniform(lo_cap, hi_cap)
            order = rng.permutation(n)
            reach = np.searchsorted(np.cumsum(case.gen_max[order]), target) + 1
            mask = np.zeros(n, dtype=bool)
            mask[order[: min(reach, n)]] = True
            key = mask.tobytes()
            if key in seen:
                continue
            seen.add(key)
            masks.append(mask)
            if len(masks) == K:
                break
        if len(masks) < K:
            continue
        cat = ActionCatalog.from_masks(case, masks)
        if demand_range is None:
            return cat
        lo, hi = demand_range
        if (cat.sum_max >= hi).any() and (cat.sum_min <= lo).any():
            return cat
    raise CatalogError(f"no catalog of {K} subsets meets the demand coverage after {max_tries} draws")


def da_feature_matrix(state: DaState, catalog: ActionCatalog, effective: bool = True) -> np.ndarray:
    """Rows are the K+4 DA features (1, U, L, P, one-hot) for each action."""
    if effective:
        hourly = state.effective_demand
    else:
        hourly = state.demand_forecast.sum(axis=1)
    peak, low, mean = hourly.max(), hourly.min(), hourly.mean()
    K = len(catalog)
    upper = (catalog.sum_max >= peak).astype(float)
    lower = (catalog.sum_min <= low).astype(float)
    m_up = (catalog.sum_max - mean) / catalog.sum_max
    m_lo = (mean - catalog.sum_min) / catalog.sum_max
    barrier = np.log(np.maximum(m_up, BARRIER_FLOOR)) + np.log(np.maximum(m_lo, BARRIER_FLOOR))
    out = np.zeros((K, K + 4))
    out[:, 0] = 1.0
    out[:, 1] = upper
    out[:, 2] = lower
    out[:, 3] = barrier
    out[np.arange(K), 4 + np.arange(K)] = 1.0
    return out


def da_features(state: DaState, action_index: int, catalog: ActionCatalog, effective: bool = True) -> np.ndarray:
    if not 0 <= action_index < len(catalog):
        raise IndexError(f"action {action_index} outside catalog of size {len(catalog)}")
    return da_feature_matrix(state, catalog, effective)[action_index]


def entropy(weights: np.ndarray) -> float:
    """Shannon entropy (nats) of the normalized positive part of ``weights``;
    0 for an all-zero vector."""
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    total = w.sum()
    if total <= 0:
        return 0.0
    # H = ln(total) - sum(w ln w) / total
    return max(float(np.log(total) - (w @ np.log(w)) / total), 0.0)


def rt_features(state: RtState, case: GridCase, scale_demand: bool = True) -> np.ndarray:
    d = float(state.demand.sum() - state.wind.sum())
    if scale_demand:
        d /= case.total_gen_max
    ed = entropy(state.demand)
    eg = entropy(case.gen_to_bus @ state.generation)
    return np.array([1.0, d, ed, eg, d * d, ed * ed, eg * eg, d * ed, d * eg, ed * eg])
