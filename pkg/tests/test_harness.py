import numpy as np
import pytest

from hiergrid.env import DaState, ProfileSpec, ScenarioConfig
from hiergrid.features import ActionCatalog, ELASTIC_KAPPA, build_action_catalog
from hiergrid.harness import (
    BaselineKind,
    BaselinePolicy,
    RolloutStats,
    baseline_act,
    eligible_subsets,
    evaluate_policy,
    make_policy,
    quartiles,
)
from hiergrid.learning import ArgmaxPolicy


def _state(total):
    demand = np.zeros((24, 6))
    demand[:, 3:] = total / 3
    return DaState(demand, np.zeros((24, 1)))


# case6 units (bus, g_max): (0,120) (0,80) (1,90) (1,60) (2,100) (2,80)
def test_single_eligible_subset(case6, rng):
    cat = ActionCatalog.from_masks(case6, [[1, 0, 0, 0, 0, 0], [1, 1, 1, 1, 0, 0], [0, 0, 0, 0, 1, 1]])
    s = _state(300.0)
    assert list(eligible_subsets(s, cat)) == [1]
    for kind in BaselineKind:
        assert baseline_act(s, kind, cat, rng).subset_index == 1


def test_cost_picks_cheapest(case6, rng):
    cat = ActionCatalog.from_masks(case6, [[0, 0, 1, 1, 0, 0], [1, 1, 0, 0, 0, 0]])
    assert cat.capacity_cost[0] < cat.capacity_cost[1]
    assert baseline_act(_state(150.0), "cost", cat, rng).subset_index == 0


def test_elastic_matches_enumeration(case6, rng):
    rows = [[1, 1, 1, 0, 0, 0], [0, 0, 1, 1, 1, 1], [1, 0, 0, 0, 1, 1], [1, 1, 1, 1, 1, 1], [0, 1, 1, 1, 0, 0]]
    cat = ActionCatalog.from_masks(case6, rows)
    g = case6.generators
    ratios = []
    for r in rows:
        lo = sum(u.g_min for u, m in zip(g, r) if m)
        hi = sum(u.g_max for u, m in zip(g, r) if m)
        ratios.append(hi / max(lo, ELASTIC_KAPPA))
    assert baseline_act(_state(200.0), "elastic", cat, rng).subset_index == int(np.argmax(ratios))


def test_fallback_to_largest(case6, rng):
    cat = ActionCatalog.from_masks(case6, [[1, 0, 0, 0, 0, 0], [0, 0, 1, 1, 0, 0]])
    for kind in BaselineKind:
        assert baseline_act(_state(1000.0), kind, cat, rng).subset_index == 1


def test_random_uniform_over_eligible(case6):
    cat = build_action_catalog(case6, 20, np.random.default_rng(5))
    s = _state(200.0)
    elig = eligible_subsets(s, cat)
    assert 2 <= len(elig) < 20
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.bincount([baseline_act(s, "random", cat, rng).subset_index for _ in range(n)], minlength=20)
    assert counts[np.setdiff1d(np.arange(20), elig)].sum() == 0
    p = 1 / len(elig)
    band = 3 * np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts[elig] - n * p) <= band)


def test_quartiles_reference():
    # position (n-1) q in the sorted list, linear in between
    assert quartiles([5, 1, 4, 2, 3]) == (2.0, 3.0, 4.0)
    assert quartiles([0.0, 10.0, 20.0, 30.0, 100.0]) == (10.0, 20.0, 30.0)
    q = quartiles([1.0, 2.0, 4.0, 8.0])  # positions 0.75, 1.5, 2.25
    assert q == pytest.approx((1.75, 3.0, 5.0))


def test_rollout_stats():
    st = RolloutStats.from_means([0.5, 1.0, 0.75, 0.25, 1.0])
    assert st.mean == pytest.approx(0.7)
    assert (st.min, st.max) == (0.25, 1.0)
    assert st.iqr == pytest.approx(1.0 - 0.5)
    assert st.episode_means == (0.5, 1.0, 0.75, 0.25, 1.0)
    assert len(st.episodes_csv().splitlines()) == 6
    assert st.summary_csv("x").splitlines()[1].startswith("x,5,")


def test_healthy_rollouts_score_one(case6):
    flat = (ProfileSpec("flat", "flat", 1.0, 1.0, 0.0, 1 / 3),)
    quiet = ScenarioConfig(
        demand_error_scale=0.0,
        wind_error_scale=0.0,
        bias_walk_scale=0.0,
        initial_noise_scale=0.0,
        day_bias_scale=0.0,
        fail_prob=0.0,
        load_mw=70.0,
        profiles=flat,
    )
    cat = ActionCatalog.from_masks(case6, [[1] * 6])
    st = evaluate_policy(case6, BaselinePolicy(BaselineKind.RANDOM, cat), 4, quiet, seed=0)
    assert st.episode_means == (1.0,) * 4 and st.iqr == 0.0


@pytest.fixture(scope="module")
def cat6(case6):
    return build_action_catalog(case6, 20, np.random.default_rng(5))


def test_evaluate_deterministic_and_worker_invariant(case6, cat6):
    pol = BaselinePolicy(BaselineKind.RANDOM, cat6)
    a = evaluate_policy(case6, pol, 6, ScenarioConfig(), seed=2)
    b = evaluate_policy(case6, pol, 6, ScenarioConfig(), seed=2)
    c = evaluate_policy(case6, pol, 6, ScenarioConfig(), seed=2, workers=3)
    assert a == b == c
    assert len(a.episode_means) == 6


def test_evaluate_rejects_zero_episodes(case6, cat6):
    with pytest.raises(ValueError):
        evaluate_policy(case6, BaselinePolicy(BaselineKind.COST, cat6), 0, ScenarioConfig(), seed=0)


def test_make_policy(tmp_path, case6, cat6):
    pol, cat = make_policy("Elastic", cat6, case6)
    assert pol == BaselinePolicy(BaselineKind.ELASTIC, cat6) and cat is cat6
    path = tmp_path / "policy.json"
    path.write_text('{"psi": %s, "catalog": %s}' % ([0.0] * 24, cat6.masks.astype(int).tolist()))
    pol, cat = make_policy(str(path), None, case6)
    assert isinstance(pol, ArgmaxPolicy) and cat == cat6
    path.write_text('{"psi": [1.0, 2.0], "catalog": %s}' % cat6.masks.astype(int).tolist())
    with pytest.raises(ValueError):
        make_policy(str(path), None, case6)
    with pytest.raises(ValueError):
        make_policy("random", None, case6)
