"""Column generation end to end: random instances against exhaustive search,
certificate behavior, the restricted integer solve, and the budget sweep."""

import numpy as np
import pytest

from boolrules.colgen import (
    ClausePool,
    ColGenConfig,
    _grow_basis,
    guarded_ceil,
    reduced_cost_dense,
    run_column_generation,
    solve_restricted_mip,
    sweep_complexity,
)
from boolrules.lp_engine import AT_LOWER, AT_UPPER, BASIC
from boolrules.ruleset import selection_loss

from _data import make_binary_dataset, tiny_example
from _oracles import best_ruleset_by_enumeration, clause_reduced_cost


def small_config(C, D=None, **kw):
    kw.setdefault("time_limit", 60.0)
    kw.setdefault("pricing_time_limit", 10.0)
    return ColGenConfig(complexity_bound=C, clause_bound=D, **kw)


def test_tiny_example_trains_to_zero():
    ds = tiny_example()
    res = run_column_generation(ds, small_config(4))
    assert res.objective == 0
    assert res.lower_bound == 0
    assert res.optimal
    assert res.rmlp_converged
    assert res.mip_optimal
    assert [c.features for c in res.clauses] == [(0,)]
    assert abs(res.z_rmlp) < 1e-9
    assert res.regime == "small"


def test_guarded_ceil_forgives_upward_noise():
    assert guarded_ceil(3.0) == 3
    assert guarded_ceil(3.0 + 1e-9) == 3
    assert guarded_ceil(3.0 + 1e-6) == 4
    assert guarded_ceil(2.5) == 3
    assert guarded_ceil(-0.2) == 0
    assert guarded_ceil(0.0) == 0


def test_depth_limit_respects_budget_and_width():
    assert ColGenConfig(complexity_bound=5).depth_limit(100) == 4
    assert ColGenConfig(complexity_bound=5, clause_bound=2).depth_limit(100) == 2
    assert ColGenConfig(complexity_bound=5).depth_limit(3) == 3
    # a budget of 2 only ever buys single-feature clauses
    assert ColGenConfig(complexity_bound=2).depth_limit(100) == 1


def test_config_validation():
    with pytest.raises(ValueError, match="complexity_bound"):
        ColGenConfig(complexity_bound=1)
    with pytest.raises(ValueError, match="clause_bound"):
        ColGenConfig(complexity_bound=4, clause_bound=0)
    with pytest.raises(ValueError, match="kappa"):
        ColGenConfig(complexity_bound=4, kappa=0)
    with pytest.raises(ValueError, match="time limits"):
        ColGenConfig(complexity_bound=4, time_limit=0.0)
    with pytest.raises(ValueError, match="time limits"):
        ColGenConfig(complexity_bound=4, pricing_time_limit=-1.0)


def test_reduced_cost_dense_matches_definition():
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(4, 20))
        d = int(rng.integers(2, 8))
        X = (rng.random((n, d)) < 0.5).astype(np.uint8)
        y = (rng.random(n) < 0.5).astype(np.int8)
        if y.sum() == 0:
            y[0] = 1
        mu = rng.random(int(y.sum())) * 2
        lam = float(rng.random())
        size = int(rng.integers(1, min(d, 3) + 1))
        feats = tuple(sorted(rng.choice(d, size=size, replace=False).tolist()))
        got = reduced_cost_dense(X, y, mu, lam, feats)
        want = clause_reduced_cost(feats, X, y, mu, lam)
        assert got == pytest.approx(want, abs=1e-12)


def test_grow_basis_shifts_slacks_and_pads_new_columns():
    # two positives, one clause column: variables [xi0, xi1, w0, s0, s1, sb]
    bidx = np.array([0, 2, 5], dtype=np.int64)
    vstat = np.array([BASIC, AT_LOWER, BASIC, AT_LOWER, AT_UPPER, BASIC],
                     dtype=np.int8)
    bidx2, vstat2 = _grow_basis((bidx, vstat), n_pos=2, k_old=1, k_new=2)
    assert bidx2.tolist() == [0, 2, 7]
    assert len(vstat2) == 8
    assert vstat2[:3].tolist() == [BASIC, AT_LOWER, BASIC]
    assert vstat2[3:5].tolist() == [AT_LOWER, AT_LOWER]
    assert vstat2[5:].tolist() == [AT_LOWER, AT_UPPER, BASIC]


def random_instance(rng):
    n = int(rng.integers(6, 26))
    k = int(rng.integers(2, 6))
    X_half = (rng.random((n, k)) < 0.5).astype(np.uint8)
    y = (rng.random(n) < 0.5).astype(np.int8)
    if y.sum() == 0:
        y[int(rng.integers(n))] = 1
    return make_binary_dataset(X_half, y)


def check_against_enumeration(ds, res, C, D):
    opt, _ = best_ruleset_by_enumeration(ds.X, ds.y, C, D)
    assert res.objective == opt
    if res.lower_bound is not None:
        assert res.lower_bound <= opt
    if res.optimal:
        # the flag promises the certificate closed the gap
        assert res.lower_bound == res.objective == opt
        assert guarded_ceil(res.z_rmlp) == res.objective
    assert sum(c.complexity for c in res.clauses) <= C
    assert all(len(c.features) <= D for c in res.clauses)
    assert selection_loss(res.clauses, ds) == res.objective
    return opt


def test_random_instances_match_exhaustive_search():
    rng = np.random.default_rng(404)
    converged = 0
    for trial in range(30):
        ds = random_instance(rng)
        C = int(rng.integers(2, 9))
        D = int(rng.integers(1, 4))
        cfg = small_config(C, D, seed=trial)
        res = run_column_generation(ds, cfg)
        opt = check_against_enumeration(ds, res, C, D)

        # master value never increases while columns arrive
        zs = [t.master_value for t in res.trace]
        assert all(a >= b - 1e-7 for a, b in zip(zs, zs[1:]))
        assert all(t.added <= cfg.max_columns for t in res.trace)
        assert res.pool_size == res.trace[-1].pool_size
        if res.rmlp_converged:
            converged += 1
            # converged means z_rmlp is the true LP optimum, so its ceiling
            # is certified; an integrality gap above it is still possible
            assert res.lower_bound == guarded_ceil(res.z_rmlp)
        if res.lower_bound is not None:
            assert res.lower_bound <= opt
    # tiny instances with generous limits should essentially always certify
    assert converged >= 28


def test_degenerate_optimum_still_certifies():
    # one feature separates perfectly; after its clause enters the pool the
    # master sits at zero with that column at its upper bound, which must
    # not keep the pricer reporting it as progress
    ds = make_binary_dataset(np.array([[1], [1], [0]], dtype=np.uint8),
                             np.array([1, 1, 0], dtype=np.int8))
    res = run_column_generation(ds, small_config(4))
    assert res.objective == 0
    assert res.rmlp_converged
    assert res.lower_bound == 0
    assert res.optimal
    last = res.trace[-1]
    assert last.added == 0
    assert last.best_reduced_cost >= -1e-9


def test_pool_deduplicates_and_checks_ownership():
    ds = tiny_example()
    pool = ClausePool(ds)
    assert pool.add((0,))
    assert not pool.add((0,))
    assert pool.add((1, 2))
    assert not pool.add((2, 1))
    assert len(pool) == 2
    assert (0,) in pool and (1, 2) in pool and (3,) not in pool

    other = tiny_example()
    with pytest.raises(ValueError, match="different dataset"):
        run_column_generation(other, small_config(4), pool=pool)


def test_no_positive_samples_rejected():
    ds = make_binary_dataset(np.array([[1], [0]], dtype=np.uint8),
                             np.array([0, 0], dtype=np.int8))
    with pytest.raises(ValueError, match="positive"):
        run_column_generation(ds, small_config(4))


def test_warm_pool_reuse_reaches_same_objective():
    rng = np.random.default_rng(5)
    ds = random_instance(rng)
    pool = ClausePool(ds)
    first = run_column_generation(ds, small_config(6, 2), pool=pool)
    again = run_column_generation(ds, small_config(6, 2), pool=pool)
    assert again.objective == first.objective
    assert again.iterations <= first.iterations


def test_max_columns_one_still_reaches_optimum():
    rng = np.random.default_rng(17)
    ds = random_instance(rng)
    cfg = small_config(6, 2, max_columns=1)
    res = run_column_generation(ds, cfg)
    assert all(t.added <= 1 for t in res.trace)
    check_against_enumeration(ds, res, 6, 2)


def test_forced_large_regime_samples_and_still_solves():
    rng = np.random.default_rng(23)
    ds = random_instance(rng)
    # thresholds pushed down so this tiny instance takes the sampling path;
    # the sample targets keep every row and feature, so the pool still ends
    # up rich enough for the exact optimum
    cfg = small_config(6, 2, small_nnz=1, large_nnz=2, seed=3)
    res = run_column_generation(ds, cfg)
    assert res.regime == "large"
    assert any("restricted-exact" in t.mode for t in res.trace)
    assert not res.rmlp_converged  # sampled pricing never certifies
    check_against_enumeration(ds, res, 6, 2)


def test_forced_medium_regime_keeps_certificates():
    rng = np.random.default_rng(29)
    ds = random_instance(rng)
    cfg = small_config(6, 2, small_nnz=1, large_nnz=10**9)
    res = run_column_generation(ds, cfg)
    assert res.regime == "medium"
    assert res.rmlp_converged
    check_against_enumeration(ds, res, 6, 2)


def test_time_limit_exhausted_before_pricing():
    ds = tiny_example()
    cfg = ColGenConfig(complexity_bound=4, time_limit=1e-9)
    res = run_column_generation(ds, cfg)
    assert res.iterations == 1
    assert res.trace[0].mode == "time-up"
    assert res.clauses == []
    assert res.objective == len(ds.pos)
    assert not res.rmlp_converged
    assert res.lower_bound is None
    assert not res.optimal


# -- the restricted integer solve ------------------------------------------


def test_mip_empty_pool():
    mip = solve_restricted_mip(np.zeros((3, 0)), np.zeros(0), np.zeros(0), 4.0)
    assert mip.objective == 3
    assert mip.selected == []
    assert mip.optimal
    assert mip.nodes == 0


def test_mip_integral_root_needs_one_node():
    pos_cover = np.ones((3, 1))
    mip = solve_restricted_mip(pos_cover, np.zeros(1), np.array([2.0]), 4.0)
    assert mip.objective == 0
    assert mip.selected == [0]
    assert mip.optimal
    assert mip.nodes == 1


def test_mip_budget_forces_a_choice():
    # clause 0 covers two positives, clause 1 covers the third
    pos_cover = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    neg_counts = np.zeros(2)
    complexities = np.array([2.0, 2.0])
    tight = solve_restricted_mip(pos_cover, neg_counts, complexities, 2.0)
    assert tight.objective == 1
    assert tight.selected == [0]
    roomy = solve_restricted_mip(pos_cover, neg_counts, complexities, 4.0)
    assert roomy.objective == 0
    assert roomy.selected == [0, 1]


def test_mip_fractional_cover_needs_branching():
    # pairwise covers of three positives: the LP plays w = 1/2 everywhere
    # and reaches zero, the integer answer must drop one positive
    pos_cover = np.array([[1.0, 0.0, 1.0],
                          [1.0, 1.0, 0.0],
                          [0.0, 1.0, 1.0]])
    neg_counts = np.zeros(3)
    complexities = np.full(3, 2.0)
    mip = solve_restricted_mip(pos_cover, neg_counts, complexities, 3.0)
    assert mip.lp_value == pytest.approx(0.0, abs=1e-7)
    assert mip.objective == 1
    assert len(mip.selected) == 1
    assert mip.optimal
    assert mip.nodes > 1


def test_mip_weighs_negative_hits_against_coverage():
    # clause 0 is cheap but hits two negatives, clause 1 is clean but costly
    pos_cover = np.ones((3, 2))
    neg_counts = np.array([2.0, 0.0])
    complexities = np.array([2.0, 4.0])
    roomy = solve_restricted_mip(pos_cover, neg_counts, complexities, 4.0)
    assert roomy.objective == 0
    assert roomy.selected == [1]
    tight = solve_restricted_mip(pos_cover, neg_counts, complexities, 3.0)
    assert tight.objective == 2
    assert tight.selected == [0]


def test_mip_time_limit_returns_incumbent():
    # zero time allows no nodes, but the greedy seed still lands a real
    # selection: one clause is all the budget admits, covering two rows
    pos_cover = np.array([[1.0, 0.0, 1.0],
                          [1.0, 1.0, 0.0],
                          [0.0, 1.0, 1.0]])
    mip = solve_restricted_mip(pos_cover, np.zeros(3), np.full(3, 2.0), 3.0,
                               time_limit=0.0)
    assert not mip.optimal
    assert mip.nodes == 0
    assert mip.objective == 1
    assert mip.selected == [0]


# -- the budget sweep --------------------------------------------------------


def test_sweep_matches_per_budget_optimum_and_never_degrades():
    rng = np.random.default_rng(99)
    ds = random_instance(rng)
    budgets = [2, 4, 6, 8]
    points = sweep_complexity(ds, budgets, small_config(8, 2))
    assert [p.complexity_bound for p in points] == budgets
    prev = None
    for p in points:
        opt, _ = best_ruleset_by_enumeration(ds.X, ds.y, p.complexity_bound, 2)
        assert p.result.objective == opt
        assert p.result.objective <= p.first_pass_objective
        assert sum(c.complexity for c in p.result.clauses) <= p.complexity_bound
        if prev is not None:
            assert p.result.objective <= prev
        prev = p.result.objective


def test_sweep_deduplicates_budgets():
    ds = tiny_example()
    points = sweep_complexity(ds, [4, 2, 4], small_config(4))
    assert [p.complexity_bound for p in points] == [2, 4]
