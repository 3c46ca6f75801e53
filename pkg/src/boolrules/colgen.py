"""Column generation: grow a clause pool until the master LP is priced out,
then pick the final rule set with a small branch-and-bound over the pool.

The loop alternates between solving the restricted master LP over the pool
(warm-started from the previous basis) and pricing new clauses against its
duals.  Instance size decides the pricing strategy: small and medium
problems run the exact search, large ones price on a row/feature sample
first.  Whenever the exact search finishes, or times out with a usable
bound, the dual information yields a certified lower bound on the best
achievable training loss; those certificates are kept across iterations and
reported with the final model.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import BinaryDataset
from .lp_engine import AT_LOWER, BASIC, solve_restricted_mlp
from .pricing import (
    NEGATIVE_EPS,
    DualContext,
    classify_regime,
    price_exact,
    price_greedy,
    restrict_pricing,
)
from .ruleset import Clause

CEIL_EPS = 1e-7


def guarded_ceil(value: float) -> int:
    """Ceiling that forgives tiny upward noise, so 3 + 1e-9 stays 3."""
    return int(math.ceil(value - CEIL_EPS))


@dataclass
class ColGenConfig:
    """Knobs for one training run.

    complexity_bound is the total complexity budget C; clause_bound caps
    features per clause and defaults to C - 1 (a larger clause could never
    fit the budget anyway).  Time limits are wall-clock seconds: the overall
    limit covers the whole loop including the final integer solve, the
    pricing limit applies to each exact pricing call.
    """

    complexity_bound: int
    clause_bound: int | None = None
    kappa: int = 5
    time_limit: float = 300.0
    pricing_time_limit: float = 45.0
    mip_time_limit: float | None = None
    max_columns: int = 10
    max_returned: int = 10
    greedy_evals: int = 50000
    sample_target: int = 2000
    restricted_nnz_cap: int = 100000
    small_nnz: int = 100000
    large_nnz: int = 1000000
    seed: int = 0

    def __post_init__(self):
        if self.complexity_bound < 2:
            raise ValueError("complexity_bound must be at least 2 "
                             "(the cheapest clause costs 2)")
        if self.clause_bound is not None and self.clause_bound < 1:
            raise ValueError("clause_bound must be at least 1")
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")
        if self.time_limit <= 0 or self.pricing_time_limit <= 0:
            raise ValueError("time limits must be positive")

    def depth_limit(self, d: int) -> int:
        cap = self.complexity_bound - 1
        if self.clause_bound is not None:
            cap = min(cap, self.clause_bound)
        return max(1, min(cap, d))


@dataclass
class TraceEntry:
    iteration: int
    master_value: float
    best_reduced_cost: float
    mode: str
    added: int
    pool_size: int
    seconds: float


class ClausePool:
    """Deduplicated clause columns with their master coefficients."""

    def __init__(self, ds: BinaryDataset):
        self.ds = ds
        self.index: dict = {}
        self.clauses: list[Clause] = []
        self._pos_cover: list[np.ndarray] = []
        self._neg_counts: list[float] = []
        self._complexities: list[float] = []

    def __len__(self) -> int:
        return len(self.clauses)

    def __contains__(self, features) -> bool:
        return tuple(features) in self.index

    def add(self, features) -> bool:
        feats = tuple(sorted(int(j) for j in features))
        if feats in self.index:
            return False
        clause = Clause(feats)
        cover = clause.covers(self.ds.X)
        self.index[feats] = len(self.clauses)
        self.clauses.append(clause)
        self._pos_cover.append(cover[self.ds.pos].astype(float))
        self._neg_counts.append(float(cover[self.ds.neg].sum()))
        self._complexities.append(float(clause.complexity))
        return True

    def arrays(self):
        n_pos = len(self.ds.pos)
        if not self.clauses:
            return (np.zeros((n_pos, 0)), np.zeros(0), np.zeros(0))
        return (np.column_stack(self._pos_cover),
                np.array(self._neg_counts),
                np.array(self._complexities))


def reduced_cost_dense(X, y, mu, lam, features) -> float:
    """Reduced cost of one clause straight off the full matrices; the
    admission check uses this regardless of which pricer proposed it."""
    feats = list(features)
    cover = X[:, feats].all(axis=1)
    pos = np.flatnonzero(y == 1)
    return (float(lam) * (1 + len(feats))
            + float(cover[y == 0].sum())
            - float(np.asarray(mu)[cover[pos]].sum()))


def _grow_basis(basis, n_pos: int, k_old: int, k_new: int):
    """Remap a master basis after appending k_new clause columns: slack
    indices shift right, new columns start at their lower bound."""
    bidx, vstat = basis
    cut = n_pos + k_old
    bidx2 = np.where(bidx < cut, bidx, bidx + k_new)
    vstat2 = np.full(len(vstat) + k_new, AT_LOWER, dtype=vstat.dtype)
    vstat2[:cut] = vstat[:cut]
    vstat2[cut + k_new:] = vstat[cut:]
    return bidx2, vstat2


@dataclass
class MIPResult:
    objective: int
    selected: list
    optimal: bool
    nodes: int
    lp_value: float
    elapsed: float


def _node_start_basis(pos_cover, w_lower):
    """Feasible start basis for a node LP with some w fixed to 1: rows those
    clauses already cover get their slack basic, the rest keep xi basic."""
    n_pos, K = pos_cover.shape
    covered = (pos_cover @ w_lower) >= 1.0 - 1e-9 if K else np.zeros(n_pos, bool)
    n = n_pos + K
    basic = np.where(covered, n + np.arange(n_pos), np.arange(n_pos))
    basic = np.concatenate([basic, [n + n_pos]]).astype(np.int64)
    vstat = np.full(n + n_pos + 1, AT_LOWER, dtype=np.int8)
    vstat[basic] = BASIC
    return basic, vstat


def _selection_objective(pos_cover, neg_counts, chosen) -> int:
    if not len(chosen):
        return pos_cover.shape[0]
    covered = pos_cover[:, chosen].sum(axis=1) > 0
    missed = int((~covered).sum())
    return missed + int(round(neg_counts[chosen].sum()))


def _greedy_selection(pos_cover, neg_counts, complexities, budget,
                      start=(), allowed=None, by_density=False) -> list:
    """Pick clauses one at a time by best objective drop under the budget.

    Each step adds the clause whose newly covered positives minus its
    negative-side cost is largest (or largest per complexity unit, with
    `by_density`); stops when nothing improves.  `start` fixes an initial
    selection, `allowed` masks the candidate clauses."""
    n_pos, K = pos_cover.shape
    remaining = np.ones(K, dtype=bool) if allowed is None else np.asarray(allowed).copy()
    uncovered = np.ones(n_pos, dtype=bool)
    chosen = list(start)
    used = 0.0
    for k in chosen:
        remaining[k] = False
        used += complexities[k]
        uncovered &= pos_cover[:, k] < 0.5
    while True:
        gain = pos_cover[uncovered].sum(axis=0) - neg_counts
        gain[~remaining] = -np.inf
        gain[used + complexities > budget + 1e-9] = -np.inf
        score = gain / complexities if by_density else gain
        score[gain <= 0] = -np.inf
        k = int(score.argmax())
        if gain[k] <= 0 or not np.isfinite(score[k]):
            return chosen
        chosen.append(k)
        remaining[k] = False
        used += complexities[k]
        uncovered &= pos_cover[:, k] < 0.5


def _polish_selection(pos_cover, neg_counts, complexities, budget, chosen) -> list:
    """First-improvement local search: drop one chosen clause, regrow
    greedily with the dropped clause banned, keep the result if it scores
    better.  Repeats until no single drop helps.  Escapes the classic
    greedy trap of a broad clause whose negative cover is sunk cost once
    taken; banning the dropped clause keeps the regrow from walking
    straight back into it."""
    K = pos_cover.shape[1]
    cur = list(chosen)
    cur_obj = _selection_objective(pos_cover, neg_counts, cur)
    improved = True
    while improved:
        improved = False
        for k in list(cur):
            rest = [j for j in cur if j != k]
            mask = np.ones(K, dtype=bool)
            mask[k] = False
            for cand in (
                _greedy_selection(pos_cover, neg_counts, complexities,
                                  budget, start=rest),
                _greedy_selection(pos_cover, neg_counts, complexities,
                                  budget, start=rest, allowed=mask),
            ):
                obj = _selection_objective(pos_cover, neg_counts, cand)
                if obj < cur_obj:
                    cur, cur_obj = cand, obj
                    improved = True
                    break
            if improved:
                break
    return cur


def _heuristic_selections(pos_cover, neg_counts, complexities, budget,
                          allowed=None) -> list:
    """Best polished selection over both greedy flavors."""
    best, best_obj = [], None
    for by_density in (False, True):
        sel = _greedy_selection(pos_cover, neg_counts, complexities, budget,
                                allowed=allowed, by_density=by_density)
        sel = _polish_selection(pos_cover, neg_counts, complexities, budget, sel)
        obj = _selection_objective(pos_cover, neg_counts, sel)
        if best_obj is None or obj < best_obj:
            best, best_obj = sel, obj
    return best


def solve_restricted_mip(pos_cover, neg_counts, complexities, budget,
                         time_limit: float | None = None,
                         start=None) -> MIPResult:
    """Best integer clause selection within the pool, by branch and bound.

    Branches on the most fractional clause variable (ties to the lowest
    index), exploring the rounded direction first.  Every node seeds the
    incumbent by greedily rounding its LP solution.  A time limit turns the
    result into a best-effort incumbent with optimal=False.  `start` warm
    starts the root LP, which is the same LP the column generation loop
    solved last, so passing that loop's final basis makes the root free.
    """
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + time_limit
    pos_cover = np.asarray(pos_cover, dtype=float)
    neg_counts = np.asarray(neg_counts, dtype=float)
    complexities = np.asarray(complexities, dtype=float)
    n_pos, K = pos_cover.shape

    best_obj = n_pos
    best_sel: list = []
    nodes = 0
    lp_root = float(n_pos)
    if K == 0:
        return MIPResult(best_obj, [], True, 0, lp_root, time.perf_counter() - t0)

    def try_incumbent(chosen):
        nonlocal best_obj, best_sel
        obj = _selection_objective(pos_cover, neg_counts, chosen)
        if obj < best_obj:
            best_obj = obj
            best_sel = list(chosen)

    try_incumbent(_heuristic_selections(pos_cover, neg_counts, complexities,
                                        budget))

    stack = [(np.zeros(K), np.ones(K))]
    optimal = True
    while stack:
        if deadline is not None and time.perf_counter() > deadline:
            optimal = False
            break
        w_lower, w_upper = stack.pop()
        fixed_cost = complexities[w_lower >= 1.0].sum()
        if fixed_cost > budget + 1e-9:
            continue
        node_start = _node_start_basis(pos_cover, w_lower)
        if nodes == 0 and start is not None:
            node_start = start
        ms = solve_restricted_mlp(
            pos_cover, neg_counts, complexities, budget,
            start=node_start, w_lower=w_lower, w_upper=w_upper,
            deadline=deadline)
        nodes += 1
        if nodes == 1:
            lp_root = ms.objective
        if ms.status == "infeasible":
            continue
        if ms.status != "optimal":
            # ran out of time or iterations inside the node LP; the subtree
            # stays unexplored, so the final answer is only an incumbent
            optimal = False
            continue
        if guarded_ceil(ms.objective) >= best_obj:
            continue

        w = ms.w
        # round by regrowing greedily inside the LP support; the LP already
        # refused clauses whose negative cover outweighs their help
        try_incumbent(_heuristic_selections(pos_cover, neg_counts,
                                            complexities, budget,
                                            allowed=w > 1e-6))

        frac = np.abs(w - 0.5) < 0.5 - 1e-6
        if not frac.any():
            sel = [int(k) for k in np.flatnonzero(w > 0.5)]
            try_incumbent(sel)
            continue
        dist = np.where(frac, np.abs(w - 0.5), np.inf)
        k = int(dist.argmin())
        up_first = w[k] >= 0.5
        lo0, up0 = w_lower.copy(), w_upper.copy()
        up0[k] = 0.0
        lo1, up1 = w_lower.copy(), w_upper.copy()
        lo1[k] = 1.0
        children = [(lo1, up1), (lo0, up0)] if up_first else [(lo0, up0), (lo1, up1)]
        stack.append(children[1])
        stack.append(children[0])

    return MIPResult(best_obj, sorted(best_sel), optimal, nodes, lp_root,
                     time.perf_counter() - t0)


@dataclass
class ColGenResult:
    """What a training run produced.

    lower_bound is the best certified floor on the optimal training loss, or
    None when no pricing round produced a certificate.  optimal is claimed
    only when the master LP was priced out AND its rounded value meets the
    integer objective; a weaker certificate that happens to close the gap
    stays unclaimed.
    """

    clauses: list
    objective: int
    z_rmlp: float
    lower_bound: int | None
    optimal: bool
    rmlp_converged: bool
    mip_optimal: bool
    iterations: int
    pool_size: int
    trace: list = field(repr=False)
    seconds: float = 0.0
    regime: str = ""


def run_column_generation(ds: BinaryDataset, cfg: ColGenConfig,
                          pool: ClausePool | None = None) -> ColGenResult:
    """Train one rule selection on a binarized dataset.

    An external pool may be passed in (the complexity sweep shares one); it
    is grown in place.  Returns the chosen clauses as pool indices resolved
    to Clause objects, the integer training objective, and the best
    certified lower bound (0 when nothing could be certified).
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    if pool is None:
        pool = ClausePool(ds)
    if pool.ds is not ds:
        raise ValueError("pool was built for a different dataset")
    n_pos = len(ds.pos)
    if n_pos == 0:
        raise ValueError("training needs at least one positive sample")
    depth = cfg.depth_limit(ds.d)
    regime = classify_regime(ds.pricing_nnz(), cfg.small_nnz, cfg.large_nnz)
    budget = float(cfg.complexity_bound)

    basis = None
    trace: list[TraceEntry] = []
    best_lb: int | None = None
    z_rmlp = float(n_pos)
    converged = False
    iteration = 0

    loop_deadline = t0 + cfg.time_limit
    while True:
        iteration += 1
        it_t0 = time.perf_counter()
        pos_cover, neg_counts, complexities = pool.arrays()
        ms = solve_restricted_mlp(pos_cover, neg_counts, complexities,
                                  budget, start=basis, deadline=loop_deadline)
        if ms.status not in ("optimal", "time-limit"):
            ms = solve_restricted_mlp(pos_cover, neg_counts, complexities,
                                      budget, deadline=loop_deadline)
        if ms.status == "time-limit":
            # the master itself outlived the budget; keep the last finished
            # master's value and basis and fall through to the integer stage
            trace.append(TraceEntry(iteration, z_rmlp, math.nan, "time-up",
                                    0, len(pool), time.perf_counter() - it_t0))
            break
        if ms.status != "optimal":
            raise RuntimeError(f"master LP failed with status {ms.status}")
        z_rmlp = ms.objective
        basis = ms.basis
        mu, lam = ms.mu, ms.lam

        elapsed = time.perf_counter() - t0
        remaining = cfg.time_limit - elapsed
        if remaining <= 0:
            trace.append(TraceEntry(iteration, z_rmlp, math.nan, "time-up",
                                    0, len(pool), time.perf_counter() - it_t0))
            break
        price_budget = min(cfg.pricing_time_limit, remaining)

        # Pricing minimizes over clauses outside the pool.  A pool clause
        # sitting at its upper bound prices negative at a perfectly optimal
        # master (the bound's own dual absorbs the difference), so it proves
        # nothing and would only stall termination.
        results = []
        if regime == "large":
            rp = restrict_pricing(ds.X, ds.y, mu, lam, depth, rng,
                                  sample_target=cfg.sample_target,
                                  nnz_cap=cfg.restricted_nnz_cap)
            results.append(rp.lift(price_exact(
                rp.ctx, time_limit=price_budget,
                max_returned=cfg.max_returned)))
        else:
            ctx = DualContext(ds.X, ds.y, mu, lam, depth)
            results.append(price_exact(ctx, time_limit=price_budget,
                                       max_returned=cfg.max_returned,
                                       exclude=pool.index.keys()))

        # certificates: only full-data exact searches may claim a floor
        head = results[0]
        if head.mode == "exact" and head.certified_floor is not None:
            floor = head.certified_floor
            if floor >= -NEGATIVE_EPS:
                lb = guarded_ceil(z_rmlp)
            else:
                lb = guarded_ceil(z_rmlp + (budget / 2.0) * floor)
            lb = max(lb, 0)  # the objective is a count
            best_lb = lb if best_lb is None else max(best_lb, lb)
            if head.proven_optimal and head.best_value >= -NEGATIVE_EPS:
                converged = True

        # candidate admission, re-priced on the full data
        def admissions():
            seen = []
            for res in results:
                for feats, _ in res.clauses:
                    if feats in pool or feats in (f for f, _ in seen):
                        continue
                    rc = reduced_cost_dense(ds.X, ds.y, mu, lam, feats)
                    if rc < -NEGATIVE_EPS:
                        seen.append((feats, rc))
            seen.sort(key=lambda t: (t[1], t[0]))
            return seen[:cfg.max_columns]

        admitted = admissions()
        if not admitted and not converged:
            if regime == "large":
                ctx = DualContext(ds.X, ds.y, mu, lam, depth)
            results.append(price_greedy(ctx, kappa=cfg.kappa,
                                        level_evals=cfg.greedy_evals,
                                        max_returned=cfg.max_returned,
                                        exclude=pool.index.keys()))
            admitted = admissions()

        mode = "+".join(r.mode for r in results)
        added = 0
        for feats, _ in admitted:
            if pool.add(feats):
                added += 1
        if added:
            basis = _grow_basis(basis, n_pos, len(pool) - added, added)
        best_rc = min((rc for _, rc in admitted),
                      default=head.best_value)
        trace.append(TraceEntry(iteration, z_rmlp, best_rc, mode, added,
                                len(pool), time.perf_counter() - it_t0))
        if added == 0:
            break

    pos_cover, neg_counts, complexities = pool.arrays()
    elapsed = time.perf_counter() - t0
    mip_budget = cfg.mip_time_limit
    if mip_budget is None:
        mip_budget = max(cfg.time_limit - elapsed, 5.0)
    mip = solve_restricted_mip(pos_cover, neg_counts, complexities, budget,
                               time_limit=mip_budget, start=basis)
    chosen = [pool.clauses[k] for k in mip.selected]
    if converged:
        ceiling = guarded_ceil(z_rmlp)
        best_lb = ceiling if best_lb is None else max(best_lb, ceiling)
    return ColGenResult(
        clauses=chosen,
        objective=mip.objective,
        z_rmlp=z_rmlp,
        lower_bound=best_lb,
        optimal=converged and best_lb == mip.objective,
        rmlp_converged=converged,
        mip_optimal=mip.optimal,
        iterations=iteration,
        pool_size=len(pool),
        trace=trace,
        seconds=time.perf_counter() - t0,
        regime=regime,
    )


@dataclass
class SweepPoint:
    complexity_bound: int
    result: ColGenResult
    first_pass_objective: int


def sweep_complexity(ds: BinaryDataset, budgets, cfg: ColGenConfig):
    """Train across several complexity budgets, sharing one clause pool.

    Budgets run in ascending order so cheap models seed the pool for the
    richer ones.  A second pass then re-solves every budget's integer
    selection against the full union pool and keeps whichever selection is
    better; with the larger pool the final loss can only improve or stay
    put relative to the first pass.
    """
    budgets = sorted(set(int(b) for b in budgets))
    pool = ClausePool(ds)
    first: dict[int, ColGenResult] = {}
    for C in budgets:
        cfg_c = replace(cfg, complexity_bound=C)
        first[C] = run_column_generation(ds, cfg_c, pool=pool)

    points = []
    pos_cover, neg_counts, complexities = pool.arrays()
    for C in budgets:
        res = first[C]
        mip_budget = cfg.mip_time_limit
        if mip_budget is None:
            mip_budget = cfg.time_limit
        mip = solve_restricted_mip(pos_cover, neg_counts, complexities,
                                   float(C), time_limit=mip_budget)
        if mip.objective < res.objective:
            res = replace(res, objective=mip.objective,
                          clauses=[pool.clauses[k] for k in mip.selected],
                          optimal=(res.rmlp_converged
                                   and res.lower_bound == mip.objective),
                          mip_optimal=mip.optimal,
                          pool_size=len(pool))
        points.append(SweepPoint(complexity_bound=C, result=res,
                                 first_pass_objective=first[C].objective))
    return points
