"""Pricing: search for clauses with negative reduced cost.

Given duals (mu over the positive cover rows, lam for the budget row), the
reduced cost of a clause K is

    (negatives covered) - sum of mu over covered positives + lam * (1 + |K|).

`price_exact` minimizes this by depth-first branch and bound over feature
subsets and is the source of optimality certificates.  `price_greedy` is a
beam-style fallback with hard evaluation caps for instances where the exact
search cannot finish.  `restrict_pricing` shrinks the instance by row and
feature sampling first; anything it finds must be re-priced on the full data
by the caller, and nothing it proves counts as a certificate.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

NEGATIVE_EPS = 1e-9

_MU_TINY = 1e-12


class _Timeout(Exception):
    pass


@dataclass
class DualContext:
    """Preprocessed pricing state for one dual solution.

    `mu` must be aligned with the positives of (X, y) in row order.  Only
    positives with mu above a small tolerance participate in the search;
    zero-dual positives cannot make a reduced cost negative.
    """

    X: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    lam: float
    depth_limit: int

    Xp: np.ndarray = field(init=False, repr=False)
    Xn: np.ndarray = field(init=False, repr=False)
    mu_w: np.ndarray = field(init=False, repr=False)
    root_mu: np.ndarray = field(init=False, repr=False)
    root_neg: np.ndarray = field(init=False, repr=False)
    order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.uint8)
        y = np.asarray(self.y)
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y == 0)
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (len(pos),):
            raise ValueError("mu must have one entry per positive sample")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        self.depth_limit = max(1, min(int(self.depth_limit), X.shape[1]))
        live = mu > _MU_TINY
        self.Xp = X[pos[live]]
        self.mu_w = mu[live]
        self.Xn = X[neg]
        self.root_mu = self.mu_w @ self.Xp if self.Xp.size else np.zeros(X.shape[1])
        self.root_neg = (self.Xn.sum(axis=0, dtype=np.int64)
                         if self.Xn.size else np.zeros(X.shape[1], dtype=np.int64))
        # most promising features first: ties fall back to column order
        self.order = np.argsort(-self.root_mu, kind="stable")

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass
class PricingResult:
    """Outcome of one pricing call.

    `clauses` lists (feature tuple, reduced cost) sorted most negative
    first.  `certified_floor` is a proven lower bound on the minimum reduced
    cost over all clauses within the depth limit, or None when the mode
    cannot certify anything.  `proven_optimal` means `best_value` equals
    that minimum exactly.
    """

    clauses: list
    best_value: float
    best_clause: tuple | None
    certified_floor: float | None
    proven_optimal: bool
    explored: int
    elapsed: float
    mode: str


def reduced_cost(ctx: DualContext, features) -> float:
    feats = list(features)
    value = ctx.lam * (1 + len(feats))
    if ctx.Xn.size:
        value += float(ctx.Xn[:, feats].all(axis=1).sum())
    if ctx.Xp.size:
        value -= float(ctx.mu_w[ctx.Xp[:, feats].all(axis=1)].sum())
    return value


class _TopK:
    """The k most negative clauses seen, as a bounded max-heap."""

    def __init__(self, k):
        self.k = k
        self.heap = []  # (-rc, features)

    def offer(self, rc, features):
        if rc >= -NEGATIVE_EPS:
            return
        if len(self.heap) < self.k:
            heapq.heappush(self.heap, (-rc, features))
        elif -rc > self.heap[0][0]:
            heapq.heapreplace(self.heap, (-rc, features))

    def worst(self):
        return -self.heap[0][0]

    def full(self):
        return len(self.heap) >= self.k

    def sorted_clauses(self):
        return sorted(((feats, -neg_rc) for neg_rc, feats in self.heap),
                      key=lambda t: (t[1], t[0]))


def price_exact(ctx: DualContext, time_limit: float | None = None,
                max_returned: int = 10, exclude=None) -> PricingResult:
    """Branch and bound over feature subsets of size at most depth_limit.

    Nodes extend a clause only with features later in the root ordering, so
    every subset is reached once.  A subtree of strict extensions of clause
    K is bounded below by lam * (2 + |K|) - (mu mass K still covers): the
    negatives term can only help and covered mu mass only shrinks.  The
    subtree is cut when that bound cannot beat the incumbent minimum or, for
    clause collection, the worst kept clause.

    `exclude` skips clauses already in the caller's pool: a pool clause at
    its upper bound legitimately prices negative without saying anything
    new, so minimum, collection and floor are all over clauses outside it.
    Excluded clauses are still extended.

    On completion the minimum is exact.  On timeout the result still carries
    a certified floor: the minimum of the incumbent and the bounds of every
    subtree the search did not enter.
    """
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + float(time_limit)
    exclude = frozenset(exclude) if exclude else frozenset()
    top = _TopK(max_returned)
    best_val = math.inf
    best_clause = None
    open_floor = math.inf
    evals = 0
    ticks = 0
    lam = ctx.lam
    order = ctx.order
    Xp, Xn, mu_w = ctx.Xp, ctx.Xn, ctx.mu_w
    D = ctx.depth_limit

    def threshold():
        collect = top.worst() if top.full() else -NEGATIVE_EPS
        return max(best_val, collect)

    def expand(prefix, order_pos, rows_p, rows_n, depth):
        nonlocal best_val, best_clause, open_floor, evals, ticks
        ticks += 1
        if deadline is not None and ticks % 32 == 0 \
                and time.perf_counter() > deadline:
            raise _Timeout
        cand = order[order_pos + 1:]
        if cand.size == 0:
            return
        if rows_p.size:
            mu_cov = mu_w[rows_p] @ Xp[np.ix_(rows_p, cand)]
        else:
            mu_cov = np.zeros(cand.size)
        if rows_n.size:
            neg_cov = Xn[np.ix_(rows_n, cand)].sum(axis=0, dtype=np.int64)
        else:
            neg_cov = np.zeros(cand.size, dtype=np.int64)
        evals += cand.size
        rc = neg_cov - mu_cov + lam * (2 + depth)

        worth = np.flatnonzero(rc < max(best_val, -NEGATIVE_EPS))
        for k in worth[np.argsort(rc[worth], kind="stable")]:
            feats = tuple(sorted(prefix + (int(cand[k]),)))
            if feats in exclude:
                continue
            v = float(rc[k])
            if v < best_val:
                best_val = v
                best_clause = feats
            top.offer(v, feats)

        if depth + 1 >= D:
            return
        ext_bound = lam * (3 + depth) - mu_cov
        elig = np.flatnonzero(ext_bound < threshold())
        seq = elig[np.argsort(ext_bound[elig], kind="stable")]
        for t, ci in enumerate(seq):
            if ext_bound[ci] >= threshold():
                continue
            j = int(cand[ci])
            sub_p = rows_p[Xp[rows_p, j] == 1] if rows_p.size else rows_p
            sub_n = rows_n[Xn[rows_n, j] == 1] if rows_n.size else rows_n
            try:
                expand(prefix + (j,), order_pos + 1 + int(ci),
                       sub_p, sub_n, depth + 1)
            except _Timeout:
                rest = seq[t + 1:]
                if rest.size:
                    open_floor = min(open_floor, float(ext_bound[rest].min()))
                raise

    proven = True
    try:
        expand((), -1, np.arange(Xp.shape[0]), np.arange(Xn.shape[0]), 0)
    except _Timeout:
        proven = False

    if proven:
        floor = best_val if math.isfinite(best_val) else 0.0
    else:
        floor = min(best_val, open_floor)
    return PricingResult(
        clauses=top.sorted_clauses(),
        best_value=best_val,
        best_clause=best_clause,
        certified_floor=floor,
        proven_optimal=proven,
        explored=evals,
        elapsed=time.perf_counter() - t0,
        mode="exact",
    )


def price_greedy(ctx: DualContext, kappa: int = 5,
                 level_evals: int = 50000, max_returned: int = 10,
                 time_limit: float | None = None,
                 exclude=None) -> PricingResult:
    """Beam-style pricing without optimality claims.

    Level 1 scores every single feature.  Features whose one-feature bound
    2 lam - (mu mass covered) is negative become seeds; each later level
    extends the current clauses in ascending reduced-cost order with
    higher-indexed features, keeping children whose extension bound stays
    negative.  Every level evaluates at most `level_evals` candidates and
    clause size is capped by kappa and the depth limit.  Clauses listed in
    `exclude` are extended but never reported.
    """
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + float(time_limit)
    exclude = frozenset(exclude) if exclude else frozenset()
    depth_cap = max(1, min(int(kappa), ctx.depth_limit))
    top = _TopK(max_returned)
    lam = ctx.lam
    Xp, Xn, mu_w = ctx.Xp, ctx.Xn, ctx.mu_w

    best_val = math.inf
    best_clause = None

    def record(rc, make_feats):
        nonlocal best_val, best_clause
        worth = np.flatnonzero(rc < max(best_val, -NEGATIVE_EPS))
        for k in worth[np.argsort(rc[worth], kind="stable")]:
            feats = make_feats(int(k))
            if feats in exclude:
                continue
            v = float(rc[k])
            if v < best_val:
                best_val = v
                best_clause = feats
            top.offer(v, feats)

    rc1 = ctx.root_neg - ctx.root_mu + 2.0 * lam
    evals = ctx.d
    record(rc1, lambda k: (k,))

    frontier = []
    for j in np.flatnonzero(2.0 * lam - ctx.root_mu < 0):
        j = int(j)
        rows_p = np.flatnonzero(Xp[:, j] == 1) if Xp.size else np.arange(0)
        rows_n = np.flatnonzero(Xn[:, j] == 1) if Xn.size else np.arange(0)
        frontier.append((float(rc1[j]), (j,), rows_p, rows_n))

    for level in range(1, depth_cap):
        if not frontier:
            break
        frontier.sort(key=lambda t: (t[0], t[1]))
        next_frontier = []
        used = 0
        for rc_parent, feats, rows_p, rows_n in frontier:
            if used >= level_evals:
                break
            if deadline is not None and time.perf_counter() > deadline:
                break
            cand = np.arange(feats[-1] + 1, ctx.d)
            if cand.size == 0:
                continue
            if cand.size > level_evals - used:
                cand = cand[:level_evals - used]
            used += cand.size
            evals += cand.size
            if rows_p.size:
                mu_cov = mu_w[rows_p] @ Xp[np.ix_(rows_p, cand)]
            else:
                mu_cov = np.zeros(cand.size)
            if rows_n.size:
                neg_cov = Xn[np.ix_(rows_n, cand)].sum(axis=0, dtype=np.int64)
            else:
                neg_cov = np.zeros(cand.size, dtype=np.int64)
            rc = neg_cov - mu_cov + lam * (2 + level)
            record(rc, lambda k: feats + (int(cand[k]),))
            if level + 1 >= depth_cap:
                continue
            ext_bound = lam * (3 + level) - mu_cov
            for k in np.flatnonzero(ext_bound < 0):
                j = int(cand[k])
                next_frontier.append((
                    float(rc[k]), feats + (j,),
                    rows_p[Xp[rows_p, j] == 1] if rows_p.size else rows_p,
                    rows_n[Xn[rows_n, j] == 1] if rows_n.size else rows_n,
                ))
        frontier = next_frontier

    return PricingResult(
        clauses=top.sorted_clauses(),
        best_value=best_val,
        best_clause=best_clause,
        certified_floor=None,
        proven_optimal=False,
        explored=evals,
        elapsed=time.perf_counter() - t0,
        mode="greedy",
    )


@dataclass
class RestrictedPricing:
    """A pricing instance over sampled rows and features.

    `lift` translates a result back to original feature indices and strips
    everything certificate-like: reduced costs were measured on the sample,
    so callers must re-price candidates on the full data.
    """

    ctx: DualContext
    rows: np.ndarray
    features: np.ndarray

    def lift(self, result: PricingResult) -> PricingResult:
        fmap = self.features
        lifted = [(tuple(int(fmap[j]) for j in feats), rc)
                  for feats, rc in result.clauses]
        best = None
        if result.best_clause is not None:
            best = tuple(sorted(int(fmap[j]) for j in result.best_clause))
        return PricingResult(
            clauses=[(tuple(sorted(f)), rc) for f, rc in lifted],
            best_value=result.best_value,
            best_clause=best,
            certified_floor=None,
            proven_optimal=False,
            explored=result.explored,
            elapsed=result.elapsed,
            mode="restricted-" + result.mode,
        )


def restrict_pricing(X, y, mu, lam, depth_limit, rng,
                     sample_target: int = 2000,
                     nnz_cap: int = 100000) -> RestrictedPricing:
    """Shrink a pricing instance by independent row and feature sampling.

    Rows are kept with probability sample_target / n.  Features are then
    kept with a probability chosen so the kept rows' zero-entry count plus
    the feature count lands near nnz_cap.  Sampling that loses every
    positive is retried a few times, then all positives are forced in.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    n, d = X.shape
    pos = np.flatnonzero(y == 1)
    p = min(1.0, sample_target / max(n, 1))
    keep = None
    for _ in range(5):
        trial = rng.random(n) < p
        if trial[pos].any():
            keep = trial
            break
    if keep is None:
        keep = rng.random(n) < p
        keep[pos] = True
    rows = np.flatnonzero(keep)

    Xs = X[rows]
    zeros = Xs.size - int(Xs.sum())
    budget = max(nnz_cap - len(rows), 0)
    q = min(1.0, budget / max(zeros + d, 1))
    fkeep = rng.random(d) < q
    if not fkeep.any():
        fkeep[int(rng.integers(d))] = True
    feats = np.flatnonzero(fkeep)

    pos_kept = rows[y[rows] == 1]
    mu_sub = np.asarray(mu, dtype=float)[np.searchsorted(pos, pos_kept)]
    ctx = DualContext(X[np.ix_(rows, feats)], y[rows], mu_sub, lam,
                      depth_limit)
    return RestrictedPricing(ctx=ctx, rows=rows, features=feats)


def classify_regime(nnz: int, small_limit: int = 100000,
                    large_limit: int = 1000000) -> str:
    """Bucket an instance by its pricing size proxy."""
    if nnz < small_limit:
        return "small"
    if nnz > large_limit:
        return "large"
    return "medium"
