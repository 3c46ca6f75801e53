"""Bounded-variable revised simplex with dual values.

This is the solver behind the restricted master problems.  It is a two-phase
primal simplex over

    min c'x   s.t.  a_r'x {<=,>=} b_r,   l <= x <= u,

with every row given a slack internally.  The basis is kept as a sparse LU
factorization (scipy splu) plus a product-form eta file that is rebuilt every
few dozen pivots.  Entering variables are picked by largest dual infeasibility
(Dantzig); after 50 consecutive degenerate steps the rule switches to Bland's
smallest-index rule until a nondegenerate pivot happens, which guarantees
termination.  Duals are reported per row in the row's own sense: for a
minimization, a >= row gets a nonnegative dual and a <= row a nonpositive one.

Appending columns does not disturb the row space, so a caller that grows an
LP column by column can hand the previous basis back in and usually re-solve
in a handful of pivots.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
DUAL_TOL = 1e-7
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 64
# an eta built on a pivot this small is too unstable to keep around
ETA_GUARD = 1e-6


class _SingularBasis(Exception):
    """The current basis matrix cannot be factorized."""

BASIC, AT_LOWER, AT_UPPER = 0, 1, 2

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
TIME_LIMIT = "time-limit"


@dataclass
class Row:
    indices: np.ndarray
    coeffs: np.ndarray
    sense: str  # "<=" or ">="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"row sense must be <= or >=, got {self.sense!r}")
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)


@dataclass
class LinearProgram:
    """min objective'x subject to rows and variable bounds (inf allowed on
    one side of a bound, never both)."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rows: list

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        n = len(self.objective)
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("objective and bounds must have the same length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(np.isinf(self.lower) & np.isinf(self.upper)):
            raise ValueError("free variables are not supported")

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class LPSolution:
    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray      # per row, in the row's own sense
    slacks: np.ndarray     # b_r - a_r'x in the row's own sense
    basis: tuple | None    # (basis indices, statuses) over structurals+slacks
    iterations: int


def format_lp(lp: LinearProgram, names=None) -> str:
    """Line-oriented dump of an LP for debugging.  Not a stable format."""
    if names is None:
        names = [f"x{j}" for j in range(lp.n_vars)]
    def term(c, j):
        return f"{c:+g} {names[j]}"
    out = ["min " + " ".join(term(c, j) for j, c in enumerate(lp.objective) if c != 0.0)]
    for r, row in enumerate(lp.rows):
        body = " ".join(term(c, j) for j, c in zip(row.indices, row.coeffs))
        out.append(f"r{r}: {body} {row.sense} {row.rhs:g}")
    for j in range(lp.n_vars):
        out.append(f"{lp.lower[j]:g} <= {names[j]} <= {lp.upper[j]:g}")
    return "\n".join(out)


class _Factor:
    """splu factorization of the basis plus a product-form eta file."""

    def __init__(self, A: sp.csc_matrix):
        self.A = A
        self.lu = None
        self.etas = []

    def refresh(self, basis: np.ndarray):
        B = sp.csc_matrix(self.A[:, basis])
        self.lu = splu(B.sorted_indices(), permc_spec="COLAMD",
                       options={"SymmetricMode": False})
        self.etas = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for eta, r in self.etas:
            piv = v[r] / eta[r]
            v -= piv * eta
            v[r] = piv
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        v = np.array(c, dtype=np.float64)
        for eta, r in reversed(self.etas):
            t = np.dot(eta, v)
            v[r] = (v[r] - (t - eta[r] * v[r])) / eta[r]
        return self.lu.solve(v, trans="T")

    def push(self, eta: np.ndarray, r: int):
        self.etas.append((eta.copy(), r))

    @property
    def age(self) -> int:
        return len(self.etas)


class _Simplex:
    """One solve.  Internal form: all rows normalized to <= with a slack, so
    A_int is (m, n + m + artificials) and b may have either sign."""

    def __init__(self, lp: LinearProgram, max_iter=None, deadline=None):
        self.lp = lp
        self.deadline = deadline
        n, m = lp.n_vars, lp.n_rows
        self.n, self.m = n, m
        self.sign = np.array([1.0 if r.sense == "<=" else -1.0 for r in lp.rows])
        self.b = self.sign * np.array([r.rhs for r in lp.rows], dtype=np.float64)

        data, rows_ix, cols_ix = [], [], []
        for r, row in enumerate(lp.rows):
            data.extend(self.sign[r] * row.coeffs)
            rows_ix.extend([r] * len(row.indices))
            cols_ix.extend(row.indices)
        for r in range(m):
            data.append(1.0)
            rows_ix.append(r)
            cols_ix.append(n + r)
        self.A = sp.csc_matrix(
            (data, (rows_ix, cols_ix)), shape=(m, n + m), dtype=np.float64)

        self.lower = np.concatenate([lp.lower, np.zeros(m)])
        self.upper = np.concatenate([lp.upper, np.full(m, np.inf)])
        self.cost = np.concatenate([lp.objective, np.zeros(m)])
        self.n_art = 0
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 10_000
        self.iterations = 0

    # ----- setup paths -------------------------------------------------

    def _nonbasic_values(self, vstat):
        x = np.where(vstat == AT_UPPER, self.upper, self.lower)
        bad = np.isinf(x) & (vstat != BASIC)
        if bad.any():
            raise ValueError("nonbasic variable rests on an infinite bound")
        x[np.isinf(x)] = 0.0
        return x

    def _start_cold(self):
        nm = self.n + self.m
        vstat = np.full(nm, AT_LOWER, dtype=np.int8)
        vstat[np.isinf(self.lower)] = AT_UPPER
        x = self._nonbasic_values(vstat)
        resid = self.b - self.A @ x
        need_art = np.flatnonzero(resid < -FEAS_TOL)
        basis = np.arange(self.n, nm, dtype=np.int64)
        if len(need_art):
            art_cols = sp.csc_matrix(
                (-np.ones(len(need_art)), (need_art, np.arange(len(need_art)))),
                shape=(self.m, len(need_art)))
            self.A = sp.hstack([self.A, art_cols], format="csc")
            self.lower = np.concatenate([self.lower, np.zeros(len(need_art))])
            self.upper = np.concatenate([self.upper, np.full(len(need_art), np.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(len(need_art))])
            self.n_art = len(need_art)
            vstat = np.concatenate([vstat, np.full(len(need_art), AT_LOWER, dtype=np.int8)])
            basis = basis.copy()
            for k, r in enumerate(need_art):
                basis[r] = nm + k
            x = np.concatenate([x, np.zeros(len(need_art))])
        vstat[basis] = BASIC
        x[basis] = 0.0
        self.basis, self.vstat, self.x = basis, vstat, x
        self.factor = _Factor(self.A)
        self._refactor()
        return len(need_art) > 0

    def _try_warm(self, start) -> bool:
        basis, vstat = start
        basis = np.asarray(basis, dtype=np.int64)
        vstat = np.asarray(vstat, dtype=np.int8).copy()
        nm = self.n + self.m
        if len(basis) != self.m or len(vstat) != nm:
            return False
        if basis.min(initial=0) < 0 or basis.max(initial=-1) >= nm:
            return False
        vstat[basis] = BASIC
        self.factor = _Factor(self.A)
        try:
            x = self._nonbasic_values(vstat)
        except ValueError:
            return False
        x[basis] = 0.0
        try:
            self.factor.refresh(basis)
        except RuntimeError:
            return False
        xb = self.factor.ftran(self.b - self.A @ x)
        if not np.all(np.isfinite(xb)):
            return False
        lo, hi = self.lower[basis], self.upper[basis]
        if np.any(xb < lo - 10 * FEAS_TOL) or np.any(xb > hi + 10 * FEAS_TOL):
            return False
        x[basis] = xb
        self.basis, self.vstat, self.x = basis, vstat, x
        return True

    def _refactor(self):
        try:
            self.factor.refresh(self.basis)
        except RuntimeError as exc:
            # accumulated eta error picked a dependent column somewhere;
            # the driver retries the whole solve from a clean slack basis
            raise _SingularBasis(str(exc)) from exc
        xnb = self.x.copy()
        xnb[self.basis] = 0.0
        self.x[self.basis] = self.factor.ftran(self.b - self.A @ xnb)

    # ----- the pivot loop ----------------------------------------------

    def _iterate(self, cost) -> str:
        m = self.m
        degen_streak = 0
        movable = self.lower < self.upper
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT
            if (self.deadline is not None and self.iterations & 127 == 0
                    and time.perf_counter() > self.deadline):
                return TIME_LIMIT
            y = self.factor.btran(cost[self.basis])
            d = cost - self.A.T @ y
            bland = degen_streak >= DEGENERATE_STREAK

            viol_lo = (self.vstat == AT_LOWER) & movable & (d < -DUAL_TOL)
            viol_up = (self.vstat == AT_UPPER) & movable & (d > DUAL_TOL)
            viol = viol_lo | viol_up
            if not viol.any():
                return OPTIMAL
            cand = np.flatnonzero(viol)
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            sigma = 1.0 if self.vstat[q] == AT_LOWER else -1.0

            w = self.factor.ftran(self.A[:, [q]].toarray().ravel())
            denom = sigma * w
            xb = self.x[self.basis]
            lim = np.full(m, np.inf)
            dec = denom > PIVOT_TOL
            if dec.any():
                lim[dec] = (xb[dec] - self.lower[self.basis[dec]]) / denom[dec]
            inc = denom < -PIVOT_TOL
            if inc.any():
                ub = self.upper[self.basis[inc]]
                with np.errstate(invalid="ignore"):
                    lim[inc] = np.where(np.isfinite(ub), (xb[inc] - ub) / denom[inc], np.inf)
            np.maximum(lim, 0.0, out=lim)

            t_rows = lim.min() if m else np.inf
            t_flip = self.upper[q] - self.lower[q]
            if not np.isfinite(min(t_rows, t_flip)):
                return UNBOUNDED

            self.iterations += 1
            if t_flip <= t_rows:
                self.x[q] += sigma * t_flip
                self.x[self.basis] = xb - sigma * t_flip * w
                self.vstat[q] = AT_UPPER if self.vstat[q] == AT_LOWER else AT_LOWER
                step = t_flip
            else:
                tie = np.flatnonzero(lim <= t_rows + 1e-9)
                if bland:
                    p = int(tie[np.argmin(self.basis[tie])])
                else:
                    # among tied ratios take the sturdiest pivot
                    p = int(tie[np.argmax(np.abs(denom[tie]))])
                step = lim[p]
                leaving = int(self.basis[p])
                self.x[q] += sigma * step
                self.x[self.basis] = xb - sigma * step * w
                to_upper = denom[p] < 0
                self.x[leaving] = self.upper[leaving] if to_upper else self.lower[leaving]
                self.vstat[leaving] = AT_UPPER if to_upper else AT_LOWER
                self.vstat[q] = BASIC
                self.basis[p] = q
                self.factor.push(w, p)
                if self.factor.age >= REFACTOR_EVERY or abs(w[p]) < ETA_GUARD:
                    self._refactor()
            degen_streak = degen_streak + 1 if step <= 1e-9 else 0

    # ----- driver -------------------------------------------------------

    def solve(self, start=None) -> LPSolution:
        if self.m == 0:
            c = self.lp.objective
            x = np.where(c > 0, self.lp.lower,
                         np.where(c < 0, self.lp.upper,
                                  np.where(np.isfinite(self.lp.lower),
                                           self.lp.lower, self.lp.upper)))
            if np.any(np.isinf(x)):
                return LPSolution(UNBOUNDED, -np.inf, np.where(np.isfinite(x), x, 0.0),
                                  np.zeros(0), np.zeros(0), None, 0)
            self.x = x.copy()
            self.basis = np.zeros(0, dtype=np.int64)
            self.vstat = np.where(x <= self.lp.lower, AT_LOWER, AT_UPPER).astype(np.int8)
            return self._result(OPTIMAL)

        warmed = start is not None and self._try_warm(start)
        if not warmed:
            had_art = self._start_cold()
            if had_art:
                cost1 = np.zeros(len(self.cost))
                cost1[self.n + self.m:] = 1.0
                status = self._iterate(cost1)
                if status != OPTIMAL:
                    return self._result(status)
                infeas = float(cost1 @ self.x)
                if infeas > FEAS_TOL * (1.0 + np.abs(self.b).sum()):
                    return self._result(INFEASIBLE)
                # pin artificials at zero and price with the real objective
                self.upper[self.n + self.m:] = 0.0
                self.x[self.n + self.m:] = np.minimum(self.x[self.n + self.m:], 0.0)

        status = self._iterate(self.cost)
        return self._result(status)

    def _result(self, status) -> LPSolution:
        n, m = self.n, self.m
        x = self.x
        snap = np.abs(x - self.lower) <= 1e-9
        x[snap] = self.lower[snap]
        snap = np.isfinite(self.upper) & (np.abs(x - self.upper) <= 1e-9)
        x[snap] = self.upper[snap]
        x_struct = x[:n].copy()
        if status == OPTIMAL and m > 0:
            y = self.factor.btran(self.cost[self.basis])
            duals = self.sign * y
        else:
            duals = np.zeros(m)
        # the internal slack value is already the surplus in the row's own
        # sense: rhs - activity for <= rows, activity - rhs for >= rows
        slacks = self.b - self.A[:, :n] @ x_struct
        basis_out = None
        if status == OPTIMAL and m > 0 and not np.any(self.basis >= n + m):
            basis_out = (self.basis.copy(), self.vstat[:n + m].copy())
        return LPSolution(
            status=status,
            objective=float(self.lp.objective @ x_struct),
            x=x_struct,
            duals=duals,
            slacks=slacks,
            basis=basis_out,
            iterations=self.iterations,
        )


def solve_lp(lp: LinearProgram, start=None, max_iter=None, deadline=None) -> LPSolution:
    """Solve an LP.  `start` is a (basis, statuses) pair from a previous
    solution of a compatible LP (same rows, possibly more columns); if it is
    unusable the solver silently falls back to a cold start.

    `deadline` is an absolute time.perf_counter() value; a solve still
    running past it stops with status "time-limit".

    A basis that turns out numerically singular mid-run triggers one full
    restart from the slack basis; a second failure is surfaced as an error.
    """
    try:
        return _Simplex(lp, max_iter=max_iter, deadline=deadline).solve(start)
    except _SingularBasis:
        pass
    try:
        return _Simplex(lp, max_iter=max_iter, deadline=deadline).solve(None)
    except _SingularBasis as exc:
        raise RuntimeError(
            "LP basis factorization failed twice; the instance is too "
            "ill-conditioned for this solver") from exc


def verify_solution(lp: LinearProgram, sol: LPSolution) -> dict:
    """Max violations of primal/dual feasibility and complementary slackness.

    Returns a dict of nonnegative floats; every entry should be below 1e-7
    for a correct optimal solution of a well-scaled LP.
    """
    x, duals = sol.x, sol.duals
    out = {
        "bound_low": float(np.max(lp.lower - x, initial=0.0)),
        "bound_high": float(np.max(x - lp.upper, initial=0.0)),
    }
    row_viol = dual_sign = cs_row = 0.0
    y_user = np.zeros(lp.n_rows)
    for r, row in enumerate(lp.rows):
        act = float(row.coeffs @ x[row.indices])
        slack = row.rhs - act if row.sense == "<=" else act - row.rhs
        row_viol = max(row_viol, -slack)
        y = duals[r]
        y_user[r] = y
        sign_ok = y <= 0 if row.sense == "<=" else y >= 0
        if not sign_ok:
            dual_sign = max(dual_sign, abs(y))
        cs_row = max(cs_row, abs(y * slack))
    rc = lp.objective.copy()
    for r, row in enumerate(lp.rows):
        rc[row.indices] -= y_user[r] * row.coeffs
    stat = cs_var = 0.0
    for j in range(lp.n_vars):
        at_lo = x[j] <= lp.lower[j] + 1e-7
        at_hi = np.isfinite(lp.upper[j]) and x[j] >= lp.upper[j] - 1e-7
        if at_lo and rc[j] < 0 and not at_hi:
            cs_var = max(cs_var, -rc[j])
        elif at_hi and rc[j] > 0 and not at_lo:
            cs_var = max(cs_var, rc[j])
        elif not at_lo and not at_hi:
            stat = max(stat, abs(rc[j]))
    out.update({"row": row_viol, "dual_sign": dual_sign, "cs_row": cs_row,
                "cs_var": cs_var, "stationarity": stat})
    return out


# ----- restricted master construction ------------------------------------


@dataclass
class MasterSolution:
    """Solved restricted master LP: min sum(xi) + sum(negcov_k w_k) subject
    to cover rows xi_i + sum_{k covers i} w_k >= 1 and the complexity budget.

    mu holds the cover-row duals aligned with the dataset's positive samples;
    lam is the budget dual stored as a nonnegative magnitude."""

    status: str
    objective: float
    xi: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    lam: float
    iterations: int
    basis: tuple | None


def build_restricted_mlp(pos_cover: np.ndarray, neg_counts: np.ndarray,
                         complexities: np.ndarray, budget: float,
                         w_lower=None, w_upper=None) -> LinearProgram:
    """Assemble the restricted master LP.

    pos_cover is an (n_pos, K) 0/1 matrix (clause k covers positive i),
    neg_counts the per-clause count of covered negatives, complexities the
    per-clause cost against `budget`.  Optional w bounds let a
    branch-and-bound caller fix individual clauses.  Variable order is the
    n_pos xi slack variables first, then the K clause variables.
    """
    pos_cover = np.asarray(pos_cover)
    if pos_cover.ndim != 2:
        raise ValueError("pos_cover must be a 2-d (n_pos, K) matrix")
    n_pos, K = pos_cover.shape
    objective = np.concatenate([np.ones(n_pos), np.asarray(neg_counts, dtype=float)])
    lower = np.zeros(n_pos + K)
    upper = np.ones(n_pos + K)
    if w_lower is not None:
        lower[n_pos:] = w_lower
    if w_upper is not None:
        upper[n_pos:] = w_upper
    rows = []
    for i in range(n_pos):
        covering = np.flatnonzero(pos_cover[i]) if K else np.zeros(0, dtype=np.int64)
        idx = np.concatenate([[i], n_pos + covering])
        rows.append(Row(idx, np.ones(len(idx)), ">=", 1.0))
    rows.append(Row(np.arange(n_pos, n_pos + K),
                    np.asarray(complexities, dtype=float), "<=", float(budget)))
    return LinearProgram(objective, lower, upper, rows)


def master_start_basis(n_pos: int, n_w: int):
    """The analytic feasible basis for any restricted master: every xi basic
    at 1 covering its row, the budget slack basic, everything else at its
    lower bound.  Lets every master solve skip phase 1."""
    m = n_pos + 1
    n = n_pos + n_w
    basis = np.concatenate([np.arange(n_pos), [n + n_pos]]).astype(np.int64)
    vstat = np.full(n + m, AT_LOWER, dtype=np.int8)
    vstat[basis] = BASIC
    return basis, vstat


def solve_restricted_mlp(pos_cover, neg_counts, complexities, budget,
                         start=None, w_lower=None, w_upper=None,
                         max_iter=None, deadline=None) -> MasterSolution:
    """Build and solve the restricted master, extracting (mu, lam) duals."""
    lp = build_restricted_mlp(pos_cover, neg_counts, complexities, budget,
                              w_lower=w_lower, w_upper=w_upper)
    n_pos = pos_cover.shape[0]
    if start is None:
        start = master_start_basis(n_pos, len(neg_counts))
    sol = solve_lp(lp, start=start, max_iter=max_iter, deadline=deadline)
    mu = np.maximum(sol.duals[:n_pos], 0.0) if sol.status == OPTIMAL else np.zeros(n_pos)
    lam = max(0.0, -float(sol.duals[n_pos])) if sol.status == OPTIMAL else 0.0
    return MasterSolution(
        status=sol.status,
        objective=sol.objective,
        xi=sol.x[:n_pos].copy(),
        w=sol.x[n_pos:].copy(),
        mu=mu,
        lam=lam,
        iterations=sol.iterations,
        basis=sol.basis,
    )
