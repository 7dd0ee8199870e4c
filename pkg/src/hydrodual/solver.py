"""Self-contained LP machinery: bounded-variable revised simplex (primal and
dual variants), a brute-force vertex/grid oracle for tiny instances, and a
plain-text interchange format.

Conventions used throughout:

* ``LpProblem`` rows are ``a.x {<=,=,>=} rhs``; columns carry box bounds
  ``lb <= x <= ub`` (``ub`` may be ``+inf``, ``lb`` may be ``-inf``).
* ``row_prices[r]`` is the sensitivity d(objective)/d(rhs_r) in the problem's
  own sense (so a binding ``<=`` row of a max problem has price >= 0).
* ``reduced_costs[j] = obj[j] - sum_r row_prices[r] * a[r, j]``, again in the
  problem's own sense.

The solver is deliberately dense: instances produced by this package are a few
hundred rows/columns at most, and robustness beats speed here.  The basis
inverse is maintained explicitly with eta updates and refreshed from scratch
every ``refresh_every`` pivots.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LpProblem",
    "LpSolution",
    "SolveOptions",
    "SolverError",
    "solve",
    "solve_dual_simplex",
    "brute_force",
    "write_lp_text",
    "read_lp_text",
]

LE, EQ, GE = "<=", "=", ">="
_KINDS = (LE, EQ, GE)


class SolverError(ValueError):
    """Malformed problem data (dimension or kind errors)."""


@dataclass(frozen=True)
class LpProblem:
    """Sparse standard-form LP with variable bounds.

    ``row_cols[r]`` / ``row_vals[r]`` hold the nonzero pattern of row ``r``.
    ``obj_const`` is reported with every objective value but never optimized
    over.
    """

    sense: str  # "min" | "max"
    ncols: int
    obj: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_cols: list[np.ndarray]
    row_vals: list[np.ndarray]
    row_kinds: list[str]
    rhs: np.ndarray
    obj_const: float = 0.0
    name: str = "lp"
    col_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise SolverError(f"bad sense {self.sense!r}")
        nr = len(self.row_cols)
        if not (len(self.row_vals) == len(self.row_kinds) == len(self.rhs) == nr):
            raise SolverError("inconsistent row data lengths")
        if not (len(self.obj) == len(self.lb) == len(self.ub) == self.ncols):
            raise SolverError("inconsistent column data lengths")
        for k in self.row_kinds:
            if k not in _KINDS:
                raise SolverError(f"bad row kind {k!r}")
        for cols, vals in zip(self.row_cols, self.row_vals):
            if len(cols) != len(vals):
                raise SolverError("row pattern/value length mismatch")
            if len(cols) and (cols.min() < 0 or cols.max() >= self.ncols):
                raise SolverError("row refers to column out of range")
        if not np.all(np.isfinite(self.rhs)):
            raise SolverError("non-finite rhs")
        if not np.all(np.isfinite(self.obj)):
            raise SolverError("non-finite objective")
        if np.any(np.isposinf(self.lb)) or np.any(np.isneginf(self.ub)):
            raise SolverError("infinite bound with wrong sign")
        if not self.col_names:
            object.__setattr__(self, "col_names", [f"x{j}" for j in range(self.ncols)])
        if not self.row_names:
            object.__setattr__(self, "row_names", [f"r{r}" for r in range(nr)])

    @property
    def nrows(self) -> int:
        return len(self.row_cols)

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.nrows, self.ncols))
        for r, (cols, vals) in enumerate(zip(self.row_cols, self.row_vals)):
            a[r, cols] = vals
        return a

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        act = np.empty(self.nrows)
        for r, (cols, vals) in enumerate(zip(self.row_cols, self.row_vals)):
            act[r] = float(vals @ x[cols]) if len(cols) else 0.0
        return act


def make_problem(sense, obj, lb, ub, rows, kinds, rhs, obj_const=0.0,
                 name="lp", col_names=None, row_names=None) -> LpProblem:
    """Convenience constructor; ``rows`` is a list of {col: coef} dicts."""
    obj = np.asarray(obj, dtype=float)
    n = len(obj)
    row_cols, row_vals = [], []
    for row in rows:
        items = sorted((int(c), float(v)) for c, v in row.items() if v != 0.0)
        row_cols.append(np.array([c for c, _ in items], dtype=int))
        row_vals.append(np.array([v for _, v in items], dtype=float))
    return LpProblem(
        sense=sense, ncols=n, obj=obj,
        lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float),
        row_cols=row_cols, row_vals=row_vals, row_kinds=list(kinds),
        rhs=np.asarray(rhs, dtype=float), obj_const=float(obj_const),
        name=name, col_names=list(col_names or []), row_names=list(row_names or []),
    )


@dataclass(frozen=True)
class LpSolution:
    status: str  # Optimal | Infeasible | Unbounded | IterationLimit
    x: np.ndarray
    objective: float
    row_prices: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    method: str = "primal"
    degenerate: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-11
    bland_after: int = 50       # consecutive degenerate pivots
    refresh_every: int = 100    # basis reinversion cadence
    iter_factor: int = 10_000   # limit = iter_factor * (rows + cols)


# ---------------------------------------------------------------------------
# internal standard form:  min c.x,  A x = b,  l <= x <= u  (slacks appended)
# ---------------------------------------------------------------------------

_AT_LOWER, _AT_UPPER, _BASIC, _FREE = 0, 1, 2, 3


class _Tableau:
    """Mutable working state shared by the primal and dual iterations."""

    def __init__(self, prob: LpProblem, opts: SolveOptions):
        self.opts = opts
        self.sense_sign = 1.0 if prob.sense == "min" else -1.0
        m, n = prob.nrows, prob.ncols
        self.m, self.nstruct = m, n
        a = np.zeros((m, n + m))
        a[:, :n] = prob.dense_matrix()
        lb = np.concatenate([prob.lb, np.zeros(m)])
        ub = np.concatenate([prob.ub, np.zeros(m)])
        for r, kind in enumerate(prob.row_kinds):
            a[r, n + r] = 1.0
            if kind == LE:
                lb[n + r], ub[n + r] = 0.0, np.inf
            elif kind == GE:
                lb[n + r], ub[n + r] = -np.inf, 0.0
            else:
                lb[n + r], ub[n + r] = 0.0, 0.0
        self.a = a
        self.b = prob.rhs.astype(float).copy()
        self.c = np.concatenate([self.sense_sign * prob.obj, np.zeros(m)])
        self.lb, self.ub = lb, ub
        self.ntot = n + m
        self.basis = np.arange(n, n + m)
        self.status = np.empty(self.ntot, dtype=int)
        for j in range(self.ntot):
            if np.isfinite(lb[j]):
                self.status[j] = _AT_LOWER
            elif np.isfinite(ub[j]):
                self.status[j] = _AT_UPPER
            else:
                self.status[j] = _FREE
        self.status[self.basis] = _BASIC
        self.binv = np.eye(m)
        self.pivots_since_refresh = 0
        self.iterations = 0
        # Columns whose infinite bound was replaced by an artificial one so a
        # dual-feasible start exists (dual simplex only).
        self.art_bound_cols: set[int] = set()
        self.art_bound = 0.0

    # -- basic quantities ---------------------------------------------------

    def nonbasic_value(self, j: int) -> float:
        s = self.status[j]
        if s == _AT_LOWER:
            return self.lb[j]
        if s == _AT_UPPER:
            return self.ub[j]
        return 0.0  # free at zero

    def x_full(self) -> np.ndarray:
        x = np.empty(self.ntot)
        for j in range(self.ntot):
            if self.status[j] != _BASIC:
                x[j] = self.nonbasic_value(j)
        xn_contrib = np.zeros(self.m)
        nb = np.flatnonzero(self.status != _BASIC)
        if len(nb):
            xn_contrib = self.a[:, nb] @ x[nb]
        x[self.basis] = self.binv @ (self.b - xn_contrib)
        return x

    def prices(self) -> np.ndarray:
        return self.c[self.basis] @ self.binv

    def reduced(self, pi: np.ndarray) -> np.ndarray:
        return self.c - pi @ self.a

    def refresh(self):
        bmat = self.a[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by pivot_tol
            raise SolverError("singular basis during refresh") from exc
        self.pivots_since_refresh = 0

    def pivot(self, entering: int, leaving_pos: int, w: np.ndarray):
        """Replace basis column at position ``leaving_pos`` by ``entering``.

        ``w = binv @ a[:, entering]`` must already be available.
        """
        r = leaving_pos
        piv = w[r]
        if abs(piv) <= self.opts.pivot_tol:
            raise SolverError("zero pivot")
        self.binv[r] /= piv
        others = np.arange(self.m) != r
        self.binv[others] -= np.outer(w[others], self.binv[r])
        self.basis[r] = entering
        self.pivots_since_refresh += 1
        if self.pivots_since_refresh >= self.opts.refresh_every:
            self.refresh()


def _primal_iterate(t: _Tableau, limit: int) -> str:
    """Run primal simplex to optimality given a primal-feasible basis."""
    opts = t.opts
    degen_run = 0
    while True:
        if t.iterations >= limit:
            return "IterationLimit"
        pi = t.prices()
        d = t.reduced(pi)
        nb = np.flatnonzero(t.status != _BASIC)
        cand = []
        for j in nb:
            if t.lb[j] == t.ub[j]:
                continue  # fixed column never enters
            s = t.status[j]
            if s == _AT_LOWER and d[j] < -opts.opt_tol:
                cand.append((j, 1.0))
            elif s == _AT_UPPER and d[j] > opts.opt_tol:
                cand.append((j, -1.0))
            elif s == _FREE and abs(d[j]) > opts.opt_tol:
                cand.append((j, 1.0 if d[j] < 0 else -1.0))
        if not cand:
            return "Optimal"
        if degen_run >= opts.bland_after:
            q, sig = cand[0]  # smallest index: candidates are index-sorted
        else:
            q, sig = max(cand, key=lambda it: (abs(d[it[0]]), -it[0]))
        w = t.binv @ t.a[:, q]
        x = t.x_full()
        # ratio test: x_q moves by sig * step, basics move by -sig * step * w
        step = np.inf
        leave_pos, leave_to = -1, _AT_LOWER
        for i in range(t.m):
            jb = t.basis[i]
            delta = -sig * w[i]
            if delta < -opts.pivot_tol:  # basic decreases toward lb
                if np.isfinite(t.lb[jb]):
                    ti = (x[jb] - t.lb[jb]) / (-delta)
                    if ti < step - 1e-12 or (ti < step + 1e-12 and (leave_pos == -1 or t.basis[i] < t.basis[leave_pos])):
                        step, leave_pos, leave_to = max(ti, 0.0), i, _AT_LOWER
            elif delta > opts.pivot_tol:  # basic increases toward ub
                if np.isfinite(t.ub[jb]):
                    ti = (t.ub[jb] - x[jb]) / delta
                    if ti < step - 1e-12 or (ti < step + 1e-12 and (leave_pos == -1 or t.basis[i] < t.basis[leave_pos])):
                        step, leave_pos, leave_to = max(ti, 0.0), i, _AT_UPPER
        flip = np.inf
        if np.isfinite(t.lb[q]) and np.isfinite(t.ub[q]):
            flip = t.ub[q] - t.lb[q]
        t.iterations += 1
        if flip <= step:
            if not np.isfinite(flip):
                return "Unbounded"
            t.status[q] = _AT_UPPER if t.status[q] == _AT_LOWER else _AT_LOWER
            degen_run = degen_run + 1 if flip <= opts.feas_tol else 0
            continue
        if not np.isfinite(step):
            return "Unbounded"
        jb_out = t.basis[leave_pos]
        t.pivot(q, leave_pos, w)
        t.status[q] = _BASIC
        t.status[jb_out] = leave_to
        degen_run = degen_run + 1 if step <= opts.feas_tol else 0


def _dual_iterate(t: _Tableau, limit: int) -> str:
    """Run dual simplex given a dual-feasible basis; restores primal
    feasibility, which yields optimality."""
    opts = t.opts
    degen_run = 0
    while True:
        if t.iterations >= limit:
            return "IterationLimit"
        x = t.x_full()
        viol = np.zeros(t.m)
        for i in range(t.m):
            jb = t.basis[i]
            if x[jb] < t.lb[jb] - opts.feas_tol:
                viol[i] = t.lb[jb] - x[jb]
            elif x[jb] > t.ub[jb] + opts.feas_tol:
                viol[i] = -(x[jb] - t.ub[jb])
        if not np.any(viol):
            return "Optimal"
        if degen_run >= opts.bland_after:
            r = int(np.flatnonzero(viol)[0])
        else:
            r = int(np.argmax(np.abs(viol)))
        below = viol[r] > 0  # basic below its lower bound
        jb_out = t.basis[r]
        pi = t.prices()
        d = t.reduced(pi)
        alpha = t.binv[r] @ t.a
        # leaving variable moves up to lb (below) or down to ub (above);
        # entering must keep every nonbasic reduced cost sign-correct.
        best, q = np.inf, -1
        for j in np.flatnonzero(t.status != _BASIC):
            if t.lb[j] == t.ub[j]:
                continue
            arj = alpha[j] if below else -alpha[j]
            s = t.status[j]
            ok = (s == _AT_LOWER and arj < -opts.pivot_tol) or \
                 (s == _AT_UPPER and arj > opts.pivot_tol) or \
                 (s == _FREE and abs(arj) > opts.pivot_tol)
            if not ok:
                continue
            ratio = abs(d[j]) / abs(arj)
            if ratio < best - 1e-12 or (ratio < best + 1e-12 and (q == -1 or j < q)):
                best, q = ratio, j
        if q == -1:
            return "Infeasible"  # dual ray: primal has no feasible point
        w = t.binv @ t.a[:, q]
        t.iterations += 1
        t.pivot(q, r, w)
        t.status[q] = _BASIC
        t.status[jb_out] = _AT_LOWER if below else _AT_UPPER
        degen_run = degen_run + 1 if best <= opts.opt_tol else 0


# ---------------------------------------------------------------------------
# presolve: empty rows, empty columns, fixed columns
# ---------------------------------------------------------------------------

def _presolve(prob: LpProblem):
    """Returns (kept_rows, empty_row_status) after dropping structurally empty
    rows; infeasible empty rows short-circuit."""
    keep, bad = [], None
    for r in range(prob.nrows):
        if len(prob.row_cols[r]) == 0:
            rhs, kind = prob.rhs[r], prob.row_kinds[r]
            if (kind == LE and rhs < -1e-9) or (kind == GE and rhs > 1e-9) \
                    or (kind == EQ and abs(rhs) > 1e-9):
                bad = r
            continue
        keep.append(r)
    return keep, bad


def _finish(prob: LpProblem, t: _Tableau, status: str, keep_rows, method: str,
            opts: SolveOptions) -> LpSolution:
    n = prob.ncols
    if status != "Optimal":
        return LpSolution(status, np.full(n, np.nan), np.nan,
                          np.full(prob.nrows, np.nan), np.full(n, np.nan),
                          t.iterations, method)
    t.refresh()
    x = t.x_full()
    pi = t.prices()
    d = t.reduced(pi)
    # map back to the user's sense and original row set
    sgn = t.sense_sign
    prices = np.zeros(prob.nrows)
    for pos, r in enumerate(keep_rows):
        prices[r] = sgn * pi[pos] if sgn < 0 else pi[pos]
    xs = x[:n].copy()
    np.clip(xs, prob.lb, prob.ub, out=xs)
    red = (sgn * d[:n]) if sgn < 0 else d[:n].copy()
    obj = float(prob.obj @ xs + prob.obj_const)
    # a wrong Optimal is worse than an honest failure: verify residuals
    act = prob.row_activity(xs)
    ftol = max(opts.feas_tol * 100, opts.feas_tol * (1 + float(np.abs(prob.rhs).max(initial=0.0))))
    for r in range(prob.nrows):
        res = act[r] - prob.rhs[r]
        bad = (prob.row_kinds[r] == LE and res > ftol) or \
              (prob.row_kinds[r] == GE and res < -ftol) or \
              (prob.row_kinds[r] == EQ and abs(res) > ftol)
        if bad:
            return LpSolution("IterationLimit", np.full(n, np.nan), np.nan,
                              np.full(prob.nrows, np.nan), np.full(n, np.nan),
                              t.iterations, method)
    nb_struct = [j for j in range(min(n, t.ntot)) if t.status[j] != _BASIC]
    degen = any(abs(d[j]) <= 1e-9 for j in nb_struct)
    return LpSolution("Optimal", xs, obj, prices, red, t.iterations, method, degen)


def _reduced_problem(prob: LpProblem, keep_rows) -> LpProblem:
    if len(keep_rows) == prob.nrows:
        return prob
    return LpProblem(
        sense=prob.sense, ncols=prob.ncols, obj=prob.obj, lb=prob.lb, ub=prob.ub,
        row_cols=[prob.row_cols[r] for r in keep_rows],
        row_vals=[prob.row_vals[r] for r in keep_rows],
        row_kinds=[prob.row_kinds[r] for r in keep_rows],
        rhs=prob.rhs[keep_rows], obj_const=prob.obj_const, name=prob.name,
        col_names=prob.col_names,
        row_names=[prob.row_names[r] for r in keep_rows],
    )


def solve(prob: LpProblem, options: SolveOptions | None = None) -> LpSolution:
    """Two-phase bounded-variable primal simplex."""
    opts = options or SolveOptions()
    keep_rows, bad = _presolve(prob)
    if bad is not None:
        return LpSolution("Infeasible", np.full(prob.ncols, np.nan), np.nan,
                          np.full(prob.nrows, np.nan),
                          np.full(prob.ncols, np.nan), 0, "primal")
    red = _reduced_problem(prob, np.asarray(keep_rows, dtype=int))
    t = _Tableau(red, opts)
    limit = opts.iter_factor * (t.m + t.ntot)

    # quick check: is the all-slack start already feasible?
    x = t.x_full()
    feas = np.all(x[t.basis] >= t.lb[t.basis] - opts.feas_tol) and \
        np.all(x[t.basis] <= t.ub[t.basis] + opts.feas_tol)
    if not feas:
        status = _phase_one(t, limit)
        if status != "Optimal":
            if status == "Infeasible":
                return LpSolution("Infeasible", np.full(prob.ncols, np.nan), np.nan,
                                  np.full(prob.nrows, np.nan),
                                  np.full(prob.ncols, np.nan), t.iterations, "primal")
            return _finish(prob, t, status, keep_rows, "primal", opts)
    status = _primal_iterate(t, limit)
    return _finish(prob, t, status, keep_rows, "primal", opts)


def _phase_one(t: _Tableau, limit: int) -> str:
    """Minimize total infeasibility with signed artificial columns."""
    m = t.m
    # park every current basic (the slacks) at a finite bound; the signed
    # artificials then absorb whatever residual remains
    for i in range(m):
        jb = t.basis[i]
        if np.isfinite(t.lb[jb]):
            t.status[jb] = _AT_LOWER
        elif np.isfinite(t.ub[jb]):
            t.status[jb] = _AT_UPPER
        else:
            t.status[jb] = _FREE
    xn = np.array([t.nonbasic_value(j) for j in range(t.ntot)])
    resid = t.b - t.a @ xn
    arts = np.arange(t.ntot, t.ntot + m)
    acols = np.zeros((m, m))
    for i in range(m):
        acols[i, i] = 1.0 if resid[i] >= 0 else -1.0
    t.a = np.hstack([t.a, acols])
    t.lb = np.concatenate([t.lb, np.zeros(m)])
    t.ub = np.concatenate([t.ub, np.full(m, np.inf)])
    real_c = t.c
    t.c = np.concatenate([np.zeros(t.ntot), np.ones(m)])
    t.status = np.concatenate([t.status, np.full(m, _BASIC)])
    t.ntot += m
    t.basis = arts.copy()
    t.binv = np.linalg.inv(t.a[:, t.basis])
    status = _primal_iterate(t, limit)
    if status != "Optimal":
        return status
    x = t.x_full()
    if float(x[arts].sum()) > 1e-7:
        return "Infeasible"
    # lock artificials at zero and restore the true objective
    t.lb[arts] = 0.0
    t.ub[arts] = 0.0
    for i in range(t.m):
        if t.basis[i] >= arts[0]:
            # swap any usable column into this (degenerate) row; if none
            # exists the row is redundant and its artificial stays, fixed at 0
            row = t.binv[i] @ t.a[:, :arts[0]]
            usable = [j for j in np.flatnonzero(np.abs(row) > 1e-7)
                      if t.status[j] != _BASIC]
            if usable:
                q = int(usable[0])
                w = t.binv @ t.a[:, q]
                old = t.basis[i]
                t.pivot(q, i, w)
                t.status[q] = _BASIC
                t.status[old] = _AT_LOWER
    t.c = np.concatenate([real_c, np.zeros(m)])
    return "Optimal"


def solve_dual_simplex(prob: LpProblem, options: SolveOptions | None = None) -> LpSolution:
    """Bounded-variable dual simplex from the all-slack basis.

    Columns whose cost sign demands a missing finite bound get an artificial
    bound that is enlarged until it is slack; if it keeps growing the problem
    is unbounded.
    """
    opts = options or SolveOptions()
    keep_rows, bad = _presolve(prob)
    if bad is not None:
        return LpSolution("Infeasible", np.full(prob.ncols, np.nan), np.nan,
                          np.full(prob.nrows, np.nan),
                          np.full(prob.ncols, np.nan), 0, "dual")
    red = _reduced_problem(prob, np.asarray(keep_rows, dtype=int))
    t = _Tableau(red, opts)
    limit = opts.iter_factor * (t.m + t.ntot)
    scale = max(1.0, float(np.abs(red.rhs).max(initial=0.0)),
                float(np.abs(red.lb[np.isfinite(red.lb)]).max(initial=0.0)),
                float(np.abs(red.ub[np.isfinite(red.ub)]).max(initial=0.0)))
    t.art_bound = 1e7 * scale
    # dual-feasible start: park every nonbasic on the side its cost prefers
    for j in range(t.ntot):
        if t.status[j] == _BASIC or t.lb[j] == t.ub[j]:
            continue
        want_lower = t.c[j] >= 0
        if want_lower:
            if np.isfinite(t.lb[j]):
                t.status[j] = _AT_LOWER
            else:
                t.lb[j] = -t.art_bound
                t.art_bound_cols.add(j)
                t.status[j] = _AT_LOWER
        else:
            if np.isfinite(t.ub[j]):
                t.status[j] = _AT_UPPER
            else:
                t.ub[j] = t.art_bound
                t.art_bound_cols.add(j)
                t.status[j] = _AT_UPPER
    while True:
        status = _dual_iterate(t, limit)
        if status != "Optimal":
            if status == "Infeasible":
                return LpSolution("Infeasible", np.full(prob.ncols, np.nan), np.nan,
                                  np.full(prob.nrows, np.nan),
                                  np.full(prob.ncols, np.nan), t.iterations, "dual")
            return _finish(prob, t, status, keep_rows, "dual", opts)
        if not t.art_bound_cols:
            break
        x = t.x_full()
        stuck = [j for j in t.art_bound_cols
                 if abs(x[j]) >= t.art_bound * (1 - 1e-9)]
        if not stuck:
            break
        if t.art_bound > 1e25 * scale:
            return LpSolution("Unbounded", np.full(prob.ncols, np.nan), np.nan,
                              np.full(prob.nrows, np.nan),
                              np.full(prob.ncols, np.nan), t.iterations, "dual")
        t.art_bound *= 1024.0
        for j in t.art_bound_cols:
            if t.lb[j] < 0:
                t.lb[j] = min(t.lb[j], -t.art_bound)
            if t.ub[j] > 0:
                t.ub[j] = max(t.ub[j], t.art_bound)
        # bound growth keeps reduced costs intact, so the basis stays dual
        # feasible and the loop resumes where it stopped
    return _finish(prob, t, status, keep_rows, "dual", opts)


# ---------------------------------------------------------------------------
# brute force oracle
# ---------------------------------------------------------------------------

_BRUTE_MAX_COLS = 8
_BRUTE_MAX_COMBOS = 2_000_000


def brute_force(prob: LpProblem, mode: str = "vertex", grid_k: int = 6) -> LpSolution:
    """Certified optimum by exhaustive vertex enumeration (``mode='vertex'``)
    or a box-grid scan returning an objective bound (``mode='grid'``).

    Limited to 8 columns; completely independent of the simplex code paths.
    """
    if prob.ncols > _BRUTE_MAX_COLS:
        raise SolverError(f"brute force capped at {_BRUTE_MAX_COLS} columns, got {prob.ncols}")
    if mode == "grid":
        return _brute_grid(prob, grid_k)
    if mode != "vertex":
        raise SolverError(f"unknown brute force mode {mode!r}")
    n = prob.ncols
    a = prob.dense_matrix()
    # candidate active constraints: every row (as equality) and finite bounds
    normals, offsets, mandatory = [], [], []
    for r in range(prob.nrows):
        normals.append(a[r])
        offsets.append(prob.rhs[r])
        mandatory.append(prob.row_kinds[r] == EQ)
    for j in range(n):
        if np.isfinite(prob.lb[j]):
            e = np.zeros(n); e[j] = 1.0
            normals.append(e); offsets.append(prob.lb[j]); mandatory.append(False)
        if np.isfinite(prob.ub[j]):
            e = np.zeros(n); e[j] = 1.0
            normals.append(e); offsets.append(prob.ub[j]); mandatory.append(False)
    normals = np.array(normals)
    offsets = np.array(offsets)
    must = [i for i, f in enumerate(mandatory) if f]
    rest = [i for i, f in enumerate(mandatory) if not f]
    pick = n - len(must)
    if pick < 0:
        pick = 0
    from math import comb
    if comb(len(rest), max(pick, 0)) > _BRUTE_MAX_COMBOS:
        raise SolverError("brute force active-set enumeration too large")
    best_x, best_obj = None, None
    sgn = 1.0 if prob.sense == "max" else -1.0
    for extra in itertools.combinations(rest, pick):
        idx = must + list(extra)
        mat = normals[idx]
        if np.linalg.matrix_rank(mat) < n:
            continue
        try:
            x = np.linalg.solve(mat, offsets[idx])
        except np.linalg.LinAlgError:
            continue
        if not _brute_feasible(prob, a, x):
            continue
        obj = float(prob.obj @ x)
        if best_obj is None or sgn * obj > sgn * best_obj + 1e-12:
            best_obj, best_x = obj, x
    if best_x is None:
        return LpSolution("Infeasible", np.full(n, np.nan), np.nan,
                          np.full(prob.nrows, np.nan), np.full(n, np.nan), 0, "brute")
    return LpSolution("Optimal", best_x, best_obj + prob.obj_const,
                      np.zeros(prob.nrows), np.zeros(n), 0, "brute")


def _brute_feasible(prob, a, x, tol=1e-9):
    if np.any(x < prob.lb - tol) or np.any(x > prob.ub + tol):
        return False
    act = a @ x
    for r in range(prob.nrows):
        res = act[r] - prob.rhs[r]
        if prob.row_kinds[r] == LE and res > tol * max(1, abs(prob.rhs[r])):
            return False
        if prob.row_kinds[r] == GE and res < -tol * max(1, abs(prob.rhs[r])):
            return False
        if prob.row_kinds[r] == EQ and abs(res) > tol * max(1, abs(prob.rhs[r])):
            return False
    return True


def _brute_grid(prob: LpProblem, k: int) -> LpSolution:
    n = prob.ncols
    a = prob.dense_matrix()
    axes = []
    span = 1.0
    for j in range(n):
        lo = prob.lb[j] if np.isfinite(prob.lb[j]) else -1e3
        hi = prob.ub[j] if np.isfinite(prob.ub[j]) else 1e3
        axes.append(np.linspace(lo, hi, 2 ** k + 1))
        span = max(span, hi - lo)
    best_x, best_obj = None, None
    sgn = 1.0 if prob.sense == "max" else -1.0
    for point in itertools.product(*axes):
        x = np.array(point)
        if not _brute_feasible(prob, a, x, tol=1e-9):
            continue
        obj = float(prob.obj @ x)
        if best_obj is None or sgn * obj > sgn * best_obj:
            best_obj, best_x = obj, x
    if best_x is None:
        return LpSolution("Infeasible", np.full(n, np.nan), np.nan,
                          np.full(prob.nrows, np.nan), np.full(n, np.nan), 0,
                          f"grid(res={span / 2 ** k:g})")
    return LpSolution("Optimal", best_x, best_obj + prob.obj_const,
                      np.zeros(prob.nrows), np.zeros(n), 0,
                      f"grid(res={span / 2 ** k:g})")


# ---------------------------------------------------------------------------
# interchange text format
# ---------------------------------------------------------------------------

def write_lp_text(prob: LpProblem) -> str:
    """Fixed-section plain-text dump (MPS-flavoured, free format)."""
    out = [f"NAME {prob.name}", "OBJSENSE", f"    {prob.sense.upper()}", "ROWS"]
    kind_code = {LE: "L", EQ: "E", GE: "G"}
    for r in range(prob.nrows):
        out.append(f" {kind_code[prob.row_kinds[r]]}  {prob.row_names[r]}")
    out.append("COLUMNS")
    for j in range(prob.ncols):
        entries = [("OBJ", prob.obj[j])] if prob.obj[j] != 0 else []
        for r in range(prob.nrows):
            pos = np.searchsorted(prob.row_cols[r], j)
            if pos < len(prob.row_cols[r]) and prob.row_cols[r][pos] == j:
                entries.append((prob.row_names[r], prob.row_vals[r][pos]))
        if not entries:
            entries = [("OBJ", 0.0)]
        for name, val in entries:
            out.append(f"    {prob.col_names[j]}  {name}  {float(val)!r}")
    out.append("RHS")
    for r in range(prob.nrows):
        out.append(f"    RHS  {prob.row_names[r]}  {float(prob.rhs[r])!r}")
    out.append("BOUNDS")
    for j in range(prob.ncols):
        name = prob.col_names[j]
        if np.isneginf(prob.lb[j]):
            out.append(f" MI BND {name}")
        else:
            out.append(f" LO BND {name} {float(prob.lb[j])!r}")
        if np.isposinf(prob.ub[j]):
            out.append(f" PL BND {name}")
        else:
            out.append(f" UP BND {name} {float(prob.ub[j])!r}")
    out.append("OBJCONST")
    out.append(f"    {float(prob.obj_const)!r}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def read_lp_text(text: str) -> LpProblem:
    """Parse the format produced by :func:`write_lp_text`."""
    lines = [ln.rstrip() for ln in text.splitlines() if ln.strip()]
    it = iter(lines)
    header = next(it).split()
    if header[0] != "NAME":
        raise SolverError("missing NAME header")
    name = header[1] if len(header) > 1 else "lp"
    section = None
    sense = "min"
    row_names, row_kinds = [], []
    col_order: list[str] = []
    col_entries: dict[str, dict[str, float]] = {}
    rhs_map: dict[str, float] = {}
    lo_map: dict[str, float] = {}
    up_map: dict[str, float] = {}
    obj_const = 0.0
    code_kind = {"L": LE, "E": EQ, "G": GE}
    for ln in it:
        parts = ln.split()
        if len(parts) == 1 and parts[0] in ("OBJSENSE", "ROWS", "COLUMNS", "RHS",
                                            "BOUNDS", "OBJCONST", "ENDATA"):
            section = parts[0]
            if section == "ENDATA":
                break
            continue
        if section == "OBJSENSE":
            sense = parts[0].lower()
        elif section == "ROWS":
            row_kinds.append(code_kind[parts[0]])
            row_names.append(parts[1])
        elif section == "COLUMNS":
            col, row, val = parts[0], parts[1], float(parts[2])
            if col not in col_entries:
                col_entries[col] = {}
                col_order.append(col)
            if val != 0.0 or row == "OBJ":
                col_entries[col][row] = val
        elif section == "RHS":
            rhs_map[parts[1]] = float(parts[2])
        elif section == "BOUNDS":
            tag, _, col = parts[0], parts[1], parts[2]
            if col not in col_entries:
                col_entries[col] = {}
                col_order.append(col)
            if tag == "LO":
                lo_map[col] = float(parts[3])
            elif tag == "UP":
                up_map[col] = float(parts[3])
            elif tag == "MI":
                lo_map[col] = -np.inf
            elif tag == "PL":
                up_map[col] = np.inf
            elif tag == "FX":
                lo_map[col] = up_map[col] = float(parts[3])
        elif section == "OBJCONST":
            obj_const = float(parts[0])
    ncols = len(col_order)
    col_idx = {cname: j for j, cname in enumerate(col_order)}
    obj = np.zeros(ncols)
    rows = [dict() for _ in row_names]
    row_idx = {rname: r for r, rname in enumerate(row_names)}
    for cname, entries in col_entries.items():
        for rname, val in entries.items():
            if rname == "OBJ":
                obj[col_idx[cname]] = val
            else:
                rows[row_idx[rname]][col_idx[cname]] = val
    rhs = np.array([rhs_map.get(rname, 0.0) for rname in row_names])
    lb = np.array([lo_map.get(cn, 0.0) for cn in col_order])
    ub = np.array([up_map.get(cn, np.inf) for cn in col_order])
    return make_problem(sense, obj, lb, ub, rows, row_kinds, rhs, obj_const,
                        name=name, col_names=col_order, row_names=row_names)
