"""The conjugate dual: multiplier certificates, the dual LP, feasibility and
objective evaluation, and primal policy recovery from dual row prices.

Multiplier resolutions.  The bound multipliers gamma (for D >= 0) and v (for
D <= b; also the transfer/spill bound multipliers) attach to primal columns
and therefore live per (stage, manager atom).  The row multipliers lambda
(drain availability) and w (reservoir cap) attach to primal rows and live per
(stage, full atom); in the shared-turbine variant the production-cap
multiplier v does too.  This makes the dual LP the exact transpose of the
primal LP, so LP strong duality carries over row by row.  Restricting lambda
and w to manager atoms would force them to pay atom-average weights in the
objective and can open a strict gap on partial-information trees (see
tests/test_dual.py for a two-scenario demonstration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DamSystem, DrainPolicy
from .solver import EQ, LpProblem, LpSolution, make_problem
from .tree import ScenarioTree, conditional_expectation

SIGN_TOL = 1e-12
FEAS_TOL = 1e-9


class DualCertificate:
    """Nonnegative multipliers y = (gamma, v, lambda, w), plus the transfer
    and spill families in the cascade variant.

    Shapes per decision stage t:
      gamma[t-1]: (manager atoms, N)      v[t-1]: like gamma, or (full atoms,)
      lam[t-1], w[t-1]: (full atoms, N)   for the shared-turbine variant
      cascade extras: gamma_transfer / v_transfer / gamma_spill / v_spill,
      each (manager atoms,).
    """

    def __init__(self, gamma, v, lam, w, gamma_transfer=None, v_transfer=None,
                 gamma_spill=None, v_spill=None):
        self.gamma = [np.asarray(a, dtype=float) for a in gamma]
        self.v = [np.asarray(a, dtype=float) for a in v]
        self.lam = [np.asarray(a, dtype=float) for a in lam]
        self.w = [np.asarray(a, dtype=float) for a in w]
        self.gamma_transfer = None if gamma_transfer is None else \
            [np.asarray(a, dtype=float) for a in gamma_transfer]
        self.v_transfer = None if v_transfer is None else \
            [np.asarray(a, dtype=float) for a in v_transfer]
        self.gamma_spill = None if gamma_spill is None else \
            [np.asarray(a, dtype=float) for a in gamma_spill]
        self.v_spill = None if v_spill is None else \
            [np.asarray(a, dtype=float) for a in v_spill]

    @property
    def is_cascade(self) -> bool:
        return self.gamma_transfer is not None

    @classmethod
    def zeros(cls, tree: ScenarioTree, sys: DamSystem) -> "DualCertificate":
        T, N = tree.stages, tree.n_dams
        ga = [np.zeros((tree.manager.n_atoms(t), N)) for t in range(1, T)]
        if sys.is_total_cap:
            v = [np.zeros(tree.full.n_atoms(t)) for t in range(1, T)]
        else:
            v = [np.zeros((tree.manager.n_atoms(t), N)) for t in range(1, T)]
        lam = [np.zeros((tree.full.n_atoms(t), N)) for t in range(1, T)]
        w = [np.zeros((tree.full.n_atoms(t), N)) for t in range(1, T)]
        if sys.is_cascade:
            ext = [[np.zeros(tree.manager.n_atoms(t)) for t in range(1, T)]
                   for _ in range(4)]
            return cls(ga, v, lam, w, *ext)
        return cls(ga, v, lam, w)

    def check_shape(self, tree: ScenarioTree, sys: DamSystem):
        T, N = tree.stages, tree.n_dams
        if len(self.gamma) != T - 1:
            raise ValueError("certificate stage count mismatch")
        for t in range(1, T):
            ng, nf = tree.manager.n_atoms(t), tree.full.n_atoms(t)
            if self.gamma[t - 1].shape != (ng, N):
                raise ValueError(f"gamma stage {t}: want {(ng, N)}")
            want_v = (nf,) if sys.is_total_cap else (ng, N)
            if self.v[t - 1].shape != want_v:
                raise ValueError(f"v stage {t}: want {want_v}")
            for name, fam in (("lambda", self.lam), ("w", self.w)):
                if fam[t - 1].shape != (nf, N):
                    raise ValueError(f"{name} stage {t}: want {(nf, N)}")
        if sys.is_cascade != self.is_cascade:
            raise ValueError("cascade certificate/system mismatch")
        if self.is_cascade:
            for fam in (self.gamma_transfer, self.v_transfer,
                        self.gamma_spill, self.v_spill):
                for t in range(1, T):
                    if fam[t - 1].shape != (tree.manager.n_atoms(t),):
                        raise ValueError(f"cascade multiplier stage {t}: bad shape")

    def min_entry(self) -> float:
        vals = [a.min(initial=np.inf) for fam in self._families() for a in fam]
        return float(min(vals, default=0.0))

    def _families(self):
        fams = [self.gamma, self.v, self.lam, self.w]
        if self.is_cascade:
            fams += [self.gamma_transfer, self.v_transfer,
                     self.gamma_spill, self.v_spill]
        return fams

    # per-scenario expansions -------------------------------------------------

    def gamma_scen(self, tree) -> np.ndarray:
        return _expand(self.gamma, tree.manager, tree)

    def v_scen(self, tree, total_cap: bool) -> np.ndarray:
        if total_cap:
            out = np.zeros((tree.stages - 1, tree.n_scenarios))
            for t in range(1, tree.stages):
                out[t - 1] = self.v[t - 1][tree.full.atom_index[t - 1]]
            return out
        return _expand(self.v, tree.manager, tree)

    def lam_scen(self, tree) -> np.ndarray:
        return _expand(self.lam, tree.full, tree)

    def w_scen(self, tree) -> np.ndarray:
        return _expand(self.w, tree.full, tree)

    def extra_scen(self, tree, family: str) -> np.ndarray:
        fam = getattr(self, family)
        out = np.zeros((tree.stages - 1, tree.n_scenarios))
        for t in range(1, tree.stages):
            out[t - 1] = fam[t - 1][tree.manager.atom_index[t - 1]]
        return out

    # serialization -----------------------------------------------------------

    def to_json(self, tree: ScenarioTree, sys: DamSystem) -> dict:
        self.check_shape(tree, sys)
        out = {}
        out["gamma"] = _fam_json(self.gamma, "a", per_dam=True)
        if sys.is_total_cap:
            out["v"] = _fam_json(self.v, "f", per_dam=False)
        else:
            out["v"] = _fam_json(self.v, "a", per_dam=True)
        out["lambda"] = _fam_json(self.lam, "f", per_dam=True)
        out["w"] = _fam_json(self.w, "f", per_dam=True)
        if self.is_cascade:
            out["gamma_transfer"] = _fam_json(self.gamma_transfer, "a", per_dam=False)
            out["v_transfer"] = _fam_json(self.v_transfer, "a", per_dam=False)
            out["gamma_spill"] = _fam_json(self.gamma_spill, "a", per_dam=False)
            out["v_spill"] = _fam_json(self.v_spill, "a", per_dam=False)
        return out

    @classmethod
    def from_json(cls, doc: dict, tree: ScenarioTree, sys: DamSystem) -> "DualCertificate":
        T = tree.stages

        def fam(key, prefix, n_atoms):
            return [np.array([doc[key][str(t)][f"{prefix}{j}"]
                              for j in range(n_atoms(t))], dtype=float)
                    for t in range(1, T)]

        na_g, na_f = tree.manager.n_atoms, tree.full.n_atoms
        gamma = fam("gamma", "a", na_g)
        v = fam("v", "f", na_f) if sys.is_total_cap else fam("v", "a", na_g)
        lam = fam("lambda", "f", na_f)
        w = fam("w", "f", na_f)
        if sys.is_cascade:
            cert = cls(gamma, v, lam, w,
                       fam("gamma_transfer", "a", na_g),
                       fam("v_transfer", "a", na_g),
                       fam("gamma_spill", "a", na_g),
                       fam("v_spill", "a", na_g))
        else:
            cert = cls(gamma, v, lam, w)
        cert.check_shape(tree, sys)
        return cert


def _expand(fam, filtration, tree) -> np.ndarray:
    T = tree.stages
    out = np.zeros((T - 1, tree.n_scenarios, tree.n_dams))
    for t in range(1, T):
        out[t - 1] = fam[t - 1][filtration.atom_index[t - 1]]
    return out


def _fam_json(fam, prefix, per_dam):
    out = {}
    for t, arr in enumerate(fam, start=1):
        if per_dam:
            out[str(t)] = {f"{prefix}{j}": [float(x) for x in arr[j]]
                           for j in range(arr.shape[0])}
        else:
            out[str(t)] = {f"{prefix}{j}": float(arr[j]) for j in range(len(arr))}
    return out


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def constant_C(tree: ScenarioTree, sys: DamSystem) -> float:
    """alpha * E[S(T).V(1) + sum_t S(T).R(t)] -- the decision-free part of the
    revenue, shared by the primal report and the dual objective."""
    s_term = tree.price[-1]  # (K, N)
    total = s_term * (sys.v1[None, :] + tree.inflow.sum(axis=0))
    return float(sys.alpha * tree.p @ total.sum(axis=1))


@dataclass(frozen=True)
class DualMaps:
    """Column and row labelling of the dual LP.

    cols[j] = (family, stage, atom, dam); rows[r] = (kind, stage, atom, dam)
    with kind "D" (per-dam constraint), "T" (transfer), "O" (spill).
    """
    cols: tuple
    col_index: dict
    rows: tuple
    row_index: dict


def build_dual(tree: ScenarioTree, sys: DamSystem) -> tuple[LpProblem, DualMaps]:
    """Minimization LP over nonnegative multipliers; exact transpose of the
    primal up to positive probability scalings of columns and rows."""
    if sys.n_dams != tree.n_dams:
        raise ValueError("system dimension does not match tree")
    T, N = tree.stages, tree.n_dams
    alpha = sys.alpha
    s_term = tree.price[-1]
    pg = [tree.atom_prob(tree.manager, t) for t in range(1, T)]
    pf = [tree.atom_prob(tree.full, t) for t in range(1, T)]

    cols, obj = [], []
    for t in range(1, T):
        cum_r = tree.cum_inflow(t)
        for a in range(tree.manager.n_atoms(t)):
            for i in range(N):
                cols.append(("gamma", t, a, i)); obj.append(0.0)
        if sys.is_total_cap:
            for f in range(tree.full.n_atoms(t)):
                cols.append(("v", t, f, None))
                obj.append(pf[t - 1][f] * sys.variant.c_tilde)
        else:
            for a in range(tree.manager.n_atoms(t)):
                for i in range(N):
                    cols.append(("v", t, a, i))
                    obj.append(pg[t - 1][a] * sys.b[i])
        for f, atom in enumerate(tree.full.at(t)):
            rep = atom[0]
            for i in range(N):
                cols.append(("lambda", t, f, i))
                obj.append(pf[t - 1][f] * (sys.v1[i] + cum_r[rep, i]))
        for f, atom in enumerate(tree.full.at(t)):
            rep = atom[0]
            for i in range(N):
                cols.append(("w", t, f, i))
                obj.append(pf[t - 1][f] * (sys.m[i] - sys.v1[i] - cum_r[rep, i]))
        if sys.is_cascade:
            for a in range(tree.manager.n_atoms(t)):
                cols.append(("gamma_transfer", t, a, None)); obj.append(0.0)
                cols.append(("v_transfer", t, a, None))
                obj.append(pg[t - 1][a] * sys.variant.m_transfer)
                cols.append(("gamma_spill", t, a, None)); obj.append(0.0)
                cols.append(("v_spill", t, a, None))
                obj.append(pg[t - 1][a] * sys.variant.n_out)
    col_index = {c: j for j, c in enumerate(cols)}

    rows, kinds, rhs, row_labels = [], [], [], []
    for t in range(1, T):
        for a, atom in enumerate(tree.manager.at(t)):
            sel = list(atom)
            pw = tree.p[sel]
            pa = pg[t - 1][a]
            for i in range(N):
                row = {col_index[("gamma", t, a, i)]: pa}
                if sys.is_total_cap:
                    for f, fatom in enumerate(tree.full.at(t)):
                        if tree.manager.atom_of(t, fatom[0]) == a:
                            row[col_index[("v", t, f, None)]] = -pf[t - 1][f]
                else:
                    row[col_index[("v", t, a, i)]] = -pa
                for s in range(t, T):
                    for f, fatom in enumerate(tree.full.at(s)):
                        if tree.manager.atom_of(t, fatom[0]) != a:
                            continue
                        row[col_index[("lambda", s, f, i)]] = -pf[s - 1][f]
                        if s > t:
                            row[col_index[("w", s, f, i)]] = pf[s - 1][f]
                rows.append(row)
                kinds.append(EQ)
                rhs.append(-float(pw @ (tree.price[t, sel, i] - alpha * s_term[sel, i])))
                row_labels.append(("D", t, a, i))
            if sys.is_cascade:
                # transfer: alpha(S2(T)-S1(T)) + sum_{s>t}[(lam2-lam1)+(w1-w2)]
                #           + gamma_T - v_T integrates to zero on the atom
                row = {col_index[("gamma_transfer", t, a, None)]: pa,
                       col_index[("v_transfer", t, a, None)]: -pa}
                for s in range(t + 1, T):
                    for f, fatom in enumerate(tree.full.at(s)):
                        if tree.manager.atom_of(t, fatom[0]) != a:
                            continue
                        q = pf[s - 1][f]
                        row[col_index[("lambda", s, f, 1)]] = q
                        row[col_index[("lambda", s, f, 0)]] = -q
                        row[col_index[("w", s, f, 0)]] = q
                        row[col_index[("w", s, f, 1)]] = -q
                rows.append(row)
                kinds.append(EQ)
                rhs.append(-float(pw @ (alpha * (s_term[sel, 1] - s_term[sel, 0]))))
                row_labels.append(("T", t, a, None))
                # spill: -alpha S2(T) + sum_{s>t}[w2-lam2] + gamma_O - v_O
                row = {col_index[("gamma_spill", t, a, None)]: pa,
                       col_index[("v_spill", t, a, None)]: -pa}
                for s in range(t + 1, T):
                    for f, fatom in enumerate(tree.full.at(s)):
                        if tree.manager.atom_of(t, fatom[0]) != a:
                            continue
                        q = pf[s - 1][f]
                        row[col_index[("w", s, f, 1)]] = q
                        row[col_index[("lambda", s, f, 1)]] = -q
                rows.append(row)
                kinds.append(EQ)
                rhs.append(float(pw @ (alpha * s_term[sel, 1])))
                row_labels.append(("O", t, a, None))

    n = len(cols)
    maps = DualMaps(cols=tuple(cols), col_index=col_index,
                    rows=tuple(row_labels),
                    row_index={r: k for k, r in enumerate(row_labels)})
    prob = make_problem(
        "min", np.array(obj), np.zeros(n), np.full(n, np.inf),
        rows, kinds, np.array(rhs), obj_const=constant_C(tree, sys), name="dual",
        col_names=[_dual_col_name(c) for c in cols],
        row_names=[_dual_row_name(r) for r in row_labels])
    return prob, maps


def _dual_col_name(c):
    fam, t, a, i = c
    return f"{fam}_t{t}_a{a}" + (f"_d{i}" if i is not None else "")


def _dual_row_name(r):
    kind, t, a, i = r
    return f"eq_{kind}_t{t}_a{a}" + (f"_d{i}" if i is not None else "")


def certificate_from_solution(solution: LpSolution, maps: DualMaps,
                              tree: ScenarioTree, sys: DamSystem) -> DualCertificate:
    if not solution.optimal:
        raise ValueError(f"cannot read certificate from status {solution.status}")
    cert = DualCertificate.zeros(tree, sys)
    target = {"gamma": cert.gamma, "v": cert.v, "lambda": cert.lam, "w": cert.w}
    if sys.is_cascade:
        target.update(gamma_transfer=cert.gamma_transfer, v_transfer=cert.v_transfer,
                      gamma_spill=cert.gamma_spill, v_spill=cert.v_spill)
    for j, (fam, t, a, i) in enumerate(maps.cols):
        val = max(0.0, float(solution.x[j]))
        arr = target[fam][t - 1]
        if i is None:
            arr[a] = val
        else:
            arr[a, i] = val
    return cert


def dual_objective(cert: DualCertificate, tree: ScenarioTree, sys: DamSystem) -> float:
    """C + sum_t E[lam_t.(V(1)+sum R) + capacity terms + w_t.(m-V(1)-sum R)]."""
    cert.check_shape(tree, sys)
    total = constant_C(tree, sys)
    for t in range(1, tree.stages):
        cum_r = tree.cum_inflow(t)
        lam_s = cert.lam[t - 1][tree.full.atom_index[t - 1]]  # (K, N)
        w_s = cert.w[t - 1][tree.full.atom_index[t - 1]]
        total += float(tree.p @ (lam_s * (sys.v1[None, :] + cum_r)).sum(axis=1))
        total += float(tree.p @ (w_s * (sys.m[None, :] - sys.v1[None, :] - cum_r)).sum(axis=1))
        if sys.is_total_cap:
            v_s = cert.v[t - 1][tree.full.atom_index[t - 1]]  # (K,)
            total += float(tree.p @ v_s) * sys.variant.c_tilde
        else:
            v_s = cert.v[t - 1][tree.manager.atom_index[t - 1]]  # (K, N)
            total += float(tree.p @ (v_s * sys.b[None, :]).sum(axis=1))
        if sys.is_cascade:
            vt = cert.v_transfer[t - 1][tree.manager.atom_index[t - 1]]
            vo = cert.v_spill[t - 1][tree.manager.atom_index[t - 1]]
            total += float(tree.p @ vt) * sys.variant.m_transfer
            total += float(tree.p @ vo) * sys.variant.n_out
    return total


def dual_constraint_residuals(cert: DualCertificate, tree: ScenarioTree,
                              sys: DamSystem) -> tuple[dict, dict]:
    """Residual of every dual equality row, evaluated two ways.

    Returns (integral_form, conditional_form) keyed by (kind, t, atom, dam).
    The integral form sums the per-scenario integrand over the atom; the
    conditional form evaluates the rewritten constraint
    E[S(t+1)|G] - alpha E[S(T)|G] = v - gamma + lam_t + E[sum_{s>t}(lam-w)|G]
    and reports LHS - RHS.  The two must agree to machine precision.
    """
    cert.check_shape(tree, sys)
    T, N, K = tree.stages, tree.n_dams, tree.n_scenarios
    alpha = sys.alpha
    s_term = tree.price[-1]
    gam = cert.gamma_scen(tree)
    vv = cert.v_scen(tree, sys.is_total_cap)
    lam = cert.lam_scen(tree)
    ww = cert.w_scen(tree)
    integral, conditional = {}, {}
    for t in range(1, T):
        tail = np.zeros((K, N))  # sum_{s>t} (lam_s - w_s), per scenario
        for s in range(t + 1, T):
            tail += lam[s - 1] - ww[s - 1]
        for i in range(N):
            v_i = vv[t - 1] if sys.is_total_cap else vv[t - 1, :, i]
            price_gap = tree.price[t, :, i] - alpha * s_term[:, i]
            integrand = (price_gap + gam[t - 1, :, i] - v_i
                         - lam[t - 1, :, i] - tail[:, i])
            ce_lhs = conditional_expectation(tree, price_gap, t)
            ce_rhs = conditional_expectation(
                tree, v_i - gam[t - 1, :, i] + lam[t - 1, :, i] + tail[:, i], t)
            for a, atom in enumerate(tree.manager.at(t)):
                sel = list(atom)
                integral[("D", t, a, i)] = float(tree.p[sel] @ integrand[sel])
                conditional[("D", t, a, i)] = float(ce_lhs[a] - ce_rhs[a])
        if sys.is_cascade:
            gt = cert.extra_scen(tree, "gamma_transfer")[t - 1]
            vt = cert.extra_scen(tree, "v_transfer")[t - 1]
            go = cert.extra_scen(tree, "gamma_spill")[t - 1]
            vo = cert.extra_scen(tree, "v_spill")[t - 1]
            tr_tail = np.zeros(K)  # sum_{s>t} [(lam2-lam1) + (w1-w2)]
            sp_tail = np.zeros(K)  # sum_{s>t} [w2 - lam2]
            for s in range(t + 1, T):
                tr_tail += (lam[s - 1, :, 1] - lam[s - 1, :, 0]) \
                    + (ww[s - 1, :, 0] - ww[s - 1, :, 1])
                sp_tail += ww[s - 1, :, 1] - lam[s - 1, :, 1]
            tr_base = alpha * (s_term[:, 1] - s_term[:, 0]) + tr_tail
            sp_base = -alpha * s_term[:, 1] + sp_tail
            tr_lhs = conditional_expectation(tree, tr_base, t)
            tr_rhs = conditional_expectation(tree, vt - gt, t)
            sp_lhs = conditional_expectation(tree, sp_base, t)
            sp_rhs = conditional_expectation(tree, vo - go, t)
            tr_integrand = tr_base + gt - vt
            sp_integrand = sp_base + go - vo
            for a, atom in enumerate(tree.manager.at(t)):
                sel = list(atom)
                integral[("T", t, a, None)] = float(tree.p[sel] @ tr_integrand[sel])
                conditional[("T", t, a, None)] = float(tr_lhs[a] - tr_rhs[a])
                integral[("O", t, a, None)] = float(tree.p[sel] @ sp_integrand[sel])
                conditional[("O", t, a, None)] = float(sp_lhs[a] - sp_rhs[a])
    return integral, conditional


def dual_feasible(cert: DualCertificate, tree: ScenarioTree, sys: DamSystem,
                  tol: float = FEAS_TOL) -> tuple[bool, dict]:
    """Checks sign constraints and every equality row in both evaluation forms."""
    integral, conditional = dual_constraint_residuals(cert, tree, sys)
    agree = max((abs(integral[k] / max(_atom_mass(tree, k), 1e-300) - conditional[k])
                 for k in integral), default=0.0)
    max_resid = max((abs(v) for v in integral.values()), default=0.0)
    min_entry = cert.min_entry()
    ok = max_resid <= tol and min_entry >= -SIGN_TOL
    report = {
        "max_residual": max_resid,
        "residuals": integral,
        "conditional_residuals": conditional,
        "form_agreement": agree,
        "min_entry": min_entry,
    }
    return ok, report


def _atom_mass(tree: ScenarioTree, key) -> float:
    _, t, a, _ = key
    return float(tree.p[list(tree.manager.at(t)[a])].sum())


def policy_from_dual(solution: LpSolution, maps: DualMaps, tree: ScenarioTree,
                     sys: DamSystem) -> tuple[DrainPolicy, dict]:
    """Primal decisions as (negated) row prices of the dual equality rows.

    Returns (policy, info); ``info["unique"]`` is False when the dual optimum
    is degenerate, in which case the policy is one of possibly many optima.
    """
    if not solution.optimal:
        raise ValueError(f"dual solve ended with status {solution.status}")
    T = tree.stages
    d = [np.zeros((tree.manager.n_atoms(t), tree.n_dams)) for t in range(1, T)]
    tr = [np.zeros(tree.manager.n_atoms(t)) for t in range(1, T)] if sys.is_cascade else None
    sp = [np.zeros(tree.manager.n_atoms(t)) for t in range(1, T)] if sys.is_cascade else None
    for r, (kind, t, a, i) in enumerate(maps.rows):
        val = -float(solution.row_prices[r])
        if abs(val) < 1e-11:
            val = 0.0
        if kind == "D":
            d[t - 1][a, i] = val
        elif kind == "T":
            tr[t - 1][a] = val
        else:
            sp[t - 1][a] = val
    policy = DrainPolicy(d, tr, sp)
    return policy, {"unique": not solution.degenerate}
