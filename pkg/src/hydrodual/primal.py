"""Primal LP construction over the manager filtration.

One column per (decision stage, manager atom, dam) drain decision -- plus a
transfer and a spill column per (stage, atom) in the cascade variant -- with
nonanticipativity built into the indexing.  Constraint rows are generated per
full-filtration atom, where the price and inflow processes live; the
deterministic part of the objective (terminal value of water that is there
regardless of any decision) is carried as an objective constant, never baked
into the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DamSystem, DrainPolicy
from .solver import LE, LpProblem, LpSolution, make_problem
from .tree import ScenarioTree


@dataclass(frozen=True)
class VariableMap:
    """Bijection between LP columns and labelled decisions.

    ``cols[j] = (kind, stage, atom, dam)`` with kind one of ``"D"``, ``"T"``,
    ``"O"`` (dam is None for transfer/spill).  ``index`` inverts it.
    """

    cols: tuple[tuple, ...]
    index: dict
    stages: int
    n_dams: int
    atoms_per_stage: tuple[int, ...]
    cascade: bool

    @classmethod
    def build(cls, tree: ScenarioTree, sys: DamSystem) -> "VariableMap":
        cols = []
        for t in range(1, tree.stages):
            for a in range(tree.manager.n_atoms(t)):
                for i in range(tree.n_dams):
                    cols.append(("D", t, a, i))
                if sys.is_cascade:
                    cols.append(("T", t, a, None))
                    cols.append(("O", t, a, None))
        return cls(cols=tuple(cols),
                   index={c: j for j, c in enumerate(cols)},
                   stages=tree.stages, n_dams=tree.n_dams,
                   atoms_per_stage=tuple(tree.manager.n_atoms(t)
                                         for t in range(1, tree.stages)),
                   cascade=sys.is_cascade)

    def col(self, kind, t, a, i=None) -> int:
        return self.index[(kind, t, a, i)]

    @property
    def ncols(self) -> int:
        return len(self.cols)

    def name(self, j: int) -> str:
        kind, t, a, i = self.cols[j]
        return f"{kind}_t{t}_a{a}" + (f"_d{i}" if i is not None else "")


def build_primal(tree: ScenarioTree, sys: DamSystem) -> tuple[LpProblem, VariableMap]:
    """Maximization LP for the variant in ``sys``; deterministic ordering.

    Row order is stage-major, full-atom-minor, with constraint kinds in the
    fixed order (drain availability, reservoir cap, total-production cap).
    """
    if sys.n_dams != tree.n_dams:
        raise ValueError("system dimension does not match tree")
    vmap = VariableMap.build(tree, sys)
    n = vmap.ncols
    obj = np.zeros(n)
    lb = np.zeros(n)
    ub = np.empty(n)
    alpha = sys.alpha
    s_term = tree.price[-1]  # (K, N)
    for j, (kind, t, a, i) in enumerate(vmap.cols):
        sel = list(tree.manager.at(t)[a])
        pw = tree.p[sel]
        if kind == "D":
            obj[j] = float(pw @ (tree.price[t, sel, i] - alpha * s_term[sel, i]))
            ub[j] = np.inf if sys.is_total_cap else sys.b[i]
        elif kind == "T":
            obj[j] = float(pw @ (alpha * (s_term[sel, 1] - s_term[sel, 0])))
            ub[j] = sys.variant.m_transfer
        else:  # spill
            obj[j] = float(pw @ (-alpha * s_term[sel, 1]))
            ub[j] = sys.variant.n_out

    rows, kinds, rhs, row_names = [], [], [], []
    for t in range(1, tree.stages):
        for f_idx, f in enumerate(tree.full.at(t)):
            rep = f[0]
            cum_r = tree.cum_inflow(t)[rep]  # (N,)
            hist_atoms = [tree.manager.atom_of(s, rep) for s in range(1, t + 1)]
            for i in range(tree.n_dams):
                # D_i(t) + sum_{s<t} outflow_i(s) <= v1_i + sum_{s<t} R_i(s)
                row: dict[int, float] = {}
                row[vmap.col("D", t, hist_atoms[t - 1], i)] = 1.0
                for s in range(1, t):
                    row[vmap.col("D", s, hist_atoms[s - 1], i)] = \
                        row.get(vmap.col("D", s, hist_atoms[s - 1], i), 0.0) + 1.0
                    if sys.is_cascade:
                        tcol = vmap.col("T", s, hist_atoms[s - 1])
                        ocol = vmap.col("O", s, hist_atoms[s - 1])
                        if i == 0:
                            row[tcol] = row.get(tcol, 0.0) + 1.0
                        else:
                            row[tcol] = row.get(tcol, 0.0) - 1.0
                            row[ocol] = row.get(ocol, 0.0) + 1.0
                rows.append(row)
                kinds.append(LE)
                rhs.append(float(sys.v1[i] + cum_r[i]))
                row_names.append(f"t{t}_f{f_idx}_dv{i}")
            for i in range(tree.n_dams):
                # -sum_{s<t} outflow_i(s) <= m_i - v1_i - sum_{s<t} R_i(s)
                row = {}
                for s in range(1, t):
                    row[vmap.col("D", s, hist_atoms[s - 1], i)] = \
                        row.get(vmap.col("D", s, hist_atoms[s - 1], i), 0.0) - 1.0
                    if sys.is_cascade:
                        tcol = vmap.col("T", s, hist_atoms[s - 1])
                        ocol = vmap.col("O", s, hist_atoms[s - 1])
                        if i == 0:
                            row[tcol] = row.get(tcol, 0.0) - 1.0
                        else:
                            row[tcol] = row.get(tcol, 0.0) + 1.0
                            row[ocol] = row.get(ocol, 0.0) - 1.0
                rows.append(row)
                kinds.append(LE)
                rhs.append(float(sys.m[i] - sys.v1[i] - cum_r[i]))
                row_names.append(f"t{t}_f{f_idx}_vm{i}")
            if sys.is_total_cap:
                row = {vmap.col("D", t, hist_atoms[t - 1], i): 1.0
                       for i in range(tree.n_dams)}
                rows.append(row)
                kinds.append(LE)
                rhs.append(float(sys.variant.c_tilde))
                row_names.append(f"t{t}_f{f_idx}_cap")

    from .dual import constant_C
    prob = make_problem("max", obj, lb, ub, rows, kinds, np.array(rhs),
                        obj_const=constant_C(tree, sys), name="primal",
                        col_names=[vmap.name(j) for j in range(n)],
                        row_names=row_names)
    return prob, vmap


def expand_counts(tree: ScenarioTree, sys: DamSystem) -> dict:
    """Per-scenario accounting (one variable per scenario, nonanticipativity
    implicit) next to this artifact's per-atom accounting."""
    T, K, N = tree.stages, tree.n_scenarios, tree.n_dams
    per_scen_vars = N * (T - 1) * K
    if sys.is_cascade:
        per_scen_vars += 2 * (T - 1) * K
        per_scen_cons = (4 * N + 4) * (T - 1) * K
    elif sys.is_total_cap:
        per_scen_cons = (3 * N + 1) * (T - 1) * K
    else:
        per_scen_cons = 4 * N * (T - 1) * K
    atoms_g = sum(tree.manager.n_atoms(t) for t in range(1, T))
    atoms_f = sum(tree.full.n_atoms(t) for t in range(1, T))
    per_atom_vars = atoms_g * (N + (2 if sys.is_cascade else 0))
    per_atom_rows = atoms_f * (2 * N + (1 if sys.is_total_cap else 0))
    return {
        "per_scenario_variables": per_scen_vars,
        "per_scenario_constraints": per_scen_cons,
        "per_atom_variables": per_atom_vars,
        "per_atom_rows": per_atom_rows,
    }


def extract_policy(solution: LpSolution, vmap: VariableMap) -> DrainPolicy:
    """Read a DrainPolicy off an optimal primal solution."""
    if not solution.optimal:
        raise ValueError(f"cannot extract policy from status {solution.status}")
    T = vmap.stages
    d = [np.zeros((vmap.atoms_per_stage[t - 1], vmap.n_dams)) for t in range(1, T)]
    tr = [np.zeros(vmap.atoms_per_stage[t - 1]) for t in range(1, T)] if vmap.cascade else None
    sp = [np.zeros(vmap.atoms_per_stage[t - 1]) for t in range(1, T)] if vmap.cascade else None
    for j, (kind, t, a, i) in enumerate(vmap.cols):
        val = float(solution.x[j])
        if kind == "D":
            d[t - 1][a, i] = val
        elif kind == "T":
            tr[t - 1][a] = val
        else:
            sp[t - 1][a] = val
    return DrainPolicy(d, tr, sp)
