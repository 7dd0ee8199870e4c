"""Closed-form dual certificates for flat or rising price regimes, and the
duality-gap analyzer that solves both LPs and cross-checks them.

With alpha = 1, nonnegative inflow, no flood risk and a price process that is
a martingale or submartingale w.r.t. the manager's information, the dual
optimum is the decision-free constant C: all weighted multipliers vanish, and
only sign-fixing gamma entries are needed (for submartingale price gaps and,
in the cascade, for the spill row, whose integrand carries -S_2(T)).
Outside that regime no closed form is claimed and None is returned.
"""

from __future__ import annotations

import numpy as np

from .dual import (DualCertificate, build_dual, certificate_from_solution,
                   constant_C, dual_feasible)
from .model import DamSystem, DrainPolicy, is_feasible, primal_objective
from .primal import build_primal, extract_policy
from .solver import SolveOptions, solve, solve_dual_simplex
from .tree import ScenarioTree, check_no_flood, classify_price, conditional_expectation

GAP_RTOL = 1e-7


def closed_form_certificate(tree: ScenarioTree, sys: DamSystem):
    """Returns {cert, value, regime} or None when outside the covered regime.

    Preconditions checked here: alpha == 1, inflow >= 0 scenario-wise,
    no flood risk, every dam's price a martingale or submartingale (ties count
    as martingale), and identical prices across the two dams in the cascade.
    """
    if abs(sys.alpha - 1.0) > 1e-12:
        return None
    if np.any(tree.inflow < -1e-12):
        return None
    ok, _ = check_no_flood(tree, sys)
    if not ok:
        return None
    regimes = classify_price(tree)
    if any(r not in ("Martingale", "Submartingale") for r in regimes):
        return None
    if sys.is_cascade:
        if np.max(np.abs(tree.price[:, :, 0] - tree.price[:, :, 1])) > 1e-9:
            return None
    cert = DualCertificate.zeros(tree, sys)
    submartingale = any(r == "Submartingale" for r in regimes)
    if submartingale:
        # gamma_t = E[S(T) - S(t+1) | G_t] >= 0 closes the price gap; the
        # remaining families stay zero so the objective stays at C
        for t in range(1, tree.stages):
            for i in range(tree.n_dams):
                gap = tree.price[-1, :, i] - tree.price[t, :, i]
                vals = conditional_expectation(tree, gap, t)
                cert.gamma[t - 1][:, i] = np.maximum(vals, 0.0)
    if sys.is_cascade:
        # spill row needs gamma_O = E[alpha S_2(T) | G_t]; costs nothing
        for t in range(1, tree.stages):
            vals = conditional_expectation(tree, sys.alpha * tree.price[-1, :, 1], t)
            cert.gamma_spill[t - 1][:] = np.maximum(vals, 0.0)
    feas, rep = dual_feasible(cert, tree, sys)
    if not feas:  # pragma: no cover - regime gate should prevent this
        return None
    return {
        "cert": cert,
        "value": constant_C(tree, sys),
        "regime": "Submartingale" if submartingale else "Martingale",
    }


def interior_policy(tree: ScenarioTree, sys: DamSystem, eps: float | None = None) -> DrainPolicy:
    """Strictly interior feasible policy from the no-gap argument:
    drain min(atom-min inflow, initial level, turbine cap) minus a margin.

    Requires strictly positive inflow, initial levels and capacities.
    """
    floor = min(float(tree.inflow.min()), float(sys.v1.min()),
                float(sys.b.min()) if not sys.is_total_cap else float(sys.variant.c_tilde))
    if floor <= 0:
        raise ValueError("interior policy needs strictly positive inflow, v1 and caps")
    if eps is None:
        eps = 0.5 * floor
    if eps >= floor:
        raise ValueError(f"eps {eps} too large for floor {floor}")
    policy = DrainPolicy.zeros(tree, sys)
    for t in range(1, tree.stages):
        for a, atom in enumerate(tree.manager.at(t)):
            sel = list(atom)
            for i in range(tree.n_dams):
                r_min = float(tree.inflow[t - 1, sel, i].min())
                cap = sys.variant.c_tilde / tree.n_dams if sys.is_total_cap else sys.b[i]
                policy.d[t - 1][a, i] = max(0.0, min(r_min, sys.v1[i], cap) - eps)
    return policy


def duality_gap(tree: ScenarioTree, sys: DamSystem,
                options: SolveOptions | None = None) -> dict:
    """Solve both LPs and report optima, gap and supporting diagnostics."""
    p_prob, vmap = build_primal(tree, sys)
    d_prob, dmaps = build_dual(tree, sys)
    p_sol = solve(p_prob, options)
    d_sol = solve_dual_simplex(d_prob, options)
    report = {
        "kind": "gap",
        "tree_hash": tree.digest(),
        "system": sys.to_json(),
        "statuses": {"primal": p_sol.status, "dual": d_sol.status},
        "primal_opt": None, "dual_opt": None,
        "abs_gap": None, "rel_gap": None, "gap_ok": None,
        "interior_policy": None, "closed_form": None,
        "columns": {"primal": p_prob.ncols, "dual": d_prob.ncols},
        "rows": {"primal": p_prob.nrows, "dual": d_prob.nrows},
    }
    if p_sol.optimal:
        report["primal_opt"] = p_sol.objective
    if d_sol.optimal:
        report["dual_opt"] = d_sol.objective
    if p_sol.optimal and d_sol.optimal:
        gap = abs(p_sol.objective - d_sol.objective)
        scale = max(1.0, abs(p_sol.objective), abs(d_sol.objective))
        report["abs_gap"] = gap
        report["rel_gap"] = gap / scale
        report["gap_ok"] = bool(report["rel_gap"] <= GAP_RTOL)
    if float(tree.inflow.min()) > 0 and float(sys.v1.min()) > 0:
        try:
            pol = interior_policy(tree, sys)
            ok, _ = is_feasible(pol, tree, sys)
            report["interior_policy"] = {
                "objective": primal_objective(pol, tree, sys),
                "feasible": bool(ok),
            }
        except ValueError:
            pass
    cf = closed_form_certificate(tree, sys)
    if cf is not None:
        report["closed_form"] = {"value": cf["value"], "regime": cf["regime"]}
    return report


def solve_both(tree: ScenarioTree, sys: DamSystem, options=None):
    """Convenience: returns (primal solution, policy, dual solution, cert)."""
    p_prob, vmap = build_primal(tree, sys)
    d_prob, dmaps = build_dual(tree, sys)
    p_sol = solve(p_prob, options)
    d_sol = solve_dual_simplex(d_prob, options)
    policy = extract_policy(p_sol, vmap) if p_sol.optimal else None
    cert = certificate_from_solution(d_sol, dmaps, tree, sys) if d_sol.optimal else None
    return p_sol, policy, d_sol, cert
