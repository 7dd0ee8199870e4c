"""Direct evaluation of the Lagrange function K and the chain
primal objective <= K(policy, cert) <= sup over policies of K,
independently of any LP machinery.

K is affine in every decision coordinate, so the closed-form supremum is a
sum of box maxima of linear terms, and finite differencing with unit step
recovers each coordinate's coefficient exactly.  Those coefficients double as
the dual equality-row integrands, which is what ties this module to the dual
builder: the cross-check in the test suite is the arbiter for the sign and
index-range questions in the cascade multiplier families.
"""

from __future__ import annotations

import math

import numpy as np

from .dual import DualCertificate, dual_objective, dual_feasible
from .model import DamSystem, DrainPolicy, is_feasible, primal_objective, water_levels
from .tree import ScenarioTree

TOL = 1e-9


def lagrange_value(policy: DrainPolicy, cert: DualCertificate,
                   tree: ScenarioTree, sys: DamSystem) -> float:
    """K(D, y): objective plus multiplier-weighted constraint terms.

    Neither input needs to be feasible; only shapes are required.
    """
    policy.check_shape(tree, sys)
    cert.check_shape(tree, sys)
    d = policy.per_scenario(tree)           # (T-1, K, N)
    v = water_levels(policy, tree, sys)     # (T, K, N)
    gam = cert.gamma_scen(tree)
    vv = cert.v_scen(tree, sys.is_total_cap)
    lam = cert.lam_scen(tree)
    ww = cert.w_scen(tree)
    total = primal_objective(policy, tree, sys)
    per_scen = np.zeros(tree.n_scenarios)
    for t in range(1, tree.stages):
        dt = d[t - 1]
        per_scen += (gam[t - 1] * dt).sum(axis=1)
        if sys.is_total_cap:
            per_scen += vv[t - 1] * (sys.variant.c_tilde - dt.sum(axis=1))
        else:
            per_scen += (vv[t - 1] * (sys.b[None, :] - dt)).sum(axis=1)
        per_scen += (lam[t - 1] * (v[t - 1] - dt)).sum(axis=1)
        per_scen += (ww[t - 1] * (sys.m[None, :] - v[t - 1])).sum(axis=1)
    if sys.is_cascade:
        tr = policy.control_per_scenario(tree, "transfer")
        sp = policy.control_per_scenario(tree, "spill")
        for t in range(1, tree.stages):
            per_scen += cert.extra_scen(tree, "gamma_transfer")[t - 1] * tr[t - 1]
            per_scen += cert.extra_scen(tree, "v_transfer")[t - 1] * \
                (sys.variant.m_transfer - tr[t - 1])
            per_scen += cert.extra_scen(tree, "gamma_spill")[t - 1] * sp[t - 1]
            per_scen += cert.extra_scen(tree, "v_spill")[t - 1] * \
                (sys.variant.n_out - sp[t - 1])
    return total + tree.expectation(per_scen)


def decision_coefficients(cert: DualCertificate, tree: ScenarioTree,
                          sys: DamSystem) -> dict:
    """Coefficient of each decision coordinate inside K, keyed by
    (kind, stage, manager atom, dam).

    For a drain coordinate this is
    E[1_A {S_i(t+1) - alpha S_i(T) + gamma_{i,t} - v_{i,t} - lam_{i,t}
           + sum_{s>t} (w_{i,s} - lam_{i,s})}],
    i.e. exactly the dual equality-row integrand.
    """
    cert.check_shape(tree, sys)
    T, N, K = tree.stages, tree.n_dams, tree.n_scenarios
    alpha = sys.alpha
    s_term = tree.price[-1]
    gam = cert.gamma_scen(tree)
    vv = cert.v_scen(tree, sys.is_total_cap)
    lam = cert.lam_scen(tree)
    ww = cert.w_scen(tree)
    out = {}
    for t in range(1, T):
        tail = np.zeros((K, N))
        for s in range(t + 1, T):
            tail += ww[s - 1] - lam[s - 1]
        for i in range(N):
            v_i = vv[t - 1] if sys.is_total_cap else vv[t - 1, :, i]
            co = (tree.price[t, :, i] - alpha * s_term[:, i] + gam[t - 1, :, i]
                  - v_i - lam[t - 1, :, i] + tail[:, i])
            for a, atom in enumerate(tree.manager.at(t)):
                sel = list(atom)
                out[("D", t, a, i)] = float(tree.p[sel] @ co[sel])
        if sys.is_cascade:
            gt = cert.extra_scen(tree, "gamma_transfer")[t - 1]
            vt = cert.extra_scen(tree, "v_transfer")[t - 1]
            go = cert.extra_scen(tree, "gamma_spill")[t - 1]
            vo = cert.extra_scen(tree, "v_spill")[t - 1]
            tr_co = alpha * (s_term[:, 1] - s_term[:, 0]) + gt - vt
            sp_co = -alpha * s_term[:, 1] + go - vo
            for s in range(t + 1, T):
                tr_co = tr_co + (lam[s - 1, :, 1] - lam[s - 1, :, 0]) \
                    + (ww[s - 1, :, 0] - ww[s - 1, :, 1])
                sp_co = sp_co + ww[s - 1, :, 1] - lam[s - 1, :, 1]
            for a, atom in enumerate(tree.manager.at(t)):
                sel = list(atom)
                out[("T", t, a, None)] = float(tree.p[sel] @ tr_co[sel])
                out[("O", t, a, None)] = float(tree.p[sel] @ sp_co[sel])
    return out


def finite_difference_coefficient(policy: DrainPolicy, cert: DualCertificate,
                                  tree: ScenarioTree, sys: DamSystem,
                                  kind: str, t: int, atom: int,
                                  dam: int | None) -> float:
    """K(policy + unit step in one coordinate) - K(policy); exact because K is
    affine, so the step size is immaterial."""
    base = lagrange_value(policy, cert, tree, sys)
    bumped = _bump(policy, tree, sys, kind, t, atom, dam, 1.0)
    return lagrange_value(bumped, cert, tree, sys) - base


def _bump(policy, tree, sys, kind, t, atom, dam, step):
    d = [a.copy() for a in policy.d]
    tr = None if policy.transfer is None else [a.copy() for a in policy.transfer]
    sp = None if policy.spill is None else [a.copy() for a in policy.spill]
    if kind == "D":
        d[t - 1][atom, dam] += step
    elif kind == "T":
        tr[t - 1][atom] += step
    else:
        sp[t - 1][atom] += step
    return DrainPolicy(d, tr, sp)


def sup_over_policy(cert: DualCertificate, tree: ScenarioTree, sys: DamSystem) -> float:
    """g(y) = sup over box-constrained policies of K(., y), in closed form.

    Separability: each coordinate contributes its box maximum of a linear
    term.  Shared-turbine drains have no upper box bound, so a positive
    coefficient there means +inf (the certificate is dual infeasible).
    """
    cert.check_shape(tree, sys)
    base = dual_objective(cert, tree, sys)
    coefs = decision_coefficients(cert, tree, sys)
    extra = 0.0
    for (kind, t, a, i), co in coefs.items():
        if co <= 0.0:
            continue
        if kind == "D":
            if sys.is_total_cap:
                if co > 1e-12:
                    return math.inf
            else:
                extra += sys.b[i] * co
        elif kind == "T":
            extra += sys.variant.m_transfer * co
        else:
            extra += sys.variant.n_out * co
    return base + extra


def weak_duality_check(policy: DrainPolicy, cert: DualCertificate,
                       tree: ScenarioTree, sys: DamSystem,
                       tol: float = TOL) -> dict:
    """Verifies primal_objective <= K <= sup_policy K for a feasible pair."""
    ok_p, bad = is_feasible(policy, tree, sys)
    if not ok_p:
        raise ValueError(f"policy infeasible: {bad[:3]}")
    ok_d, rep = dual_feasible(cert, tree, sys)
    if not ok_d:
        raise ValueError(f"certificate infeasible: max residual {rep['max_residual']:g}, "
                         f"min entry {rep['min_entry']:g}")
    lhs = primal_objective(policy, tree, sys)
    mid = lagrange_value(policy, cert, tree, sys)
    rhs = sup_over_policy(cert, tree, sys)
    scale = max(1.0, abs(lhs), abs(mid), abs(rhs) if math.isfinite(rhs) else 0.0)
    holds = (lhs <= mid + tol * scale) and (mid <= rhs + tol * scale)
    return {"lhs": lhs, "lagrange": mid, "rhs": rhs, "holds": holds}
