"""Dam systems, drain policies, water-level dynamics and the revenue
objective, for all three system variants."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tree import ScenarioTree

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Individual:
    """Separate turbine per dam: 0 <= D_i(t) <= b_i."""
    kind: str = "individual"


@dataclass(frozen=True)
class TotalCap:
    """One shared turbine: sum_i D_i(t) <= c_tilde, D_i unbounded above."""
    c_tilde: float
    kind: str = "total_cap"


@dataclass(frozen=True)
class Cascade:
    """Two dams in series; transfer T(t) from dam 1 to dam 2 (at most
    m_transfer per stage) and spill O(t) from dam 2 to the ocean (at most
    n_out per stage)."""
    m_transfer: float
    n_out: float
    kind: str = "cascade"


@dataclass(frozen=True)
class DamSystem:
    n_dams: int
    b: np.ndarray
    m: np.ndarray
    v1: np.ndarray
    alpha: float
    variant: Individual | TotalCap | Cascade

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        m = np.asarray(self.m, dtype=float)
        v1 = np.asarray(self.v1, dtype=float)
        for name, arr in (("b", b), ("m", m), ("v1", v1)):
            if arr.shape != (self.n_dams,):
                raise ValueError(f"{name} must have length {self.n_dams}")
            arr.setflags(write=False)
        if np.any(b < 0) or np.any(m < 0):
            raise ValueError("b and m must be nonnegative")
        if np.any(v1 < 0) or np.any(v1 > m):
            raise ValueError("need 0 <= v1 <= m")
        if isinstance(self.variant, Cascade):
            if self.n_dams != 2:
                raise ValueError("cascade variant requires exactly 2 dams")
            if self.variant.m_transfer <= 0 or self.variant.n_out <= 0:
                raise ValueError("cascade limits must be positive")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "v1", v1)

    @property
    def is_cascade(self) -> bool:
        return isinstance(self.variant, Cascade)

    @property
    def is_total_cap(self) -> bool:
        return isinstance(self.variant, TotalCap)

    def to_json(self) -> dict:
        out = {"dams": self.n_dams, "b": list(map(float, self.b)),
               "m": list(map(float, self.m)), "v1": list(map(float, self.v1)),
               "alpha": float(self.alpha)}
        if isinstance(self.variant, Individual):
            out["variant"] = {"type": "individual"}
        elif isinstance(self.variant, TotalCap):
            out["variant"] = {"type": "total_cap", "c_tilde": self.variant.c_tilde}
        else:
            out["variant"] = {"type": "cascade",
                              "m_transfer": self.variant.m_transfer,
                              "n_out": self.variant.n_out}
        return out


def system_from_json(doc: dict) -> DamSystem:
    vdoc = doc.get("variant", {"type": "individual"})
    vtype = vdoc.get("type", "individual")
    if vtype == "individual":
        variant = Individual()
    elif vtype == "total_cap":
        variant = TotalCap(c_tilde=float(vdoc["c_tilde"]))
    elif vtype == "cascade":
        variant = Cascade(m_transfer=float(vdoc["m_transfer"]),
                          n_out=float(vdoc["n_out"]))
    else:
        raise ValueError(f"unknown variant type {vtype!r}")
    return DamSystem(n_dams=int(doc["dams"]),
                     b=np.array([float(x) for x in doc["b"]]),
                     m=np.array([float(x) for x in doc["m"]]),
                     v1=np.array([float(x) for x in doc["v1"]]),
                     alpha=float(doc["alpha"]), variant=variant)


def load_system(path) -> DamSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return system_from_json(json.load(fh))


class DrainPolicy:
    """Manager-adapted controls, stored per (stage, manager atom, dam).

    ``d[t-1]`` has shape (atoms at stage t, N); cascade policies additionally
    carry ``transfer[t-1]`` and ``spill[t-1]`` of shape (atoms at stage t,).
    Adaptedness holds by construction.
    """

    def __init__(self, d, transfer=None, spill=None):
        self.d = [np.asarray(a, dtype=float) for a in d]
        self.transfer = None if transfer is None else [np.asarray(a, dtype=float) for a in transfer]
        self.spill = None if spill is None else [np.asarray(a, dtype=float) for a in spill]
        if (self.transfer is None) != (self.spill is None):
            raise ValueError("transfer and spill must be given together")

    @property
    def n_stages(self) -> int:
        return len(self.d)

    @property
    def is_cascade(self) -> bool:
        return self.transfer is not None

    @classmethod
    def zeros(cls, tree: ScenarioTree, sys: DamSystem) -> "DrainPolicy":
        d = [np.zeros((tree.manager.n_atoms(t), tree.n_dams))
             for t in range(1, tree.stages)]
        if sys.is_cascade:
            tr = [np.zeros(tree.manager.n_atoms(t)) for t in range(1, tree.stages)]
            sp = [np.zeros(tree.manager.n_atoms(t)) for t in range(1, tree.stages)]
            return cls(d, tr, sp)
        return cls(d)

    def check_shape(self, tree: ScenarioTree, sys: DamSystem):
        if self.n_stages != tree.stages - 1:
            raise ValueError(f"policy covers {self.n_stages} stages, tree has "
                             f"{tree.stages - 1} decision stages")
        for t in range(1, tree.stages):
            want = (tree.manager.n_atoms(t), tree.n_dams)
            if self.d[t - 1].shape != want:
                raise ValueError(f"policy stage {t}: expected shape {want}, "
                                 f"got {self.d[t - 1].shape}")
        if sys.is_cascade and not self.is_cascade:
            raise ValueError("cascade system needs transfer/spill controls")
        if self.is_cascade:
            for t in range(1, tree.stages):
                want = (tree.manager.n_atoms(t),)
                for name, arrs in (("transfer", self.transfer), ("spill", self.spill)):
                    if arrs[t - 1].shape != want:
                        raise ValueError(f"{name} stage {t}: expected {want}")

    def per_scenario(self, tree: ScenarioTree) -> np.ndarray:
        """(T-1, K, N) drain values expanded along the manager atoms."""
        out = np.zeros((tree.stages - 1, tree.n_scenarios, tree.n_dams))
        for t in range(1, tree.stages):
            idx = tree.manager.atom_index[t - 1]
            out[t - 1] = self.d[t - 1][idx]
        return out

    def control_per_scenario(self, tree: ScenarioTree, which: str) -> np.ndarray:
        """(T-1, K) transfer or spill values expanded per scenario."""
        arrs = self.transfer if which == "transfer" else self.spill
        out = np.zeros((tree.stages - 1, tree.n_scenarios))
        for t in range(1, tree.stages):
            idx = tree.manager.atom_index[t - 1]
            out[t - 1] = arrs[t - 1][idx]
        return out

    def scale(self, factor: float) -> "DrainPolicy":
        d = [a * factor for a in self.d]
        if self.is_cascade:
            return DrainPolicy(d, [a * factor for a in self.transfer],
                               [a * factor for a in self.spill])
        return DrainPolicy(d)

    def blend(self, other: "DrainPolicy", lam: float) -> "DrainPolicy":
        d = [lam * a + (1 - lam) * b for a, b in zip(self.d, other.d)]
        if self.is_cascade:
            tr = [lam * a + (1 - lam) * b for a, b in zip(self.transfer, other.transfer)]
            sp = [lam * a + (1 - lam) * b for a, b in zip(self.spill, other.spill)]
            return DrainPolicy(d, tr, sp)
        return DrainPolicy(d)

    def to_json(self, tree: ScenarioTree) -> dict:
        out = {"d": {}}
        for t in range(1, tree.stages):
            out["d"][str(t)] = {f"a{j}": [float(v) for v in self.d[t - 1][j]]
                                for j in range(tree.manager.n_atoms(t))}
        if self.is_cascade:
            out["transfer"] = {str(t): {f"a{j}": float(self.transfer[t - 1][j])
                                        for j in range(tree.manager.n_atoms(t))}
                               for t in range(1, tree.stages)}
            out["spill"] = {str(t): {f"a{j}": float(self.spill[t - 1][j])
                                     for j in range(tree.manager.n_atoms(t))}
                            for t in range(1, tree.stages)}
        return out

    @classmethod
    def from_json(cls, doc: dict, tree: ScenarioTree) -> "DrainPolicy":
        d = []
        for t in range(1, tree.stages):
            stage = doc["d"][str(t)]
            d.append(np.array([stage[f"a{j}"] for j in range(tree.manager.n_atoms(t))],
                              dtype=float))
        if "transfer" in doc:
            tr = [np.array([doc["transfer"][str(t)][f"a{j}"]
                            for j in range(tree.manager.n_atoms(t))])
                  for t in range(1, tree.stages)]
            sp = [np.array([doc["spill"][str(t)][f"a{j}"]
                            for j in range(tree.manager.n_atoms(t))])
                  for t in range(1, tree.stages)]
            return cls(d, tr, sp)
        return cls(d)


def water_levels(policy: DrainPolicy, tree: ScenarioTree, sys: DamSystem) -> np.ndarray:
    """(T, K, N) reservoir trajectories under the variant's recursion."""
    policy.check_shape(tree, sys)
    T, K, N = tree.stages, tree.n_scenarios, tree.n_dams
    v = np.zeros((T, K, N))
    v[0] = sys.v1[None, :]
    d = policy.per_scenario(tree)
    if sys.is_cascade:
        tr = policy.control_per_scenario(tree, "transfer")
        sp = policy.control_per_scenario(tree, "spill")
        for t in range(1, T):
            v[t, :, 0] = v[t - 1, :, 0] + tree.inflow[t - 1, :, 0] - d[t - 1, :, 0] - tr[t - 1]
            v[t, :, 1] = (v[t - 1, :, 1] + tree.inflow[t - 1, :, 1] + tr[t - 1]
                          - d[t - 1, :, 1] - sp[t - 1])
    else:
        for t in range(1, T):
            v[t] = v[t - 1] + tree.inflow[t - 1] - d[t - 1]
    return v


def water_levels_telescoped(policy: DrainPolicy, tree: ScenarioTree, sys: DamSystem) -> np.ndarray:
    """Same trajectories via the telescoped sum V(t) = V(1) + sum (R - outflow);
    kept as an independent evaluation order for the water-balance tests."""
    policy.check_shape(tree, sys)
    T, K, N = tree.stages, tree.n_scenarios, tree.n_dams
    d = policy.per_scenario(tree)
    v = np.zeros((T, K, N))
    v[0] = sys.v1[None, :]
    if sys.is_cascade:
        tr = policy.control_per_scenario(tree, "transfer")
        sp = policy.control_per_scenario(tree, "spill")
        for t in range(2, T + 1):
            net1 = tree.inflow[: t - 1, :, 0] - d[: t - 1, :, 0] - tr[: t - 1]
            net2 = tree.inflow[: t - 1, :, 1] - d[: t - 1, :, 1] + tr[: t - 1] - sp[: t - 1]
            v[t - 1, :, 0] = sys.v1[0] + net1.sum(axis=0)
            v[t - 1, :, 1] = sys.v1[1] + net2.sum(axis=0)
    else:
        for t in range(2, T + 1):
            v[t - 1] = sys.v1[None, :] + (tree.inflow[: t - 1] - d[: t - 1]).sum(axis=0)
    return v


def is_feasible(policy: DrainPolicy, tree: ScenarioTree, sys: DamSystem,
                tol: float = FEAS_TOL) -> tuple[bool, list[tuple]]:
    """Checks every stage/scenario constraint of the variant.

    Violations are (constraint, stage, scenario_or_atom, dam, slack) with
    negative slack; bound checks on adapted controls report the atom id.
    """
    policy.check_shape(tree, sys)
    v = water_levels(policy, tree, sys)
    d = policy.per_scenario(tree)
    bad = []
    for t in range(1, tree.stages):
        for j in range(tree.manager.n_atoms(t)):
            atom = f"a{j}"
            dv = policy.d[t - 1][j]
            for i in range(tree.n_dams):
                if dv[i] < -tol:
                    bad.append(("d>=0", t, atom, i, float(dv[i])))
                if not sys.is_total_cap and dv[i] > sys.b[i] + tol:
                    bad.append(("d<=b", t, atom, i, float(sys.b[i] - dv[i])))
            if sys.is_total_cap:
                slack = sys.variant.c_tilde - dv.sum()
                if slack < -tol:
                    bad.append(("sum_d<=c_tilde", t, atom, None, float(slack)))
            if sys.is_cascade:
                tr = policy.transfer[t - 1][j]
                sp = policy.spill[t - 1][j]
                if tr < -tol:
                    bad.append(("transfer>=0", t, atom, None, float(tr)))
                if tr > sys.variant.m_transfer + tol:
                    bad.append(("transfer<=max", t, atom, None,
                                float(sys.variant.m_transfer - tr)))
                if sp < -tol:
                    bad.append(("spill>=0", t, atom, None, float(sp)))
                if sp > sys.variant.n_out + tol:
                    bad.append(("spill<=max", t, atom, None,
                                float(sys.variant.n_out - sp)))
        for w in range(tree.n_scenarios):
            sid = tree.scenario_ids[w]
            for i in range(tree.n_dams):
                slack = v[t - 1, w, i] - d[t - 1, w, i]
                if slack < -tol:
                    bad.append(("d<=v", t, sid, i, float(slack)))
                slack = sys.m[i] - v[t - 1, w, i]
                if slack < -tol:
                    bad.append(("v<=m", t, sid, i, float(slack)))
    return (len(bad) == 0), bad


def primal_objective(policy: DrainPolicy, tree: ScenarioTree, sys: DamSystem) -> float:
    """E[sum_t D(t).S(t+1) + alpha V(T).S(T)]; defined for any policy shape,
    feasible or not."""
    policy.check_shape(tree, sys)
    d = policy.per_scenario(tree)
    v = water_levels(policy, tree, sys)
    per_scen = np.zeros(tree.n_scenarios)
    for t in range(1, tree.stages):
        per_scen += (d[t - 1] * tree.price[t]).sum(axis=1)
    per_scen += sys.alpha * (v[-1] * tree.price[-1]).sum(axis=1)
    return tree.expectation(per_scen)
