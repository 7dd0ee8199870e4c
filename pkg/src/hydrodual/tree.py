"""Scenario trees with two information filtrations.

A tree carries a finite scenario set with probabilities, an electricity price
process ``S(t)`` for stages ``t = 1..T`` and an inflow process ``R(t)`` for
``t = 1..T-1``, both adapted to the full filtration, plus the (possibly
coarser) manager filtration that drain decisions must be measurable against.
Stage ``T`` is terminal: both filtrations separate every scenario there.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

ADAPT_TOL = 1e-9
PROB_TOL = 1e-9


class TreeValidationError(ValueError):
    """Base class for scenario-tree document problems."""


class BadDocument(TreeValidationError):
    """Structurally malformed document (keys, shapes, unknown ids)."""


class BadProbabilities(TreeValidationError):
    """Probabilities nonpositive or not summing to one."""


class BadAtoms(TreeValidationError):
    """A stage's atoms do not partition the scenario set."""


class NotRefining(TreeValidationError):
    """An atom at stage t+1 straddles two atoms at stage t."""


class NotSubfiltration(TreeValidationError):
    """Manager filtration is not coarser than the full filtration."""


class TerminalNotSeparating(TreeValidationError):
    """Stage-T atoms do not separate all scenarios."""


class NotAdapted(TreeValidationError):
    """Price or inflow varies inside a full-filtration atom."""


@dataclass(frozen=True)
class Filtration:
    """Per-stage partitions of the scenario index set.

    ``atoms[t-1]`` is the stage-``t`` partition, each atom a sorted tuple of
    scenario indices.  Atoms are ordered by their smallest member, which fixes
    the atom ids ``a0, a1, ...`` (or ``f0, ...`` for the full filtration) used
    in serialized policies and certificates.
    """

    atoms: tuple[tuple[tuple[int, ...], ...], ...]
    n_scenarios: int
    atom_index: np.ndarray = field(repr=False, default=None)  # (stages, K)

    def __post_init__(self):
        idx = np.full((len(self.atoms), self.n_scenarios), -1, dtype=int)
        for t, stage_atoms in enumerate(self.atoms):
            for j, atom in enumerate(stage_atoms):
                for w in atom:
                    idx[t, w] = j
        idx.setflags(write=False)
        object.__setattr__(self, "atom_index", idx)

    @property
    def stages(self) -> int:
        return len(self.atoms)

    def at(self, stage: int) -> tuple[tuple[int, ...], ...]:
        return self.atoms[stage - 1]

    def n_atoms(self, stage: int) -> int:
        return len(self.atoms[stage - 1])

    def atom_of(self, stage: int, scenario: int) -> int:
        return int(self.atom_index[stage - 1, scenario])

    def validate(self):
        for t, stage_atoms in enumerate(self.atoms, start=1):
            seen = set()
            for atom in stage_atoms:
                if not atom:
                    raise BadAtoms(f"stage {t}: empty atom")
                if seen & set(atom):
                    raise BadAtoms(f"stage {t}: overlapping atoms")
                seen |= set(atom)
            if seen != set(range(self.n_scenarios)):
                raise BadAtoms(f"stage {t}: atoms do not cover the scenario set")
        for t in range(1, self.stages):
            for atom in self.atoms[t]:
                parents = {self.atom_of(t, w) for w in atom}
                if len(parents) != 1:
                    raise NotRefining(
                        f"stage {t + 1}: atom {atom} straddles stage-{t} atoms {sorted(parents)}")


def _canonical_atoms(stage_atoms) -> tuple[tuple[int, ...], ...]:
    atoms = [tuple(sorted(a)) for a in stage_atoms]
    return tuple(sorted(atoms, key=lambda a: a[0]))


def make_filtration(atoms_by_stage, n_scenarios: int) -> Filtration:
    f = Filtration(tuple(_canonical_atoms(s) for s in atoms_by_stage), n_scenarios)
    f.validate()
    return f


def is_subfiltration(coarse: Filtration, fine: Filtration) -> bool:
    """True iff every atom of ``fine`` lies inside some atom of ``coarse`` at
    every stage."""
    if coarse.n_scenarios != fine.n_scenarios:
        raise ValueError("filtrations over different scenario sets")
    if coarse.stages != fine.stages:
        raise ValueError("filtrations with different stage counts")
    for t in range(1, fine.stages + 1):
        for atom in fine.at(t):
            hosts = {coarse.atom_of(t, w) for w in atom}
            if len(hosts) != 1:
                return False
    return True


@dataclass(frozen=True)
class ScenarioTree:
    """Validated scenario tree; immutable after construction."""

    stages: int
    n_dams: int
    scenario_ids: tuple[str, ...]
    p: np.ndarray                 # (K,)
    price: np.ndarray             # (T, K, N)
    inflow: np.ndarray            # (T-1, K, N)
    full: Filtration
    manager: Filtration

    def __post_init__(self):
        for arr in (self.p, self.price, self.inflow):
            arr.setflags(write=False)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenario_ids)

    def price_at(self, stage: int) -> np.ndarray:
        """(K, N) prices at stage t (1-based)."""
        return self.price[stage - 1]

    def inflow_at(self, stage: int) -> np.ndarray:
        """(K, N) inflow over [t, t+1), defined for t = 1..T-1."""
        return self.inflow[stage - 1]

    def cum_inflow(self, stage: int) -> np.ndarray:
        """(K, N) cumulative inflow sum_{s=1}^{t-1} R(s)."""
        if stage <= 1:
            return np.zeros((self.n_scenarios, self.n_dams))
        return self.inflow[: stage - 1].sum(axis=0)

    def atom_prob(self, filtration: Filtration, stage: int) -> np.ndarray:
        return np.array([self.p[list(a)].sum() for a in filtration.at(stage)])

    def manager_atom_of(self, stage: int, scenario: int) -> int:
        return self.manager.atom_of(stage, scenario)

    def expectation(self, per_scenario: np.ndarray) -> float:
        return float(self.p @ per_scenario)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(tree_to_json(self), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing / serialization
# ---------------------------------------------------------------------------

def _num(x):
    """Accept doubles and decimal strings."""
    if isinstance(x, bool) or x is None:
        raise BadDocument(f"expected number, got {x!r}")
    try:
        return float(x)
    except (TypeError, ValueError) as exc:
        raise BadDocument(f"expected number, got {x!r}") from exc


def parse_tree(source) -> ScenarioTree:
    """Parse and validate a scenario-tree document.

    ``source`` may be a JSON string or an already-decoded dict.  Probabilities
    must be positive and sum to one within 1e-9; they are renormalized to an
    exact unit sum afterwards so downstream expectation identities hold to
    machine precision.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise BadDocument(f"not valid JSON: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise BadDocument("top-level document must be an object")
    for key in ("stages", "dams", "scenarios", "price", "inflow",
                "full_atoms", "manager_atoms"):
        if key not in doc:
            raise BadDocument(f"missing key {key!r}")
    stages = int(doc["stages"])
    n_dams = int(doc["dams"])
    if stages < 2:
        raise BadDocument(f"need at least 2 stages, got {stages}")
    if n_dams < 1:
        raise BadDocument(f"need at least 1 dam, got {n_dams}")
    scen = doc["scenarios"]
    if not scen:
        raise BadDocument("empty scenario list")
    ids = []
    probs = []
    for entry in scen:
        if "id" not in entry or "prob" not in entry:
            raise BadDocument("scenario entries need 'id' and 'prob'")
        ids.append(str(entry["id"]))
        probs.append(_num(entry["prob"]))
    if len(set(ids)) != len(ids):
        raise BadDocument("duplicated scenario ids")
    p = np.array(probs)
    if np.any(p <= 0):
        raise BadProbabilities("scenario probabilities must be positive")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise BadProbabilities(f"probabilities sum to {p.sum()!r}, not 1")
    p = p / p.sum()
    k = len(ids)
    idx = {sid: i for i, sid in enumerate(ids)}

    def read_atoms(raw, label):
        if len(raw) != stages:
            raise BadDocument(f"{label} must have {stages} stage entries")
        out = []
        for stage_atoms in raw:
            converted = []
            for atom in stage_atoms:
                try:
                    converted.append(tuple(idx[str(s)] for s in atom))
                except KeyError as exc:
                    raise BadDocument(f"{label}: unknown scenario id {exc}") from exc
            out.append(converted)
        return out

    full = make_filtration(read_atoms(doc["full_atoms"], "full_atoms"), k)
    manager = make_filtration(read_atoms(doc["manager_atoms"], "manager_atoms"), k)

    def read_process(raw, label, n_stages):
        if len(raw) != n_stages:
            raise BadDocument(f"{label} must have {n_stages} stage entries")
        arr = np.zeros((n_stages, k, n_dams))
        for t, stage_vals in enumerate(raw):
            if len(stage_vals) != k:
                raise BadDocument(f"{label}[{t}] must have {k} scenario entries")
            for w, row in enumerate(stage_vals):
                if len(row) != n_dams:
                    raise BadDocument(f"{label}[{t}][{w}] must have {n_dams} entries")
                arr[t, w] = [_num(v) for v in row]
        return arr

    price = read_process(doc["price"], "price", stages)
    inflow = read_process(doc["inflow"], "inflow", stages - 1)

    if not is_subfiltration(manager, full):
        raise NotSubfiltration("manager filtration is not coarser than the full one")
    if full.n_atoms(stages) != k:
        raise TerminalNotSeparating("full filtration does not separate scenarios at stage T")
    if manager.n_atoms(stages) != k:
        raise TerminalNotSeparating("manager filtration does not separate scenarios at stage T")

    def check_adapted(arr, label, n_stages):
        for t in range(1, n_stages + 1):
            for j, atom in enumerate(full.at(t)):
                vals = arr[t - 1, list(atom)]
                if np.any(np.abs(vals - vals[0]) > ADAPT_TOL):
                    raise NotAdapted(
                        f"{label} at stage {t} varies inside full atom f{j}")

    check_adapted(price, "price", stages)
    check_adapted(inflow, "inflow", stages - 1)

    return ScenarioTree(stages=stages, n_dams=n_dams, scenario_ids=tuple(ids),
                        p=p, price=price, inflow=inflow, full=full, manager=manager)


def load_tree(path) -> ScenarioTree:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tree(fh.read())


def tree_to_json(tree: ScenarioTree) -> dict:
    def atoms_out(filt):
        return [[[tree.scenario_ids[w] for w in atom] for atom in filt.at(t)]
                for t in range(1, tree.stages + 1)]

    return {
        "stages": tree.stages,
        "dams": tree.n_dams,
        "scenarios": [{"id": sid, "prob": float(tree.p[i])}
                      for i, sid in enumerate(tree.scenario_ids)],
        "price": [[[float(v) for v in tree.price[t, w]]
                   for w in range(tree.n_scenarios)] for t in range(tree.stages)],
        "inflow": [[[float(v) for v in tree.inflow[t, w]]
                    for w in range(tree.n_scenarios)] for t in range(tree.stages - 1)],
        "full_atoms": atoms_out(tree.full),
        "manager_atoms": atoms_out(tree.manager),
    }


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def conditional_expectation(tree: ScenarioTree, values, stage: int) -> np.ndarray:
    """Probability-weighted average of per-scenario ``values`` on each manager
    atom at ``stage`` (returned in atom order)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (tree.n_scenarios,):
        raise ValueError(f"need one value per scenario, got shape {values.shape}")
    out = np.empty(tree.manager.n_atoms(stage))
    for j, atom in enumerate(tree.manager.at(stage)):
        sel = list(atom)
        mass = tree.p[sel].sum()
        if mass <= 0:
            raise ValueError(f"atom a{j} at stage {stage} has zero probability")
        out[j] = float(tree.p[sel] @ values[sel]) / mass
    return out


def _cond_exp_full(tree: ScenarioTree, values, stage: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.empty(tree.full.n_atoms(stage))
    for j, atom in enumerate(tree.full.at(stage)):
        sel = list(atom)
        out[j] = float(tree.p[sel] @ values[sel]) / tree.p[sel].sum()
    return out


def classify_price(tree: ScenarioTree, tol: float = 1e-9) -> list[str]:
    """Per-dam regime of S w.r.t. the manager filtration.

    Compares E[S(t+1)|G_t] against E[S(t)|G_t] on every atom; ties within
    ``tol`` count as equality, so flat processes classify as Martingale.
    """
    regimes = []
    for i in range(tree.n_dams):
        diffs = []
        for t in range(1, tree.stages):
            nxt = conditional_expectation(tree, tree.price[t, :, i], t)
            cur = conditional_expectation(tree, tree.price[t - 1, :, i], t)
            diffs.extend(nxt - cur)
        diffs = np.array(diffs)
        if np.all(np.abs(diffs) <= tol):
            regimes.append("Martingale")
        elif np.all(diffs >= -tol):
            regimes.append("Submartingale")
        elif np.all(diffs <= tol):
            regimes.append("Supermartingale")
        else:
            regimes.append("None")
    return regimes


def check_no_flood(tree: ScenarioTree, sys) -> tuple[bool, list[tuple[int, str, int, float]]]:
    """m - V(1) - sum_{s<t} R(s) >= 0 for all decision stages and scenarios.

    Returns (ok, violations) with violations as (stage, scenario_id, dam,
    headroom) tuples for every negative headroom.
    """
    if sys.n_dams != tree.n_dams:
        raise ValueError("system dimension does not match tree")
    violations = []
    for t in range(1, tree.stages):
        headroom = sys.m[None, :] - sys.v1[None, :] - tree.cum_inflow(t)
        for w in range(tree.n_scenarios):
            for i in range(tree.n_dams):
                if headroom[w, i] < -ADAPT_TOL:
                    violations.append((t, tree.scenario_ids[w], i, float(headroom[w, i])))
    return (len(violations) == 0), violations
