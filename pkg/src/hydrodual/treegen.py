"""Synthetic scenario-tree generator.

Trees are grown stage by stage with a given branching profile; prices follow
one of four models and inflows one of two.  Martingale/submartingale tags are
guaranteed by construction: a price that is a martingale w.r.t. the full
filtration is one w.r.t. any coarser manager filtration (tower property), and
a fixed multiplicative drift on positive prices keeps the inequality strict.

An optional coarsening rule merges sibling full atoms at chosen stages to
produce a strictly smaller manager filtration (hidden-information trees).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tree import ScenarioTree, parse_tree

PRICE_MODELS = ("martingale-binomial", "submartingale-drift",
                "supermartingale-drift", "iid-lognormal-discretized")
INFLOW_MODELS = ("nonnegative-iid", "seasonal")


@dataclass(frozen=True)
class GeneratorSpec:
    stages: int
    dams: int
    branching: tuple[int, ...]
    price_model: str = "martingale-binomial"
    inflow_model: str = "nonnegative-iid"
    drift: float = 0.08
    s0: float = 10.0
    r_max: float = 4.0
    coarsen: dict[int, int] = field(default_factory=dict)  # stage -> group size

    def __post_init__(self):
        if self.stages < 2:
            raise ValueError("need at least 2 stages")
        if len(self.branching) != self.stages - 1:
            raise ValueError(f"branching must have {self.stages - 1} entries")
        if any(b < 1 for b in self.branching):
            raise ValueError("branching factors must be >= 1")
        if self.price_model not in PRICE_MODELS:
            raise ValueError(f"unknown price model {self.price_model!r}")
        if self.inflow_model not in INFLOW_MODELS:
            raise ValueError(f"unknown inflow model {self.inflow_model!r}")
        for stage, g in self.coarsen.items():
            if not 1 <= stage < self.stages:
                raise ValueError(f"cannot coarsen stage {stage}")
            if g < 2:
                raise ValueError("coarsening group size must be >= 2")

    @classmethod
    def from_json(cls, doc: dict) -> "GeneratorSpec":
        return cls(
            stages=int(doc["stages"]), dams=int(doc["dams"]),
            branching=tuple(int(b) for b in doc["branching"]),
            price_model=doc.get("price_model", "martingale-binomial"),
            inflow_model=doc.get("inflow_model", "nonnegative-iid"),
            drift=float(doc.get("drift", 0.08)),
            s0=float(doc.get("s0", 10.0)),
            r_max=float(doc.get("r_max", 4.0)),
            coarsen={int(k): int(v) for k, v in doc.get("coarsen", {}).items()},
        )

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def generate_tree(spec: GeneratorSpec, seed: int) -> ScenarioTree:
    """Deterministic function of (spec, seed); output passes full validation."""
    rng = np.random.default_rng(seed)
    T, N = spec.stages, spec.dams
    k_total = int(np.prod(spec.branching))

    # nodes at stage t are contiguous scenario blocks; node -> (lo, hi)
    blocks = [[(0, k_total)]]
    for t in range(1, T):
        prev = blocks[-1]
        nxt = []
        for lo, hi in prev:
            b = spec.branching[t - 1]
            width = (hi - lo) // b
            nxt.extend((lo + c * width, lo + (c + 1) * width) for c in range(b))
        blocks.append(nxt)

    # probabilities: per-node child weights, scenario probability = path product
    prob = np.ones(k_total)
    child_weights: list[list[np.ndarray]] = []
    for t in range(1, T):
        stage_w = []
        for _ in blocks[t - 1]:
            b = spec.branching[t - 1]
            w = rng.uniform(0.5, 1.5, size=b)
            stage_w.append(w / w.sum())
        child_weights.append(stage_w)
    for t in range(1, T):
        for node, (lo, hi) in enumerate(blocks[t - 1]):
            b = spec.branching[t - 1]
            width = (hi - lo) // b
            for c in range(b):
                prob[lo + c * width: lo + (c + 1) * width] *= child_weights[t - 1][node][c]

    # price per (stage, node, dam)
    price_nodes = [np.empty((len(stage), N)) for stage in blocks]
    price_nodes[0][0] = spec.s0 * rng.uniform(0.8, 1.2, size=N)
    if spec.price_model == "iid-lognormal-discretized":
        mu = np.log(spec.s0)
        for t in range(T):
            for node in range(len(blocks[t])):
                price_nodes[t][node] = np.exp(rng.normal(mu, 0.25, size=N))
    else:
        if spec.price_model == "martingale-binomial":
            growth = 1.0
        elif spec.price_model == "submartingale-drift":
            growth = 1.0 + spec.drift
        else:
            growth = 1.0 - spec.drift
        for t in range(1, T):
            for node, (lo, hi) in enumerate(blocks[t - 1]):
                b = spec.branching[t - 1]
                width = (hi - lo) // b
                q = child_weights[t - 1][node]
                raw = rng.uniform(0.5, 1.5, size=(b, N))
                factors = raw / (q @ raw)[None, :]  # sum_c q_c f_c = 1 per dam
                parent_price = price_nodes[t - 1][node]
                for c in range(b):
                    child = blocks[t].index((lo + c * width, lo + (c + 1) * width))
                    price_nodes[t][child] = growth * factors[c] * parent_price

    # inflow per (stage 1..T-1, node, dam), always >= 0
    inflow_nodes = [np.empty((len(blocks[t - 1]), N)) for t in range(1, T)]
    for t in range(1, T):
        for node in range(len(blocks[t - 1])):
            base = rng.uniform(0.0, spec.r_max, size=N)
            if spec.inflow_model == "seasonal":
                season = 1.0 + 0.5 * np.sin(2.0 * np.pi * t / 4.0)
                base = 0.5 * spec.r_max * season + 0.5 * base
            inflow_nodes[t - 1][node] = base

    ids = [f"w{w + 1}" for w in range(k_total)]
    full_atoms = [[ids[lo:hi] for lo, hi in stage] for stage in blocks]

    manager_atoms = []
    for t in range(1, T + 1):
        stage = [list(a) for a in full_atoms[t - 1]]
        if t in spec.coarsen and t < T:
            g = spec.coarsen[t]
            merged = []
            # group siblings only: blocks under one parent stay contiguous
            by_parent: dict[int, list[int]] = {}
            for node, (lo, hi) in enumerate(blocks[t - 1]):
                parent = next(p for p, (plo, phi) in enumerate(blocks[t - 2])
                              if plo <= lo and hi <= phi) if t > 1 else 0
                by_parent.setdefault(parent, []).append(node)
            for parent in sorted(by_parent):
                nodes = by_parent[parent]
                for c in range(0, len(nodes), g):
                    group = nodes[c:c + g]
                    merged.append(sum((stage[nd] for nd in group), []))
            stage = merged
        manager_atoms.append(stage)

    doc = {
        "stages": T,
        "dams": N,
        "scenarios": [{"id": ids[w], "prob": float(prob[w])} for w in range(k_total)],
        "price": [[[float(price_nodes[t][_node_of(blocks[t], w)][i]) for i in range(N)]
                   for w in range(k_total)] for t in range(T)],
        "inflow": [[[float(inflow_nodes[t - 1][_node_of(blocks[t - 1], w)][i]) for i in range(N)]
                    for w in range(k_total)] for t in range(1, T)],
        "full_atoms": full_atoms,
        "manager_atoms": manager_atoms,
    }
    return parse_tree(doc)


def _node_of(stage_blocks, scenario: int) -> int:
    for node, (lo, hi) in enumerate(stage_blocks):
        if lo <= scenario < hi:
            return node
    raise AssertionError("scenario outside every block")
