import json
from pathlib import Path

import numpy as np
import pytest

from hydrodual.model import DamSystem, Individual
from hydrodual.tree import load_tree, parse_tree

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def paper_tree():
    return load_tree(FIXTURES / "paper_example.json")


@pytest.fixture(scope="session")
def paper_tree_n2():
    return load_tree(FIXTURES / "paper_example_n2.json")


@pytest.fixture
def paper_doc():
    with open(FIXTURES / "paper_example.json", encoding="utf-8") as fh:
        return json.load(fh)


def make_system(n=1, b=5.0, m=100.0, v1=10.0, alpha=1.0, variant=None):
    return DamSystem(n_dams=n,
                     b=np.full(n, float(b)), m=np.full(n, float(m)),
                     v1=np.full(n, float(v1)), alpha=alpha,
                     variant=variant or Individual())


@pytest.fixture
def sys1(paper_tree):
    return make_system(1, alpha=1.0)


def single_scenario_tree(t_stages=2, price=None, inflow=None, n=1):
    """K=1 chain tree; price is a list of per-stage scalars (or per-dam lists)."""
    price = price if price is not None else [1.0] * t_stages
    inflow = inflow if inflow is not None else [0.0] * (t_stages - 1)

    def vec(x):
        return list(x) if isinstance(x, (list, tuple)) else [float(x)] * n

    doc = {
        "stages": t_stages, "dams": n,
        "scenarios": [{"id": "w1", "prob": 1.0}],
        "price": [[vec(price[t])] for t in range(t_stages)],
        "inflow": [[vec(inflow[t])] for t in range(t_stages - 1)],
        "full_atoms": [[["w1"]] for _ in range(t_stages)],
        "manager_atoms": [[["w1"]] for _ in range(t_stages)],
    }
    return parse_tree(doc)


def two_scenario_tree(price1, price2, p=(0.5, 0.5), inflow1=None, inflow2=None,
                      blind_stages=(), n=1):
    """T-stage tree splitting at stage 2; manager optionally blind at the
    listed stages (atoms stay merged there)."""
    t_stages = len(price1)
    inflow1 = inflow1 if inflow1 is not None else [0.0] * (t_stages - 1)
    inflow2 = inflow2 if inflow2 is not None else [0.0] * (t_stages - 1)

    def vec(x):
        return list(x) if isinstance(x, (list, tuple)) else [float(x)] * n

    full = [[["w1", "w2"]]] + [[["w1"], ["w2"]] for _ in range(t_stages - 1)]
    manager = [[["w1", "w2"]]]
    for t in range(2, t_stages + 1):
        if t in blind_stages and t < t_stages:
            manager.append([["w1", "w2"]])
        else:
            manager.append([["w1"], ["w2"]])
    doc = {
        "stages": t_stages, "dams": n,
        "scenarios": [{"id": "w1", "prob": p[0]}, {"id": "w2", "prob": p[1]}],
        "price": [[vec(price1[t]), vec(price2[t])] for t in range(t_stages)],
        "inflow": [[vec(inflow1[t]), vec(inflow2[t])] for t in range(t_stages - 1)],
        "full_atoms": full,
        "manager_atoms": manager,
    }
    return parse_tree(doc)


def random_nonneg_certificate(tree, sys, seed=0, scale=2.0):
    """Arbitrary (not feasible) nonnegative certificate for evaluators."""
    from hydrodual.dual import DualCertificate
    rng = np.random.default_rng(seed)
    cert = DualCertificate.zeros(tree, sys)
    fams = [cert.gamma, cert.v, cert.lam, cert.w]
    if sys.is_cascade:
        fams += [cert.gamma_transfer, cert.v_transfer,
                 cert.gamma_spill, cert.v_spill]
    for fam in fams:
        for arr in fam:
            arr[...] = rng.uniform(0.0, scale, size=arr.shape)
    return cert
