"""Scenario-tree stochastic programming toolkit for hydropower scheduling.

Builds, solves and cross-verifies the revenue-maximization LP of a dam
manager with partial information, together with its conjugate dual, for
three system variants (individual turbine caps, one shared production cap,
and a two-dam cascade with controlled transfer and spill).
"""

from .tree import (
    Filtration,
    ScenarioTree,
    TreeValidationError,
    BadProbabilities,
    NotAdapted,
    NotSubfiltration,
    parse_tree,
    load_tree,
    tree_to_json,
    is_subfiltration,
    conditional_expectation,
    classify_price,
    check_no_flood,
)
from .treegen import GeneratorSpec, generate_tree
from .model import (
    DamSystem,
    DrainPolicy,
    Individual,
    TotalCap,
    Cascade,
    load_system,
    water_levels,
    is_feasible,
    primal_objective,
)
from .solver import (
    LpProblem,
    LpSolution,
    SolveOptions,
    solve,
    solve_dual_simplex,
    brute_force,
    write_lp_text,
    read_lp_text,
)
from .primal import VariableMap, build_primal, expand_counts, extract_policy
from .dual import (
    DualCertificate,
    constant_C,
    build_dual,
    dual_objective,
    dual_feasible,
    policy_from_dual,
)
from .lagrange import lagrange_value, sup_over_policy, weak_duality_check
from .certificates import closed_form_certificate, duality_gap, interior_policy
from .analysis import verify_counts, property_campaign

__version__ = "0.1.0"
