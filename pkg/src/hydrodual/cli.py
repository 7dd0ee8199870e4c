"""Command-line interface.

Machine output is JSON on stdout with a schema that never depends on data
values (absent sections are present and null); diagnostics go to stderr.
Exit codes: 0 success, 1 validation failure, 2 solver ended non-optimal,
3 usage error.  Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys

from . import analysis as analysis_mod
from . import report as report_mod
from .certificates import duality_gap
from .dual import (build_dual, certificate_from_solution, dual_feasible,
                   policy_from_dual)
from .model import is_feasible, load_system, primal_objective
from .primal import build_primal, extract_policy
from .solver import SolveOptions, solve, solve_dual_simplex
from .tree import (ScenarioTree, TreeValidationError, check_no_flood,
                   classify_price, conditional_expectation, load_tree,
                   tree_to_json)
from .treegen import GeneratorSpec, generate_tree

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    _sys.stdout.write(text)


def _options(args) -> SolveOptions:
    if getattr(args, "tol", None):
        return SolveOptions(feas_tol=args.tol, opt_tol=args.tol)
    return SolveOptions()


def _load_tree_or_report(path):
    try:
        return load_tree(path), None
    except TreeValidationError as exc:
        return None, {"type": type(exc).__name__, "message": str(exc)}
    except OSError as exc:
        return None, {"type": "IOError", "message": str(exc)}


def cmd_validate(args) -> int:
    tree, err = _load_tree_or_report(args.tree)
    report = {"kind": "tree", "valid": err is None, "error": err, "summary": None}
    if tree is not None:
        report["summary"] = {
            "stages": tree.stages,
            "dams": tree.n_dams,
            "scenarios": tree.n_scenarios,
            "tree_hash": tree.digest(),
            "full_atoms_per_stage": [tree.full.n_atoms(t)
                                     for t in range(1, tree.stages + 1)],
            "manager_atoms_per_stage": [tree.manager.n_atoms(t)
                                        for t in range(1, tree.stages + 1)],
        }
    _emit(report)
    return EXIT_OK if err is None else EXIT_INVALID


def cmd_solve(args) -> int:
    tree, err = _load_tree_or_report(args.tree)
    if err is not None:
        _emit({"kind": "solve", "side": args.side, "error": err,
               "primal": None, "dual": None, "cross_check": None})
        return EXIT_INVALID
    sys = load_system(args.system)
    opts = _options(args)
    report = {"kind": "solve", "side": args.side, "error": None,
              "tree_hash": tree.digest(), "system": sys.to_json(),
              "primal": None, "dual": None, "cross_check": None}
    code = EXIT_OK
    p_obj = d_obj = None
    if args.side in ("primal", "both"):
        prob, vmap = build_primal(tree, sys)
        sol = solve(prob, opts)
        sec = {"status": sol.status, "objective": None, "iterations": sol.iterations,
               "policy": None, "feasible": None}
        if sol.optimal:
            policy = extract_policy(sol, vmap)
            ok, _ = is_feasible(policy, tree, sys, tol=1e-7)
            sec.update(objective=sol.objective, policy=policy.to_json(tree),
                       feasible=bool(ok))
            p_obj = sol.objective
        else:
            code = EXIT_SOLVER
        report["primal"] = sec
    if args.side in ("dual", "both"):
        prob, dmaps = build_dual(tree, sys)
        sol = solve_dual_simplex(prob, opts)
        sec = {"status": sol.status, "objective": None, "iterations": sol.iterations,
               "certificate": None, "certificate_feasible": None,
               "policy_from_dual": None}
        if sol.optimal:
            cert = certificate_from_solution(sol, dmaps, tree, sys)
            okc, _ = dual_feasible(cert, tree, sys, tol=1e-6)
            policy, info = policy_from_dual(sol, dmaps, tree, sys)
            okp, _ = is_feasible(policy, tree, sys, tol=1e-7)
            sec.update(objective=sol.objective,
                       certificate=cert.to_json(tree, sys),
                       certificate_feasible=bool(okc),
                       policy_from_dual={
                           "policy": policy.to_json(tree),
                           "objective": primal_objective(policy, tree, sys),
                           "feasible": bool(okp),
                           "unique": info["unique"],
                       })
            d_obj = sol.objective
        else:
            code = EXIT_SOLVER
        report["dual"] = sec
    if p_obj is not None and d_obj is not None:
        gap = abs(p_obj - d_obj)
        report["cross_check"] = {
            "abs_gap": gap,
            "rel_gap": gap / max(1.0, abs(p_obj), abs(d_obj)),
        }
    _emit(report, args.out)
    return code


def cmd_gap(args) -> int:
    tree, err = _load_tree_or_report(args.tree)
    if err is not None:
        _emit({"kind": "gap", "error": err})
        return EXIT_INVALID
    sys = load_system(args.system)
    report = duality_gap(tree, sys, _options(args))
    report["error"] = None
    _emit(report, args.out)
    if report["statuses"]["primal"] != "Optimal" or \
            report["statuses"]["dual"] != "Optimal":
        return EXIT_SOLVER
    return EXIT_OK


def _projections(tree: ScenarioTree) -> dict:
    out = {}
    for i in range(tree.n_dams):
        stages = {}
        for t in range(1, tree.stages):
            cur = conditional_expectation(tree, tree.price[t - 1, :, i], t)
            nxt = conditional_expectation(tree, tree.price[t, :, i], t)
            stages[str(t)] = {f"a{a}": {"current": float(cur[a]), "next": float(nxt[a])}
                              for a in range(tree.manager.n_atoms(t))}
        out[str(i + 1)] = stages
    return out


def cmd_classify(args) -> int:
    tree, err = _load_tree_or_report(args.tree)
    if err is not None:
        _emit({"kind": "classify", "error": err})
        return EXIT_INVALID
    per_dam = classify_price(tree)
    if all(r == per_dam[0] for r in per_dam):
        overall = per_dam[0]
    elif all(r in ("Martingale", "Submartingale") for r in per_dam):
        overall = "Submartingale"
    else:
        overall = "Mixed"
    report = {"kind": "classify", "error": None, "tree_hash": tree.digest(),
              "per_dam": per_dam, "overall": overall,
              "no_flood": None, "violations": None,
              "projections": _projections(tree)}
    if args.system:
        sys = load_system(args.system)
        ok, bad = check_no_flood(tree, sys)
        report["no_flood"] = bool(ok)
        report["violations"] = [
            {"stage": t, "scenario": sid, "dam": i, "headroom": h}
            for t, sid, i, h in bad]
    _emit(report)
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = GeneratorSpec.load(args.spec)
    tree = generate_tree(spec, args.seed)
    doc = tree_to_json(tree)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _emit({"kind": "tree", "written": args.out, "tree_hash": tree.digest(),
               "stages": tree.stages, "dams": tree.n_dams,
               "scenarios": tree.n_scenarios, "seed": args.seed})
    else:
        _emit(doc)
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.run, "r", encoding="utf-8") as fh:
        run = json.load(fh)
    _sys.stdout.write(report_mod.render_text(run) + "\n")
    if args.out_dir:
        paths = report_mod.write_outputs(run, args.out_dir)
        print("\nwrote:", file=_sys.stderr)
        for p in paths:
            print(f"  {p}", file=_sys.stderr)
    return EXIT_OK


def cmd_analysis(args) -> int:
    if args.analysis_cmd == "campaign":
        report = analysis_mod.property_campaign(args.seed, args.cases,
                                                dump_dir=args.dump_dir)
        _emit(report, args.out)
        return EXIT_OK if not report["failures"] else EXIT_SOLVER
    with open(args.failure, "r", encoding="utf-8") as fh:
        failure = json.load(fh)
    if "failures" in failure:  # whole campaign report: replay everything
        records = failure["failures"]
    else:
        records = [failure]
    out = []
    for rec in records:
        out.append({"case_seed": rec["case_seed"],
                    "failures": analysis_mod.replay(rec)})
    _emit({"kind": "replay", "results": out})
    return EXIT_OK if all(not r["failures"] for r in out) else EXIT_SOLVER


def build_parser() -> _Parser:
    parser = _Parser(prog="hydrodual",
                     description="Scenario-tree LP toolkit for hydropower "
                                 "scheduling with dual cross-verification.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="parse a tree document and report invariants")
    p.add_argument("tree")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("solve", help="solve the primal and/or dual LP")
    p.add_argument("tree")
    p.add_argument("--system", required=True)
    p.add_argument("--side", choices=("primal", "dual", "both"), default="both")
    p.add_argument("--out")
    p.add_argument("--tol", type=float)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("gap", help="duality-gap report")
    p.add_argument("tree")
    p.add_argument("--system", required=True)
    p.add_argument("--out")
    p.add_argument("--tol", type=float)
    p.set_defaults(fn=cmd_gap)

    p = sub.add_parser("classify", help="price regime and no-flood check")
    p.add_argument("tree")
    p.add_argument("--system")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("generate", help="generate a synthetic tree")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("report", help="render a machine report as a table, "
                                      "optionally with CSV and figures")
    p.add_argument("run")
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("analysis", help="randomized verification campaigns")
    asub = p.add_subparsers(dest="analysis_cmd", required=True)
    pc = asub.add_parser("campaign")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--cases", type=int, default=100)
    pc.add_argument("--dump-dir")
    pc.add_argument("--out")
    pc.set_defaults(fn=cmd_analysis)
    pr = asub.add_parser("replay")
    pr.add_argument("failure")
    pr.set_defaults(fn=cmd_analysis)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except TreeValidationError as exc:
        print(f"invalid input: {exc}", file=_sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    _sys.exit(main())
