"""Rendering of machine reports: aligned text tables on stdout, and -- when an
output directory is given -- CSV tables plus matplotlib figures saved to files.

Every machine report carries a "kind" field (gap, solve, classify, campaign,
counts, tree); unknown kinds fall back to a generic key/value table.
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_FIG_KW = {"dpi": 130, "bbox_inches": "tight"}


def _table(rows, headers=None) -> str:
    rows = [[("" if v is None else str(v)) for v in row] for row in rows]
    if headers:
        rows = [list(headers)] + rows
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if headers and k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def _flat(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in sorted(obj.items()):
            _flat(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)):
        out.append((prefix, " ".join(str(_fmt(v)) for v in obj)))
    else:
        out.append((prefix, _fmt(obj)))
    return out


def render_text(report: dict) -> str:
    kind = report.get("kind", "generic")
    if kind == "gap":
        rows = [
            ("primal status", report["statuses"]["primal"]),
            ("dual status", report["statuses"]["dual"]),
            ("primal optimum", _fmt(report["primal_opt"])),
            ("dual optimum", _fmt(report["dual_opt"])),
            ("absolute gap", _fmt(report["abs_gap"])),
            ("relative gap", _fmt(report["rel_gap"])),
            ("gap within 1e-7", report["gap_ok"]),
        ]
        if report.get("closed_form"):
            rows.append(("closed-form regime", report["closed_form"]["regime"]))
            rows.append(("closed-form value", _fmt(report["closed_form"]["value"])))
        if report.get("interior_policy"):
            rows.append(("interior policy value", _fmt(report["interior_policy"]["objective"])))
        return _table(rows)
    if kind == "classify":
        rows = [(f"dam {i + 1} regime", r) for i, r in enumerate(report["per_dam"])]
        rows += [("overall", report["overall"]), ("no flood", report["no_flood"])]
        return _table(rows)
    if kind == "campaign":
        rows = [("seed", report["seed"]), ("cases", report["cases"]),
                ("passed", report["passed"]), ("failures", len(report["failures"]))]
        text = _table(rows)
        if report["failures"]:
            text += "\n\nfailures:\n" + _table(
                [(f["case"], f["check"], str(f.get("detail"))[:60])
                 for f in report["failures"]],
                headers=("case", "check", "detail"))
        return text
    if kind == "counts":
        rows = [(k, _fmt(v)) for k, v in report.items()
                if not isinstance(v, dict) and k != "kind"]
        return _table(rows)
    if kind == "solve":
        rows = [("side", report["side"])]
        for side in ("primal", "dual"):
            sec = report.get(side)
            if sec:
                rows.append((f"{side} status", sec["status"]))
                rows.append((f"{side} objective", _fmt(sec["objective"])))
        if report.get("cross_check"):
            rows.append(("relative gap", _fmt(report["cross_check"]["rel_gap"])))
        return _table(rows)
    return _table(_flat("", report, []))


# ---------------------------------------------------------------------------
# file outputs: delimited tables + figures
# ---------------------------------------------------------------------------

def write_outputs(report: dict, out_dir: str) -> list[str]:
    """Write summary.csv, kind-specific CSVs and PNG figures; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for key, val in _flat("", report, []):
            writer.writerow([key, val])
    paths.append(summary)
    kind = report.get("kind", "generic")
    if kind == "gap":
        paths += _gap_outputs(report, out_dir)
    elif kind == "solve":
        paths += _solve_outputs(report, out_dir)
    elif kind == "classify":
        paths += _classify_outputs(report, out_dir)
    elif kind == "campaign":
        paths += _campaign_outputs(report, out_dir)
    return paths


def _save(fig, out_dir, name) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, **_FIG_KW)
    plt.close(fig)
    return path


def _gap_outputs(report, out_dir):
    vals, labels = [], []
    for label, v in (("primal", report["primal_opt"]), ("dual", report["dual_opt"])):
        if v is not None:
            labels.append(label)
            vals.append(v)
    cf = report.get("closed_form")
    if cf:
        labels.append("closed form")
        vals.append(cf["value"])
    if not vals:
        return []
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.bar(labels, vals, color=["#39658c", "#7fa25a", "#b5893b"][: len(vals)])
    ax.set_ylabel("objective value")
    gap = report.get("rel_gap")
    ax.set_title("duality gap" + (f"  (rel = {gap:.2e})" if gap is not None else ""))
    return [_save(fig, out_dir, "gap.png")]


def _solve_outputs(report, out_dir):
    paths = []
    policy = (report.get("primal") or {}).get("policy") or \
        ((report.get("dual") or {}).get("policy_from_dual") or {}).get("policy")
    if policy:
        rows = []
        for t, atoms in sorted(policy["d"].items(), key=lambda kv: int(kv[0])):
            for atom, vals in sorted(atoms.items()):
                for i, v in enumerate(vals):
                    rows.append((int(t), atom, i + 1, v))
        csv_path = os.path.join(out_dir, "policy.csv")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "atom", "dam", "drain"])
            writer.writerows(rows)
        paths.append(csv_path)
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        stages = sorted({r[0] for r in rows})
        for stage in stages:
            pts = [(f"{r[1]}/d{r[2]}", r[3]) for r in rows if r[0] == stage]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                    label=f"stage {stage}")
        ax.set_ylabel("drain")
        ax.set_xlabel("atom / dam")
        ax.tick_params(axis="x", rotation=60, labelsize=7)
        ax.legend(fontsize=8)
        ax.set_title("optimal drain policy")
        paths.append(_save(fig, out_dir, "policy.png"))
    return paths


def _classify_outputs(report, out_dir):
    proj = report.get("projections")
    if not proj:
        return []
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    for dam, stages in sorted(proj.items()):
        xs, cur, nxt = [], [], []
        for t, atoms in sorted(stages.items(), key=lambda kv: int(kv[0])):
            for atom, pair in sorted(atoms.items()):
                xs.append(f"t{t}/{atom}")
                cur.append(pair["current"])
                nxt.append(pair["next"])
        ax.plot(xs, cur, "o-", label=f"dam {dam} E[S(t)|G]")
        ax.plot(xs, nxt, "s--", label=f"dam {dam} E[S(t+1)|G]")
    ax.tick_params(axis="x", rotation=60, labelsize=7)
    ax.set_ylabel("conditional price")
    ax.legend(fontsize=7)
    ax.set_title("price projections per information atom")
    return [_save(fig, out_dir, "classify.png")]


def _campaign_outputs(report, out_dir):
    fig, ax = plt.subplots(figsize=(3.6, 3.0))
    failed = len({f["case"] for f in report["failures"]})
    ax.bar(["passed", "failed"], [report["passed"], failed],
           color=["#557d46", "#9d3c3c"])
    ax.set_title(f"campaign seed {report['seed']}")
    return [_save(fig, out_dir, "campaign.png")]


def render_csv(report: dict) -> str:
    """Summary table as CSV text (the delimited twin of render_text)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["key", "value"])
    for key, val in _flat("", report, []):
        writer.writerow([key, val])
    return buf.getvalue()
