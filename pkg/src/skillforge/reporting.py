"""Accuracy tables and run reports rendered to JSON, CSV and figures."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SkillforgeError
from .history import FeedbackRecord
from .loop import EVENTS_FILE, HISTORY_FILE, STATE_FILE, SUMMARY_FILE
from .scoring import score
from .store import BASE_BRANCH, ProgramStore

log = logging.getLogger(__name__)

TABLE_TOLERANCES: tuple[float, ...] = (0.0, 0.001, 0.01, 0.05, 0.10)


def tolerance_label(tau: float) -> str:
    return f"{tau * 100:.2f}%"


def accuracy_row(label: str, pairs: Sequence[tuple[str, str]],
                 tolerances: Sequence[float] = TABLE_TOLERANCES) -> dict:
    """Percentage of (ground truth, prediction) pairs correct at each tolerance."""
    n = len(pairs)
    acc = {}
    for tau in tolerances:
        hits = sum(score(gt, pred, tau).binary for gt, pred in pairs)
        acc[tolerance_label(tau)] = round(100.0 * hits / n, 1) if n else 0.0
    return {"program": label, "n": n, "accuracy": acc}


def format_table(rows: list[dict], columns: list[str]) -> str:
    head = ["program"] + columns
    body = [[r["program"]] + [f"{r['accuracy'][c]:.1f}" for c in columns] for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(str(x).rjust(w) if i else str(x).ljust(w)
                       for i, (x, w) in enumerate(zip(line, widths)))
             for line in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_eval_outputs(rows: list[dict], columns: list[str], out_dir: str | Path) -> dict:
    from .plotting import plot_accuracy_by_tolerance

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "accuracy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["program", "n"] + columns)
        for r in rows:
            writer.writerow([r["program"], r["n"]] + [f"{r['accuracy'][c]:.1f}" for c in columns])
    doc = {"columns": columns, "rows": rows}
    (out / "accuracy.json").write_text(json.dumps(doc, indent=1) + "\n")
    plot_accuracy_by_tolerance(rows, columns, out / "accuracy.png")
    return doc


# -- run reports ----------------------------------------------------------------

def _read_jsonl(path: Path, warnings: list[str]) -> list[dict]:
    rows = []
    if not path.exists():
        warnings.append(f"missing {path.name}")
        return rows
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                warnings.append(f"{path.name}:{lineno}: unreadable line skipped")
    return rows


def build_report(run_dir: str | Path, store: ProgramStore | None = None) -> dict:
    """Summarise a run directory; damaged files produce warnings, not errors."""
    run = Path(run_dir)
    warnings: list[str] = []
    events = _read_jsonl(run / EVENTS_FILE, warnings)
    history: list[FeedbackRecord] = []
    for row in _read_jsonl(run / HISTORY_FILE, warnings):
        try:
            history.append(FeedbackRecord.from_json(row))
        except (TypeError, KeyError) as exc:
            warnings.append(f"history record skipped: {exc}")

    state = {}
    if (run / STATE_FILE).exists():
        try:
            state = json.loads((run / STATE_FILE).read_text())
        except json.JSONDecodeError:
            warnings.append(f"{STATE_FILE} is unreadable")

    baseline = next((e for e in events if e.get("event") == "baseline"), None)
    base_branch = baseline["branch"] if baseline else BASE_BRANCH
    nodes = {base_branch: {"branch": base_branch, "parent": None, "depth": 1,
                           "score": baseline["score"] if baseline else None, "iteration": 0}}
    for rec in history:
        if rec.verdict != "admitted" or not rec.candidate_branch:
            continue
        parent = nodes.get(rec.parent_branch)
        if parent is None:
            warnings.append(f"{rec.candidate_branch}: parent {rec.parent_branch} not in lineage")
            continue
        nodes[rec.candidate_branch] = {"branch": rec.candidate_branch, "parent": rec.parent_branch,
                                       "depth": parent["depth"] + 1,
                                       "score": rec.validation_score, "iteration": rec.iteration}

    iterations = []
    best_by_iter = {e["iteration"]: e.get("best_score") for e in events if e.get("event") == "iteration"}
    for rec in history:
        iterations.append({
            "iteration": rec.iteration,
            "parent": rec.parent_branch,
            "verdict": rec.verdict,
            "candidate": rec.candidate_branch,
            "proposal": None if rec.proposal is None else
                f"{rec.proposal.kind}:{rec.proposal.target_skill_name}",
            "validation_score": rec.validation_score,
            "parent_score": rec.parent_score,
            "delta": rec.delta,
            "best_score": best_by_iter.get(rec.iteration),
            "note": rec.note,
        })

    frontier = state.get("frontier", {}).get("entries", [])
    summary = {}
    if (run / SUMMARY_FILE).exists():
        try:
            summary = json.loads((run / SUMMARY_FILE).read_text())
        except json.JSONDecodeError:
            warnings.append(f"{SUMMARY_FILE} is unreadable")

    skills = []
    introduced = {}
    for rec in history:
        if rec.verdict == "admitted" and rec.proposal is not None:
            introduced.setdefault(rec.candidate_branch, rec)
    if store is not None and frontier:
        best_branch = summary.get("best_branch") or max(frontier, key=lambda e: e["score"])["branch"]
        try:
            chain = [r.branch for r in reversed(store.lineage(best_branch))]
            for name, folder in store.skills(best_branch).items():
                origin = next((b for b in chain if b in introduced
                               and introduced[b].proposal.target_skill_name == name), None)
                skills.append({
                    "skill": name,
                    "description": folder.description,
                    "program": best_branch,
                    "introduced_by": origin,
                    "iteration": introduced[origin].iteration if origin else None,
                })
        except SkillforgeError as exc:
            warnings.append(f"skill inventory unavailable: {exc}")
    elif store is None:
        warnings.append("no repository available; skill inventory omitted")

    return {
        "run_dir": str(run),
        "baseline_score": state.get("baseline_score", baseline["score"] if baseline else None),
        "best_branch": summary.get("best_branch"),
        "best_score": summary.get("best_score"),
        "stop_reason": summary.get("stop_reason") or state.get("stop_reason"),
        "frontier": frontier,
        "lineage": sorted(nodes.values(), key=lambda n: (n["depth"], n["iteration"])),
        "lineage_depth": max(n["depth"] for n in nodes.values()),
        "iterations": iterations,
        "skills": skills,
        "warnings": warnings,
    }


def render_lineage(nodes: Iterable[dict]) -> str:
    children: dict[str | None, list[dict]] = {}
    for n in nodes:
        children.setdefault(n["parent"], []).append(n)
    lines: list[str] = []

    def walk(node: dict, indent: int) -> None:
        score_txt = "" if node["score"] is None else f" ({node['score']:.3f})"
        lines.append("  " * indent + f"- {node['branch']}{score_txt}")
        for child in children.get(node["branch"], []):
            walk(child, indent + 1)

    for root in children.get(None, []):
        walk(root, 0)
    return "\n".join(lines)


def render_report_text(report: dict) -> str:
    parts = [f"run: {report['run_dir']}"]
    if report["best_branch"]:
        parts.append(f"best: {report['best_branch']} ({report['best_score']:.3f}); "
                     f"baseline {report['baseline_score']:.3f}; stop: {report['stop_reason']}")
    parts.append("\nfrontier:")
    for e in report["frontier"]:
        parts.append(f"  {e['branch']:<32} score {e['score']:.3f}  gen {e['generation']}")
    parts.append("\nlineage:")
    parts.append(render_lineage(report["lineage"]))
    parts.append("\niterations:")
    parts.append(f"  {'iter':>4}  {'verdict':<9} {'score':>6} {'delta':>7}  proposal")
    for it in report["iterations"]:
        s = "" if it["validation_score"] is None else f"{it['validation_score']:.3f}"
        d = "" if it["delta"] is None else f"{it['delta']:+.3f}"
        parts.append(f"  {it['iteration']:>4}  {it['verdict']:<9} {s:>6} {d:>7}  {it['proposal'] or '-'}")
    if report["skills"]:
        parts.append("\nskills:")
        for s in report["skills"]:
            parts.append(f"  {s['skill']:<28} from {s['introduced_by'] or '?'}")
    for w in report["warnings"]:
        parts.append(f"warning: {w}")
    return "\n".join(parts)


def write_report(report: dict, out_dir: str | Path) -> None:
    from .plotting import plot_run_scores

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    fields = ["iteration", "parent", "verdict", "candidate", "proposal",
              "validation_score", "parent_score", "delta", "best_score", "note"]
    with open(out / "iterations.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(report["iterations"])
    plot_run_scores(report["iterations"], report["baseline_score"], out / "scores.png")
