"""Command-line entry point: init, split, evolve, eval, score, merge, report.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .agents import LLMClassifier
from .config import BackendSettings, RunConfig
from .data import (
    DEFAULT_CATEGORIES,
    HashClassifier,
    categorize,
    load_jsonl,
    split_manifest,
    splits_from_files,
    stratified_split,
    write_splits,
)
from .errors import ConfigError, SetupError, SkillforgeError
from .loop import SUMMARY_FILE, EvolutionLoop, evaluate_program
from .merge import RunLibrary, merge_unique
from .reporting import (
    TABLE_TOLERANCES,
    accuracy_row,
    build_report,
    format_table,
    render_report_text,
    tolerance_label,
    write_eval_outputs,
    write_report,
)
from .scoring import TOLERANCES, get_scorer, multi_tolerance_score
from .store import BASE_BRANCH, PROGRAM_PREFIX, ProgramStore, utc_now

log = logging.getLogger("skillforge")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
RUN_FILE = "run.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _clock():
    """UTC timestamps, pinned when SOURCE_DATE_EPOCH is set for reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return utc_now
    try:
        stamp = datetime.fromtimestamp(int(epoch), timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    except ValueError as exc:
        raise ConfigError(f"SOURCE_DATE_EPOCH must be an integer: {epoch!r}") from exc
    git_date = stamp.replace("T", " ").rstrip("Z") + " +0000"
    os.environ.setdefault("GIT_AUTHOR_DATE", git_date)
    os.environ.setdefault("GIT_COMMITTER_DATE", git_date)
    return lambda: stamp


def _open_store(repo: str | Path) -> ProgramStore:
    try:
        return ProgramStore.open(repo, clock=_clock())
    except SetupError as exc:
        raise ConfigError(str(exc)) from exc


def _require_branch(store: ProgramStore, branch: str) -> str:
    if not branch.startswith(PROGRAM_PREFIX):
        branch = PROGRAM_PREFIX + branch
    if not store.backend.branch_exists(branch):
        raise ConfigError(f"no such program branch: {branch}")
    return branch


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# -- init ---------------------------------------------------------------------

def cmd_init(args) -> int:
    prompt = args.system_prompt
    if args.system_prompt_file:
        prompt = Path(args.system_prompt_file).read_text()
    store = _open_store(args.repo)
    try:
        ref = store.init_base(prompt or "", args.tool or [], args.source_branch)
    except SetupError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"created {ref.branch}")
    return EXIT_OK


# -- split --------------------------------------------------------------------

def cmd_split(args) -> int:
    examples = load_jsonl(args.input)
    classifier = args.classifier
    if classifier == "auto":
        classifier = "keep" if examples and all(e.category for e in examples) else "hash"
    if classifier == "hash":
        examples = categorize(examples, HashClassifier(args.categories))
    elif classifier == "llm":
        if not args.config:
            raise ConfigError("--classifier llm needs --config with a backend section")
        import yaml

        data = yaml.safe_load(Path(args.config).read_text()) or {}
        settings = BackendSettings.from_dict(data.get("backend"))
        labels = [s.strip() for s in (args.labels or "").split(",") if s.strip()]
        examples = categorize(examples, LLMClassifier(settings.chat_backend(), labels))
    elif not all(e.category for e in examples):
        raise ConfigError("--classifier keep needs a category on every row")
    splits = stratified_split(examples, args.train_fraction, args.validation_fraction, args.seed)
    manifest = split_manifest(splits, args.seed, args.train_fraction, args.validation_fraction,
                              args.categories if classifier == "hash" else None)
    manifest["classifier"] = classifier
    write_splits(args.out, splits, manifest)
    print(json.dumps(manifest["sizes"]))
    return EXIT_OK


# -- evolve -------------------------------------------------------------------

def cmd_evolve(args) -> int:
    overrides = {
        "repo": args.repo, "run_dir": args.run_dir, "scorer": args.scorer,
        "loop.capacity": args.k, "loop.max_iterations": args.iterations,
        "loop.failure_threshold": args.threshold, "loop.batch_size": args.batch_size,
        "loop.mode": args.mode, "loop.seed": args.seed, "loop.workers": args.workers,
        "loop.epochs": args.epochs, "loop.patience": args.patience,
    }
    cfg = RunConfig.load(args.config, overrides)
    store = _open_store(cfg.repo)
    if not store.backend.branch_exists(BASE_BRANCH):
        raise ConfigError(f"{BASE_BRANCH} not found; run `skillforge init` first")
    splits = splits_from_files(cfg.train, cfg.validation, cfg.test)
    executor, proposer, builder = cfg.build_roles()
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    (cfg.run_dir / RUN_FILE).write_text(json.dumps(cfg.to_json(), indent=1, sort_keys=True) + "\n")
    loop = EvolutionLoop(store, splits, executor, proposer, builder, cfg.loop,
                         run_dir=cfg.run_dir, scorer=get_scorer(cfg.scorer), clock=_clock())
    loop.run()
    sys.stdout.write((cfg.run_dir / SUMMARY_FILE).read_text())
    return EXIT_OK


# -- eval ---------------------------------------------------------------------

def _parse_tolerances(text: str | None) -> list[float]:
    if not text:
        return list(TABLE_TOLERANCES)
    try:
        taus = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad tolerance list: {text!r}") from exc
    if not taus or any(t < 0 for t in taus):
        raise ConfigError("tolerances must be non-negative")
    return taus


def _load_predictions(path: str) -> dict[str, str]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                preds[str(row["id"])] = str(row["prediction"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: expected {{id, prediction}}: {exc}") from exc
    return preds


def cmd_eval(args) -> int:
    if not args.predictions and not args.program:
        raise ConfigError("give --program and/or --predictions")
    examples = load_jsonl(args.split)
    if not examples:
        raise ConfigError(f"{args.split} has no examples")
    taus = _parse_tolerances(args.tolerances)
    columns = [tolerance_label(t) for t in taus]
    out = Path(args.out)
    rows = []

    for item in args.predictions or []:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = Path(item).stem, item
        preds = _load_predictions(path)
        pairs = [(ex.ground_truth, preds.get(ex.id, "")) for ex in examples]
        rows.append(accuracy_row(label, pairs, taus))

    if args.program:
        if not args.config:
            raise ConfigError("--program needs --config to build the executor")
        cfg = RunConfig.load(args.config, {"repo": args.repo})
        store = _open_store(cfg.repo)
        branches = [_require_branch(store, b) for b in args.program]
        executor, _, _ = cfg.build_roles()
        for branch in branches:
            program = store.load(branch)
            if cfg.loop.materialize:
                program.workdir = store.export(branch, out / "workspaces" / branch[len(PROGRAM_PREFIX):])
            result, _ = evaluate_program(program, examples, executor,
                                         workers=cfg.loop.workers,
                                         attempts=cfg.loop.execute_attempts,
                                         answer_delimiter=cfg.loop.answer_delimiter)
            label = branch[len(PROGRAM_PREFIX):]
            pred_by_id = {r["id"]: r["prediction"] for r in result.rows}
            out.mkdir(parents=True, exist_ok=True)
            with open(out / f"predictions-{label}.jsonl", "w", encoding="utf-8") as fh:
                for ex in examples:
                    fh.write(json.dumps({"id": ex.id, "prediction": pred_by_id[ex.id]}) + "\n")
            rows.append(accuracy_row(label, [(ex.ground_truth, pred_by_id[ex.id]) for ex in examples], taus))

    write_eval_outputs(rows, columns, out)
    print(format_table(rows, columns))
    return EXIT_OK


# -- score --------------------------------------------------------------------

def cmd_score(args) -> int:
    fh = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    rows = []
    with fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                gt = raw["ground_truth"] if "ground_truth" in raw else raw["answer"]
                pred = raw["prediction"]
                mts = multi_tolerance_score(str(gt), str(pred))
                rows.append({"index": index, "ground_truth": str(gt), "prediction": str(pred),
                             **mts.to_dict(), "error": None})
            except Exception as exc:  # a bad row is reported, never fatal
                rows.append({"index": index, "ground_truth": None, "prediction": None,
                             "weighted": None, "per_tolerance": None, "is_failure": None,
                             "error": f"{type(exc).__name__}: {exc}"})
    scored = [r for r in rows if r["error"] is None]
    n = len(scored)
    keys = list(scored[0]["per_tolerance"]) if scored else [f"{t:g}" for t in TOLERANCES]
    doc = {
        "n": n,
        "errors": len(rows) - n,
        "accuracy": {k: (100.0 * sum(r["per_tolerance"][k] for r in scored) / n if n else None)
                     for k in keys},
        "mean_weighted": sum(r["weighted"] for r in scored) / n if n else None,
        "failures": sum(r["is_failure"] for r in scored),
        "rows": rows,
    }
    _emit(doc, args.output)
    return EXIT_OK


# -- merge --------------------------------------------------------------------

def _run_info(run_dir: Path) -> tuple[dict, dict]:
    try:
        summary = json.loads((run_dir / SUMMARY_FILE).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{run_dir}: no readable {SUMMARY_FILE}; has the run finished?") from exc
    run = {}
    if (run_dir / RUN_FILE).exists():
        run = json.loads((run_dir / RUN_FILE).read_text())
    return summary, run


def cmd_merge(args) -> int:
    libraries = []
    target_repo = args.repo
    for path in args.run:
        run_dir = Path(path)
        summary, run = _run_info(run_dir)
        repo = run.get("repo") or args.repo
        if repo is None:
            raise ConfigError(f"{run_dir}: repository unknown; pass --repo")
        target_repo = target_repo or repo
        store = _open_store(repo)
        branch = _require_branch(store, summary["best_branch"])
        libraries.append(RunLibrary(run_dir.name, summary["best_score"], store.skills(branch)))
    result = merge_unique(libraries, args.threshold)
    target = _open_store(target_repo)
    base = target.ref(BASE_BRANCH)
    ref = target.create_child(base, list(result.skills.values()), "skill", 0, name=args.name)
    doc = {"branch": ref.branch, "skills": result.report()}
    _emit(doc, args.output)
    if args.output:
        print(f"wrote {ref.branch} with {len(result.skills)} skills")
    return EXIT_OK


# -- report -------------------------------------------------------------------

def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    repo = args.repo
    if repo is None and (run_dir / RUN_FILE).exists():
        try:
            repo = json.loads((run_dir / RUN_FILE).read_text()).get("repo")
        except json.JSONDecodeError:
            log.warning("%s is unreadable", RUN_FILE)
    store = None
    if repo:
        try:
            store = ProgramStore.open(repo)
        except SetupError as exc:
            log.warning("repository unavailable: %s", exc)
    report = build_report(run_dir, store)
    write_report(report, args.out or run_dir / "report")
    if args.json:
        _emit(report, None)
    else:
        print(render_report_text(report))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skillforge", description="Evolve agent skill libraries from failures.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("init", help="create the base program branch")
    s.add_argument("--repo", default=".")
    s.add_argument("--system-prompt", default="")
    s.add_argument("--system-prompt-file")
    s.add_argument("--tool", action="append", help="allowed tool (repeatable)")
    s.add_argument("--source-branch")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("split", help="categorise and split a JSON-lines dataset")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--train-fraction", type=float, default=0.10)
    s.add_argument("--validation-fraction", type=float, default=0.07)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--categories", "-K", type=int, default=DEFAULT_CATEGORIES)
    s.add_argument("--classifier", choices=["auto", "hash", "llm", "keep"], default="auto")
    s.add_argument("--labels", help="comma-separated label set for the llm classifier")
    s.add_argument("--config", help="YAML with a backend section (llm classifier)")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("evolve", help="run the evolution loop")
    s.add_argument("--config", required=True)
    s.add_argument("--repo")
    s.add_argument("--run-dir")
    s.add_argument("--scorer")
    s.add_argument("--k", type=int, help="frontier capacity")
    s.add_argument("--iterations", type=int)
    s.add_argument("--threshold", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--mode", choices=["skill", "prompt"])
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--epochs", type=float)
    s.add_argument("--patience", type=int)
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("eval", help="accuracy table across tolerances")
    s.add_argument("--split", required=True, help="JSON-lines examples")
    s.add_argument("--program", action="append", help="program branch to execute (repeatable)")
    s.add_argument("--predictions", action="append", metavar="LABEL=PATH",
                   help="JSON-lines {id, prediction} file (repeatable)")
    s.add_argument("--config")
    s.add_argument("--repo")
    s.add_argument("--tolerances", help="comma-separated relative tolerances")
    s.add_argument("--out", default="eval")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("score", help="grade ground truth/prediction pairs")
    s.add_argument("--input", default="-", help="JSON-lines with ground_truth and prediction")
    s.add_argument("--output")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("merge", help="merge the best skills of several runs")
    s.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    s.add_argument("--repo", help="target repository (defaults to the first run's)")
    s.add_argument("--name", default="merge-unique")
    s.add_argument("--threshold", type=float, default=0.8)
    s.add_argument("--output")
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("report", help="summarise a run directory")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--repo")
    s.add_argument("--out")
    s.add_argument("--json", action="store_true", help="print JSON instead of tables")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"skillforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"skillforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"skillforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SkillforgeError, OSError) as exc:
        print(f"skillforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
