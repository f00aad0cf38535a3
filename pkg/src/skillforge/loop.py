"""The evolution loop: select a parent, mine failures, mutate, evaluate, admit."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

from .agents import (
    Executor,
    Failure,
    Proposer,
    SkillBuilder,
    build_prompt,
    build_skill,
    execute,
    propose,
)
from .agents.types import ExecutionTrace
from .data import DatasetSplits, Example, SamplerState, sample_batch
from .errors import BuildError, ConfigError, ContractViolation, NamingError, ProposalError
from .frontier import Frontier
from .history import FeedbackHistory, FeedbackRecord, Verdict
from .scoring import Scorer, multi_tolerance_score, weighted_scorer
from .store import BASE_BRANCH, LoadedProgram, ProgramRef, ProgramStore, utc_now

log = logging.getLogger(__name__)

STATE_FILE = "state.json"
EVENTS_FILE = "events.jsonl"
HISTORY_FILE = "history.jsonl"
SUMMARY_FILE = "summary.json"


@dataclass
class LoopConfig:
    max_iterations: int = 20
    capacity: int = 3
    failure_threshold: float = 0.8
    batch_size: int = 8
    epochs: float | None = 1.5
    mode: Literal["skill", "prompt"] = "skill"
    patience: int = 5
    workers: int = 4
    seed: int = 0
    max_failures: int = 8
    selection: Literal["round_robin", "best"] = "round_robin"
    history_budget: int = 4000
    execute_attempts: int = 3
    answer_delimiter: str | None = None
    materialize: bool = False

    def __post_init__(self):
        checks = [
            (self.max_iterations >= 1, "max_iterations must be >= 1"),
            (self.capacity >= 1, "capacity must be >= 1"),
            (0 < self.failure_threshold <= 1, "failure_threshold must lie in (0, 1]"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs is None or self.epochs >= 0, "epochs must be >= 0"),
            (self.mode in ("skill", "prompt"), "mode must be 'skill' or 'prompt'"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.max_failures >= 1, "max_failures must be >= 1"),
            (self.selection in ("round_robin", "best"), "selection must be 'round_robin' or 'best'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, data: dict) -> "LoopConfig":
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown loop settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class IterationOutcome:
    iteration: int
    parent: str
    verdict: Verdict
    candidate: str | None = None
    validation_score: float | None = None
    evicted: str | None = None
    failures: int = 0
    note: str = ""

    def __post_init__(self):
        if (self.verdict == "skipped") != (self.candidate is None):
            raise ContractViolation("skipped iff there is no candidate")


@dataclass
class EvalResult:
    branch: str
    mean: float
    rows: list[dict] = field(default_factory=list)


def evaluate_program(
    program: LoadedProgram,
    examples: Sequence[Example],
    executor: Executor,
    scorer: Scorer = weighted_scorer,
    workers: int = 1,
    attempts: int = 3,
    answer_delimiter: str | None = None,
) -> tuple[EvalResult, list[ExecutionTrace]]:
    """Run and score every example; an execution error scores 0."""
    if not examples:
        raise ContractViolation("evaluation needs at least one example")

    def one(ex: Example) -> ExecutionTrace:
        return execute(program, ex, executor, attempts, answer_delimiter)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one, examples))
    else:
        traces = [one(ex) for ex in examples]

    rows = []
    for ex, trace in zip(examples, traces):
        s = 0.0 if trace.failed else float(scorer(ex.ground_truth, trace.predicted_answer))
        rows.append({"id": ex.id, "prediction": trace.predicted_answer, "score": s,
                     "error": trace.error})
    mean = sum(r["score"] for r in rows) / len(rows)
    return EvalResult(program.ref.branch, mean, rows), traces


class EvolutionLoop:
    def __init__(
        self,
        store: ProgramStore,
        splits: DatasetSplits,
        executor: Executor,
        proposer: Proposer,
        builder: SkillBuilder,
        config: LoopConfig,
        run_dir: str | Path | None = None,
        scorer: Scorer = weighted_scorer,
        clock: Callable[[], str] = utc_now,
    ):
        if not splits.validation:
            raise ConfigError("the validation split is empty")
        if not any(splits.train_pools.values()):
            raise ConfigError("the training split is empty")
        self.store = store
        self.splits = splits
        self.executor = executor
        self.proposer = proposer
        self.builder = builder
        self.config = config
        self.scorer = scorer
        self.clock = clock
        self.run_dir = Path(run_dir) if run_dir else None
        if self.run_dir:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        self.history = (FeedbackHistory.load(self.run_dir / HISTORY_FILE)
                        if self.run_dir else FeedbackHistory())
        self.frontier = Frontier(config.capacity, selection=config.selection)
        self.sampler = SamplerState.with_epoch_budget(splits, config.seed, config.epochs)
        self.next_iteration = 1
        self.stale = 0
        self.baseline_score: float | None = None
        self.stop_reason: str | None = None
        self._load_state()

    # -- persistence ------------------------------------------------------------

    def _path(self, name: str) -> Path | None:
        return self.run_dir / name if self.run_dir else None

    def _event(self, kind: str, **payload) -> None:
        path = self._path(EVENTS_FILE)
        if path is None:
            return
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"event": kind, "ts": self.clock(), **payload}, sort_keys=True) + "\n")

    def _save_state(self) -> None:
        path = self._path(STATE_FILE)
        if path is None:
            return
        state = {
            "next_iteration": self.next_iteration,
            "stale": self.stale,
            "baseline_score": self.baseline_score,
            "stop_reason": self.stop_reason,
            "frontier": self.frontier.to_json(),
            "sampler": self.sampler.to_json(),
            "config": asdict(self.config),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, indent=1, sort_keys=True) + "\n")
        tmp.replace(path)

    def _load_state(self) -> None:
        path = self._path(STATE_FILE)
        if path is None or not path.exists():
            return
        state = json.loads(path.read_text())
        self.next_iteration = state["next_iteration"]
        self.stale = state["stale"]
        self.baseline_score = state["baseline_score"]
        self.stop_reason = state.get("stop_reason")
        self.frontier = Frontier.from_json(state["frontier"])
        self.sampler = SamplerState.from_json(state["sampler"])
        if self.history.records and self.history.records[-1].iteration >= self.next_iteration:
            # the history write landed but the checkpoint did not; skip past it
            self.next_iteration = self.history.records[-1].iteration + 1
        log.info("resuming at iteration %d", self.next_iteration)

    # -- loop steps ---------------------------------------------------------------

    def _load_program(self, ref: ProgramRef) -> LoadedProgram:
        program = self.store.load(ref)
        if self.config.materialize and self.run_dir:
            dest = self.run_dir / "workspaces" / ref.suffix
            if not dest.exists():
                self.store.export(ref, dest)
            program.workdir = dest
        return program

    def evaluate(self, ref: ProgramRef, examples: Sequence[Example]) -> float:
        program = self._load_program(ref)
        result, _ = evaluate_program(program, examples, self.executor, self.scorer,
                                     self.config.workers, self.config.execute_attempts,
                                     self.config.answer_delimiter)
        if self.run_dir:
            out = self.run_dir / "evals" / f"{ref.suffix}.jsonl"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in result.rows))
        return result.mean

    def collect_failures(self, parent: ProgramRef, batch: Sequence[Example]) -> list[Failure]:
        """Examples in ``batch`` whose score under ``parent`` falls below the threshold."""
        program = self._load_program(parent)
        result, traces = evaluate_program(program, batch, self.executor, self.scorer,
                                          self.config.workers, self.config.execute_attempts,
                                          self.config.answer_delimiter)
        failures = []
        for ex, trace, row in zip(batch, traces, result.rows):
            if row["score"] < self.config.failure_threshold:
                detail = None if trace.failed else multi_tolerance_score(ex.ground_truth, trace.predicted_answer)
                failures.append(Failure(ex, trace, row["score"], detail))
        return failures

    def baseline(self) -> ProgramRef:
        base = self.store.ref(BASE_BRANCH)
        score = self.evaluate(base, self.splits.validation)
        base = self.store.record_evaluation(base, score)
        self.frontier.try_admit(base, score)
        self.store.tag_frontier(base)
        self.baseline_score = score
        self._event("baseline", branch=base.branch, score=score)
        self._save_state()
        log.info("baseline %s scored %.4f", base.branch, score)
        return base

    def _score_of(self, branch: str) -> float | None:
        for e in self.frontier.entries:
            if e.ref.branch == branch:
                return e.score
        return None

    def run_iteration(self, t: int) -> IterationOutcome:
        cfg = self.config
        parent = self.frontier.select_parent(t)
        parent_score = self._score_of(parent.branch)
        batch = sample_batch(self.splits, self.sampler, cfg.batch_size)
        failures = self.collect_failures(parent, batch)

        def finish(outcome: IterationOutcome, proposal=None) -> IterationOutcome:
            self.history.append(FeedbackRecord(
                iteration=t,
                parent_branch=parent.branch,
                verdict=outcome.verdict,
                proposal=proposal,
                validation_score=outcome.validation_score,
                parent_score=parent_score if outcome.validation_score is not None else None,
                candidate_branch=outcome.candidate,
                note=outcome.note,
            ))
            return outcome

        if not failures:
            return finish(IterationOutcome(t, parent.branch, "skipped", note="no failures"))

        failures.sort(key=lambda f: f.score)  # largest deficit first; sort is stable
        failures = failures[:cfg.max_failures]
        program = self._load_program(parent)
        inventory = {name: s.description for name, s in program.skills.items()}
        forbidden = [ex.ground_truth for ex in batch]
        try:
            proposal = propose(failures, self.history.render_for_proposer(cfg.history_budget),
                               self.proposer, inventory, cfg.mode, program.config.system_prompt)
        except ProposalError as exc:
            log.warning("iteration %d: proposal rejected: %s", t, exc)
            return finish(IterationOutcome(t, parent.branch, "skipped", failures=len(failures),
                                           note=f"proposal failed: {exc}"))
        try:
            if cfg.mode == "prompt":
                mutation = build_prompt(program, proposal, self.builder, forbidden)
            else:
                mutation = build_skill(program, proposal, self.builder, forbidden)
            child = self.store.create_child(parent, mutation, cfg.mode, t)
        except (BuildError, ContractViolation, NamingError) as exc:
            log.warning("iteration %d: build failed: %s", t, exc)
            return finish(IterationOutcome(t, parent.branch, "skipped", failures=len(failures),
                                           note=f"build failed: {exc}"), proposal)

        score = self.evaluate(child, self.splits.validation)
        child = self.store.record_evaluation(child, score)
        result = self.frontier.try_admit(child, score)
        if result.admitted:
            self.store.tag_frontier(child)
            if result.evicted is not None:
                self.store.untag_frontier(result.evicted)
            outcome = IterationOutcome(t, parent.branch, "admitted", child.branch, score,
                                       result.evicted.branch if result.evicted else None,
                                       len(failures))
        else:
            self.store.delete_program(child)
            outcome = IterationOutcome(t, parent.branch, "rejected", child.branch, score,
                                       failures=len(failures))
        log.info("iteration %d: %s %s (%.4f)", t, outcome.verdict, child.branch, score)
        return finish(outcome, proposal)

    def run(self) -> ProgramRef:
        """Run until the iteration cap, the epoch budget, or the patience limit."""
        cfg = self.config
        if self.baseline_score is None:
            self.baseline()
        while self.stop_reason is None:
            t = self.next_iteration
            if t > cfg.max_iterations:
                self.stop_reason = "max_iterations"
                break
            if self.sampler.remaining == 0:
                self.stop_reason = "epoch_budget"
                break
            best_before = self.frontier.best_score()
            outcome = self.run_iteration(t)
            self.stale = 0 if self.frontier.best_score() > best_before else self.stale + 1
            self.next_iteration = t + 1
            self._event("iteration", **asdict(outcome),
                        frontier=[e.ref.branch for e in self.frontier.entries],
                        best_score=self.frontier.best_score(),
                        epoch=self.sampler.epoch, draws=self.sampler.draws)
            if self.stale >= cfg.patience:
                self.stop_reason = "patience"
            self._save_state()

        best = self.frontier.best()
        self._event("stop", reason=self.stop_reason, best=best.branch,
                    best_score=self.frontier.best_score())
        self._save_state()
        summary = {
            "best_branch": best.branch,
            "best_score": self.frontier.best_score(),
            "baseline_score": self.baseline_score,
            "iterations": self.next_iteration - 1,
            "stop_reason": self.stop_reason,
            "frontier": self.frontier.to_json()["entries"],
        }
        path = self._path(SUMMARY_FILE)
        if path is not None:
            path.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        return best
