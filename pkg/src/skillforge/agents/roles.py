"""The three agent roles and the validation wrapped around each of them.

Role objects (LLM-backed or mocks) only produce raw output. The module-level
:func:`execute`, :func:`propose` and :func:`build_skill` apply retries,
parsing, leakage checks and the write sandbox, so every backend is held to
the same contract.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from ..data import Example
from ..errors import BackendError, BuildError, ProposalError
from ..store import LoadedProgram, SkillFolder
from ..store.skills import SKILL_FILE, check_skill_name, safe_relpath
from . import prompts
from .backends import ChatBackend
from .types import BackendRequest, BackendResponse, ExecutionTrace, Failure, Proposal

log = logging.getLogger(__name__)

MIN_LEAK_LENGTH = 3
_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)\n```", re.DOTALL)


class Executor(Protocol):
    def run(self, program: LoadedProgram, example: Example) -> BackendResponse: ...


class Proposer(Protocol):
    def draft(self, context: "ProposerContext") -> str: ...
    def reformat(self, context: "ProposerContext", previous: str, error: str) -> str: ...


class SkillBuilder(Protocol):
    def draft(self, parent: LoadedProgram, proposal: Proposal) -> str: ...
    def draft_prompt(self, parent: LoadedProgram, proposal: Proposal) -> str: ...


@dataclass(frozen=True)
class ProposerContext:
    failures: Sequence[Failure]
    history: str
    inventory: dict[str, str]
    mode: str = "skill"
    system_prompt: str = ""

    def render(self) -> str:
        parts = ["## Failures"]
        for i, f in enumerate(self.failures, 1):
            transcript = "\n".join(
                f"  [{step.get('role', '?')}] {str(step.get('content', ''))[:2000]}"
                for step in f.trace.transcript
            )
            parts.append(
                f"### Failure {i} (id {f.example.id}, category {f.example.category}, score {f.score:.3f})\n"
                f"Question: {f.example.question}\n"
                f"Predicted answer: {f.trace.predicted_answer}\n"
                f"Ground truth: {f.example.ground_truth}\n"
                f"Trace:\n{transcript or '  (empty)'}"
            )
        parts.append("## Existing skills")
        if self.inventory:
            parts.extend(f"- {name}: {desc}" for name, desc in sorted(self.inventory.items()))
        else:
            parts.append("(none)")
        if self.mode == "prompt":
            parts.append(f"## Current system prompt\n{self.system_prompt}")
        parts.append("## Feedback history")
        parts.append(self.history or "(no previous iterations)")
        return "\n\n".join(parts)


# -- helpers ------------------------------------------------------------------

def extract_answer(text: str, delimiter: str | None = None) -> str:
    """Final answer from the last assistant message, optionally after ``delimiter``."""
    if delimiter and delimiter in text:
        text = text.rsplit(delimiter, 1)[1]
    return text.strip()


def _json_object(text: str) -> dict:
    candidates = _FENCE_RE.findall(text)
    if not candidates:
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise ValueError("no JSON object found")
        candidates = [text[start:end + 1]]
    try:
        data = json.loads(candidates[-1])
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("expected a JSON object")
    return data


def parse_proposal(text: str) -> Proposal:
    try:
        data = _json_object(text)
    except ValueError as exc:
        raise ProposalError(str(exc)) from exc
    kind = data.get("kind")
    if kind not in ("new_skill", "edit_skill", "edit_prompt"):
        raise ProposalError(f"unknown proposal kind {kind!r}")
    target = str(data.get("target") or data.get("target_skill_name") or "").strip()
    spec = str(data.get("specification") or "").strip()
    if not target or not spec:
        raise ProposalError("proposal needs a target and a non-empty specification")
    return Proposal(kind, target, str(data.get("rationale") or "").strip(), spec)


def leaked_answers(text: str, answers: Iterable[str]) -> list[str]:
    """Ground-truth strings (of at least three characters) appearing verbatim in ``text``."""
    folded = text.casefold()
    return sorted({a for a in answers if len(a.strip()) >= MIN_LEAK_LENGTH
                   and a.strip().casefold() in folded})


def validate_proposal(proposal: Proposal, inventory: dict[str, str],
                      failures: Sequence[Failure], mode: str = "skill") -> Proposal:
    if mode == "prompt":
        if proposal.kind != "edit_prompt":
            raise ProposalError("prompt mode expects an edit_prompt proposal")
    else:
        if proposal.kind == "edit_prompt":
            raise ProposalError("skill mode cannot edit the system prompt")
        try:
            check_skill_name(proposal.target_skill_name)
        except BuildError as exc:
            raise ProposalError(str(exc)) from exc
        exists = proposal.target_skill_name in inventory
        if proposal.kind == "edit_skill" and not exists:
            raise ProposalError(f"edit_skill targets unknown skill {proposal.target_skill_name!r}")
        if proposal.kind == "new_skill" and exists:
            raise ProposalError(f"new_skill {proposal.target_skill_name!r} already exists")
    leaks = leaked_answers(proposal.specification, (f.example.ground_truth for f in failures))
    if leaks:
        raise ProposalError(f"specification leaks ground-truth answers: {leaks}")
    return proposal


# -- role entry points ------------------------------------------------------

def execute(program: LoadedProgram, example: Example, executor: Executor,
            attempts: int = 3, answer_delimiter: str | None = None) -> ExecutionTrace:
    """Run one example. Persistent backend failure yields an error-marked trace."""
    start = time.monotonic()
    last_error = ""
    for attempt in range(attempts):
        try:
            resp = executor.run(program, example)
        except BackendError as exc:
            last_error = str(exc)
            log.warning("executor failed on %s (attempt %d/%d): %s",
                        example.id, attempt + 1, attempts, exc)
            continue
        transcript = resp.transcript or [{"role": "assistant", "content": resp.content}]
        return ExecutionTrace(
            example.id,
            extract_answer(resp.content, answer_delimiter),
            transcript,
            time.monotonic() - start,
            dict(resp.usage),
        )
    return ExecutionTrace(example.id, "", [{"role": "error", "content": last_error}],
                          time.monotonic() - start, {}, error=last_error or "executor failed")


def propose(failures: Sequence[Failure], history: str, proposer: Proposer,
            inventory: dict[str, str], mode: str = "skill", system_prompt: str = "") -> Proposal:
    """Ask the proposer for one mutation; one reformat retry on unparseable output."""
    if not failures:
        raise ProposalError("propose needs at least one failure")
    context = ProposerContext(failures, history, inventory, mode, system_prompt)
    try:
        raw = proposer.draft(context)
    except BackendError as exc:
        raise ProposalError(f"proposer backend failed: {exc}") from exc
    try:
        proposal = parse_proposal(raw)
    except ProposalError as exc:
        log.info("proposal unparseable (%s); asking for a reformat", exc)
        try:
            raw = proposer.reformat(context, raw, str(exc))
        except BackendError as exc2:
            raise ProposalError(f"proposer backend failed: {exc2}") from exc2
        proposal = parse_proposal(raw)
    return validate_proposal(proposal, inventory, failures, mode)


def parse_skill_files(text: str) -> dict[str, str]:
    try:
        data = _json_object(text)
    except ValueError as exc:
        raise BuildError(str(exc)) from exc
    files = data.get("files")
    if not isinstance(files, dict) or not files:
        raise BuildError("builder output needs a non-empty 'files' mapping")
    return {str(k): str(v) for k, v in files.items()}


def build_skill(parent: LoadedProgram, proposal: Proposal, builder: SkillBuilder,
                forbidden_answers: Iterable[str] = ()) -> SkillFolder:
    """Materialise ``proposal`` into a skill folder confined to the skills directory."""
    try:
        raw = builder.draft(parent, proposal)
    except BackendError as exc:
        raise BuildError(f"builder backend failed: {exc}") from exc
    files = parse_skill_files(raw)
    name = proposal.target_skill_name
    inner: dict[str, str] = {}
    for path, text in files.items():
        norm = safe_relpath(path)
        folder, _, rel = norm.partition("/")
        if folder != name or not rel:
            raise BuildError(f"builder wrote {path!r} outside the skill folder {name!r}")
        inner[rel] = text
    folder = SkillFolder.from_files(name, inner)
    leaks = leaked_answers(folder.render_skill_md(), forbidden_answers)
    if leaks:
        raise BuildError(f"{SKILL_FILE} leaks ground-truth answers: {leaks}")
    return folder


def build_prompt(parent: LoadedProgram, proposal: Proposal, builder: SkillBuilder,
                 forbidden_answers: Iterable[str] = ()) -> str:
    try:
        text = builder.draft_prompt(parent, proposal).strip()
    except BackendError as exc:
        raise BuildError(f"builder backend failed: {exc}") from exc
    if not text:
        raise BuildError("builder returned an empty system prompt")
    leaks = leaked_answers(text, forbidden_answers)
    if leaks:
        raise BuildError(f"system prompt leaks ground-truth answers: {leaks}")
    return text


# -- LLM-backed roles ---------------------------------------------------------

def skills_section(program: LoadedProgram) -> str:
    if not program.skills:
        return ""
    blocks = ["\n\n# Skills\nFollow a skill's instructions whenever its description applies."]
    for skill in program.skills.values():
        blocks.append(f"\n## {skill.name}\n{skill.description}\n\n{skill.instructions}")
    return "\n".join(blocks)


class LLMExecutor:
    """Chat backend that sees the program prompt plus every skill inlined.

    Agent harnesses that discover skills on disk should use a
    :class:`~skillforge.agents.backends.ShellBackend`, which receives the
    exported program directory as its working directory.
    """

    def __init__(self, backend: ChatBackend, max_tokens: int = 4096, inline_skills: bool = True):
        self.backend = backend
        self.max_tokens = max_tokens
        self.inline_skills = inline_skills

    def run(self, program: LoadedProgram, example: Example) -> BackendResponse:
        system = program.config.system_prompt or prompts.EXECUTOR_SYSTEM
        if self.inline_skills:
            system += skills_section(program)
        return self.backend.complete(BackendRequest(
            system=system,
            messages=[{"role": "user", "content": example.question}],
            allowed_tools=list(program.config.allowed_tools),
            max_tokens=self.max_tokens,
            workdir=program.workdir,
        ))


class LLMProposer:
    def __init__(self, backend: ChatBackend, system: str | None = None, max_tokens: int = 4096):
        self.backend = backend
        self.system = system
        self.max_tokens = max_tokens

    def _system(self, context: ProposerContext) -> str:
        if self.system:
            return self.system
        return prompts.PROMPT_PROPOSER_SYSTEM if context.mode == "prompt" else prompts.PROPOSER_SYSTEM

    def draft(self, context: ProposerContext) -> str:
        req = BackendRequest(self._system(context), [{"role": "user", "content": context.render()}],
                             max_tokens=self.max_tokens)
        return self.backend.complete(req).content

    def reformat(self, context: ProposerContext, previous: str, error: str) -> str:
        messages = [
            {"role": "user", "content": context.render()},
            {"role": "assistant", "content": previous},
            {"role": "user", "content": prompts.REFORMAT_REQUEST.format(error=error)},
        ]
        return self.backend.complete(BackendRequest(self._system(context), messages,
                                                    max_tokens=self.max_tokens)).content


class LLMSkillBuilder:
    def __init__(self, backend: ChatBackend, system: str | None = None,
                 meta_skill: str | None = None, max_tokens: int = 8192):
        self.backend = backend
        self.system = system or prompts.BUILDER_SYSTEM
        self.meta_skill = meta_skill if meta_skill is not None else prompts.meta_skill()
        self.max_tokens = max_tokens

    def draft(self, parent: LoadedProgram, proposal: Proposal) -> str:
        body = [
            f"Proposal kind: {proposal.kind}",
            f"Skill folder name: {proposal.target_skill_name}",
            f"Specification:\n{proposal.specification}",
            f"Rationale:\n{proposal.rationale}",
        ]
        existing = parent.skills.get(proposal.target_skill_name)
        if existing is not None:
            body.append("Current files:\n" + json.dumps(
                {f"{existing.name}/{k}": v for k, v in existing.files().items()}, indent=1))
        req = BackendRequest(self.system + self.meta_skill,
                             [{"role": "user", "content": "\n\n".join(body)}],
                             max_tokens=self.max_tokens)
        return self.backend.complete(req).content

    def draft_prompt(self, parent: LoadedProgram, proposal: Proposal) -> str:
        content = (f"Current system prompt:\n{parent.config.system_prompt}\n\n"
                   f"Proposal:\n{proposal.specification}\n\nRationale:\n{proposal.rationale}")
        req = BackendRequest(prompts.PROMPT_BUILDER_SYSTEM, [{"role": "user", "content": content}],
                             max_tokens=self.max_tokens)
        return self.backend.complete(req).content


class LLMClassifier:
    """Callable for :func:`skillforge.data.categorize` backed by a chat model."""

    def __init__(self, backend: ChatBackend, labels: Sequence[str] = (), max_tokens: int = 32):
        self.backend = backend
        self.labels = list(labels)
        self.max_tokens = max_tokens

    def __call__(self, example: Example) -> str:
        hint = f"Choose from: {', '.join(self.labels)}." if self.labels else ""
        req = BackendRequest(prompts.CLASSIFIER_SYSTEM.format(labels=hint),
                             [{"role": "user", "content": example.question}],
                             max_tokens=self.max_tokens)
        label = re.sub(r"[^a-z0-9]+", "-", self.backend.complete(req).content.strip().lower()).strip("-")
        if not label:
            raise BackendError("classifier returned an empty label")
        if self.labels and label not in self.labels:
            raise BackendError(f"classifier returned unknown label {label!r}")
        return label
