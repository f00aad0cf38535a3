"""Deterministic stand-ins for the agent roles, for offline runs and tests."""

from __future__ import annotations

import json
import re
from typing import Callable, Iterable, Mapping

from ..data import Example
from ..errors import BackendError
from ..store import LoadedProgram, SkillFolder
from .types import BackendRequest, BackendResponse, Proposal

AnswerRule = Callable[[LoadedProgram, Example], str]


class MockExecutor:
    """Answers via ``rule(program, example)``; raises for ids in ``fail_ids``."""

    def __init__(self, rule: AnswerRule, fail_ids: Iterable[str] = ()):
        self.rule = rule
        self.fail_ids = set(fail_ids)
        self.calls = 0

    def run(self, program: LoadedProgram, example: Example) -> BackendResponse:
        self.calls += 1
        if example.id in self.fail_ids:
            raise BackendError(f"mock failure on {example.id}")
        answer = self.rule(program, example)
        transcript = [
            {"role": "user", "content": example.question},
            {"role": "assistant", "content": answer,
             "skills": sorted(program.skills)},
        ]
        return BackendResponse(answer, transcript, {"input_tokens": len(example.question.split()),
                                                    "output_tokens": len(answer.split())})


def skill_gated_executor(skill: str = "X", wrong: str = "unknown", **kwargs) -> MockExecutor:
    """Correct iff the program carries a skill folder named ``skill``."""
    return MockExecutor(lambda p, ex: ex.ground_truth if p.has_skill(skill) else wrong, **kwargs)


def table_executor(answers: Mapping[str, str], default: str = "unknown") -> MockExecutor:
    """Fixed answer per example id, independent of the program."""
    return MockExecutor(lambda p, ex: answers.get(ex.id, default))


def _fenced(obj: dict) -> str:
    return "```json\n" + json.dumps(obj, sort_keys=True) + "\n```"


class ScriptedProposer:
    """Always targets one skill: ``new_skill`` if absent, ``edit_skill`` once it exists."""

    def __init__(self, skill: str = "X", specification: str | None = None,
                 edit_existing: bool = True):
        self.skill = skill
        self.specification = specification or f"Procedure '{skill}': verify every extracted figure twice."
        self.edit_existing = edit_existing
        self.contexts: list = []

    def draft(self, context) -> str:
        self.contexts.append(context)
        if context.mode == "prompt":
            return _fenced({"kind": "edit_prompt", "target": "system_prompt",
                            "rationale": "scripted", "specification": self.specification})
        kind = "edit_skill" if self.edit_existing and self.skill in context.inventory else "new_skill"
        return _fenced({
            "kind": kind,
            "target": self.skill,
            "rationale": f"{len(context.failures)} failures lack skill {self.skill}",
            "specification": self.specification,
        })

    def reformat(self, context, previous: str, error: str) -> str:
        return self.draft(context)


class ScriptedSkillBuilder:
    """Writes ``<target>/SKILL.md`` from the proposal text; edits append a revision marker."""

    def draft(self, parent: LoadedProgram, proposal: Proposal) -> str:
        name = proposal.target_skill_name
        revision = 1
        existing = parent.skills.get(name)
        if existing is not None:
            found = re.findall(r"Revision (\d+)", existing.instructions)
            revision = int(found[-1]) + 1 if found else 2
        body = f"# {name}\n\n{proposal.specification}\n\nRevision {revision}.\n"
        skill_md = SkillFolder(name, f"Use when: {proposal.specification[:80]}", body).render_skill_md()
        return _fenced({"files": {f"{name}/SKILL.md": skill_md}})

    def draft_prompt(self, parent: LoadedProgram, proposal: Proposal) -> str:
        return f"{parent.config.system_prompt}\n{proposal.specification}".strip()


class ScriptedBackend:
    """ChatBackend replaying canned responses; strings are returned, exceptions raised."""

    def __init__(self, responses: Iterable[str | Exception]):
        self.responses = list(responses)
        self.requests: list[BackendRequest] = []

    def complete(self, request: BackendRequest) -> BackendResponse:
        self.requests.append(request)
        if not self.responses:
            raise BackendError("scripted backend exhausted")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return BackendResponse(item, list(request.messages) + [{"role": "assistant", "content": item}],
                               {"output_tokens": len(item.split())})
