"""Records exchanged between the executor, proposer and skill-builder roles."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from ..data import Example
from ..scoring import MultiToleranceScore

ProposalKind = Literal["new_skill", "edit_skill", "edit_prompt"]


@dataclass(frozen=True)
class BackendRequest:
    system: str
    messages: list[dict]
    allowed_tools: list[str] = field(default_factory=list)
    max_tokens: int = 4096
    workdir: Path | None = None


@dataclass(frozen=True)
class BackendResponse:
    content: str
    transcript: list[dict] = field(default_factory=list)
    usage: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ExecutionTrace:
    example_id: str
    predicted_answer: str
    transcript: list[dict]
    duration: float = 0.0
    token_usage: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class Proposal:
    kind: ProposalKind
    target_skill_name: str
    rationale: str
    specification: str


@dataclass(frozen=True)
class Failure:
    example: Example
    trace: ExecutionTrace
    score: float
    detail: MultiToleranceScore | None = None
