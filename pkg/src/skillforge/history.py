"""Append-only log of proposals and their outcomes, shown to the proposer."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

from .agents.types import Proposal
from .errors import ContractViolation

Verdict = Literal["admitted", "rejected", "skipped"]


@dataclass(frozen=True)
class FeedbackRecord:
    iteration: int
    parent_branch: str
    verdict: Verdict
    proposal: Proposal | None = None
    validation_score: float | None = None
    parent_score: float | None = None
    candidate_branch: str | None = None
    note: str = ""

    @property
    def delta(self) -> float | None:
        if self.validation_score is None or self.parent_score is None:
            return None
        return self.validation_score - self.parent_score

    def to_json(self) -> dict:
        data = asdict(self)
        data["delta"] = self.delta
        return data

    @classmethod
    def from_json(cls, data: dict) -> "FeedbackRecord":
        data = dict(data)
        data.pop("delta", None)
        if data.get("proposal") is not None:
            data["proposal"] = Proposal(**data["proposal"])
        return cls(**data)

    def digest_line(self) -> str:
        if self.proposal is None:
            head = "no proposal"
        else:
            head = f"{self.proposal.kind} '{self.proposal.target_skill_name}'"
        line = f"[iter {self.iteration}] {head} -> {self.verdict}"
        if self.validation_score is not None:
            line += f" (score {self.validation_score:.3f}"
            if self.delta is not None:
                line += f", delta {self.delta:+.3f}"
            line += ")"
        if self.note:
            line += f"; {self.note}"
        return line


class FeedbackHistory:
    """In-memory record list mirrored to a JSON-lines file, one line per append."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._records: list[FeedbackRecord] = []

    @classmethod
    def load(cls, path: str | Path) -> "FeedbackHistory":
        hist = cls(path)
        if hist.path.exists():
            with open(hist.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        hist._records.append(FeedbackRecord.from_json(json.loads(line)))
        return hist

    @property
    def records(self) -> tuple[FeedbackRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def append(self, record: FeedbackRecord) -> None:
        if self._records and record.iteration <= self._records[-1].iteration:
            raise ContractViolation(
                f"iteration {record.iteration} does not follow {self._records[-1].iteration}"
            )
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._records.append(record)

    def render_for_proposer(self, budget: int = 4000) -> str:
        """Chronological digest of the newest records that fit in ``budget`` characters."""
        lines: list[str] = []
        used = 0
        for rec in reversed(self._records):
            line = rec.digest_line()
            cost = len(line) + (1 if lines else 0)
            if used + cost > budget:
                if not lines:
                    lines.append(line[:budget])
                break
            lines.append(line)
            used += cost
        return "\n".join(reversed(lines))
