"""Capacity-bounded top-k set of programs used as mutation parents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

from .errors import ContractViolation
from .store import ProgramRef

Selection = Literal["round_robin", "best"]


@dataclass(frozen=True)
class FrontierEntry:
    ref: ProgramRef
    score: float


@dataclass(frozen=True)
class AdmitResult:
    admitted: bool
    evicted: ProgramRef | None = None


REJECTED = AdmitResult(False)


@dataclass
class Frontier:
    """Entries are kept in admission order; evictions never reorder survivors."""

    capacity: int
    entries: list[FrontierEntry] = field(default_factory=list)
    selection: Selection = "round_robin"

    def __post_init__(self):
        if self.capacity < 1:
            raise ContractViolation("frontier capacity must be >= 1")
        if self.selection not in ("round_robin", "best"):
            raise ContractViolation(f"unknown parent selection {self.selection!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, branch: str) -> bool:
        return any(e.ref.branch == branch for e in self.entries)

    @property
    def refs(self) -> list[ProgramRef]:
        return [e.ref for e in self.entries]

    def min_score(self) -> float:
        return min(e.score for e in self.entries)

    def try_admit(self, candidate: ProgramRef, score: float) -> AdmitResult:
        """Admit if there is room or ``score`` strictly beats the weakest member.

        On overflow the lowest-scoring entry (earliest admitted among ties) is
        evicted and returned.
        """
        if not math.isfinite(score) or not 0.0 <= score <= 1.0:
            raise ContractViolation(f"score must be finite in [0, 1], got {score!r}")
        if candidate.branch in self:
            raise ContractViolation(f"{candidate.branch} is already on the frontier")
        if len(self.entries) < self.capacity:
            self.entries.append(FrontierEntry(candidate, score))
            return AdmitResult(True)
        if score <= self.min_score():
            return REJECTED
        self.entries.append(FrontierEntry(candidate, score))
        weakest = min(range(len(self.entries)), key=lambda i: (self.entries[i].score, i))
        evicted = self.entries.pop(weakest)
        return AdmitResult(True, evicted.ref)

    def select_parent(self, t: int) -> ProgramRef:
        if not self.entries:
            raise ContractViolation("cannot select a parent from an empty frontier")
        if self.selection == "best":
            return self.best()
        return self.entries[t % len(self.entries)].ref

    def best(self) -> ProgramRef:
        """Highest score; ties go to the lower generation, then the smaller branch name."""
        if not self.entries:
            raise ContractViolation("empty frontier has no best program")
        top = min(self.entries, key=lambda e: (-e.score, e.ref.generation, e.ref.branch))
        return top.ref

    def best_score(self) -> float:
        return max(e.score for e in self.entries)

    def to_json(self) -> dict:
        return {
            "capacity": self.capacity,
            "selection": self.selection,
            "entries": [
                {"branch": e.ref.branch, "score": e.score, "generation": e.ref.generation}
                for e in self.entries
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Frontier":
        entries = [
            FrontierEntry(ProgramRef(e["branch"], e["score"], e["generation"]), e["score"])
            for e in data["entries"]
        ]
        return cls(data["capacity"], entries, data.get("selection", "round_robin"))
