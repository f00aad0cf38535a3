"""Combine the skill libraries of independent runs into one."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ContractViolation
from .store import SkillFolder

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass
class RunLibrary:
    run_id: str
    final_score: float
    skills: dict[str, SkillFolder]


@dataclass(frozen=True)
class Provenance:
    skill: str
    source_run: str
    source_score: float
    overlaps: tuple[tuple[str, str], ...] = ()  # (run_id, skill) pairs displaced
    tie_broken: bool = False


@dataclass
class MergeResult:
    skills: dict[str, SkillFolder]
    provenance: list[Provenance] = field(default_factory=list)

    def report(self) -> list[dict]:
        return [
            {
                "skill": p.skill,
                "source_run": p.source_run,
                "source_score": p.source_score,
                "overlaps": [{"run": r, "skill": s} for r, s in p.overlaps],
                "tie_broken": p.tie_broken,
            }
            for p in self.provenance
        ]


def description_similarity(a: str, b: str) -> float:
    """Jaccard overlap of lowercase alphanumeric tokens."""
    ta, tb = set(_TOKEN_RE.findall(a.lower())), set(_TOKEN_RE.findall(b.lower()))
    if not ta and not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def merge_unique(libraries: list[RunLibrary], threshold: float = 0.8) -> MergeResult:
    """Union of all skills; overlapping skills keep the best-scoring run's version.

    Skills overlap when their names match or their descriptions reach
    ``threshold`` token overlap. Equal run scores fall back to the smaller
    ``run_id``.
    """
    if not libraries:
        raise ContractViolation("merge needs at least one run library")
    if len({lib.run_id for lib in libraries}) != len(libraries):
        raise ContractViolation("run ids must be unique")

    rank = {lib.run_id: (-lib.final_score, lib.run_id) for lib in libraries}
    score = {lib.run_id: lib.final_score for lib in libraries}
    nodes = [(lib.run_id, name, skill) for lib in sorted(libraries, key=lambda l: rank[l.run_id])
             for name, skill in sorted(lib.skills.items())]

    parent = list(range(len(nodes)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            ri, ni, si = nodes[i]
            rj, nj, sj = nodes[j]
            if ri == rj:
                continue
            if ni == nj or description_similarity(si.description, sj.description) >= threshold:
                parent[find(j)] = find(i)

    groups: dict[int, list[int]] = {}
    for i in range(len(nodes)):
        groups.setdefault(find(i), []).append(i)

    merged: dict[str, SkillFolder] = {}
    provenance: list[Provenance] = []
    for members in groups.values():
        winner_run = min((nodes[i][0] for i in members), key=lambda r: rank[r])
        tied = len({nodes[i][0] for i in members if score[nodes[i][0]] == score[winner_run]}) > 1
        displaced = tuple(sorted((nodes[i][0], nodes[i][1]) for i in members if nodes[i][0] != winner_run))
        for i in members:
            run_id, name, skill = nodes[i]
            if run_id != winner_run:
                continue
            merged[name] = skill
            provenance.append(Provenance(name, run_id, score[run_id], displaced, tied))
    provenance.sort(key=lambda p: p.skill)
    return MergeResult(dict(sorted(merged.items())), provenance)
