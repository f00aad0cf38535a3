"""Agent programs persisted as branches of a version-controlled repository.

Every program lives on ``program/<name>`` and differs from its parent only
under ``.claude/``: the config file and the skills directory.
"""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Literal, Sequence, Union

import yaml

from ..errors import (
    ContractViolation,
    CorruptionError,
    NamingError,
    ProtectionError,
    SetupError,
    StoreError,
)
from .backends import GitBackend, StoreBackend
from .skills import SKILL_FILE, SkillFolder, check_skill_name

log = logging.getLogger(__name__)

PROGRAM_PREFIX = "program/"
FRONTIER_PREFIX = "frontier/"
BASE_BRANCH = "program/base"
CONFIG_PATH = ".claude/program.yaml"
SKILLS_DIR = ".claude/skills"
_KEEP_FILE = f"{SKILLS_DIR}/.gitkeep"

Mode = Literal["skill", "prompt"]
Mutation = Union[SkillFolder, Sequence[SkillFolder], str]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _empty_evaluation(mode: str | None = None) -> dict:
    return {"validation_score": None, "scored_at": None, "mode": mode}


@dataclass
class ProgramConfig:
    name: str
    parent: str | None
    generation: int
    system_prompt: str
    allowed_tools: list[str] = field(default_factory=list)
    evaluation: dict = field(default_factory=_empty_evaluation)

    def __post_init__(self):
        if self.generation < 0:
            raise ContractViolation("generation must be >= 0")
        if (self.generation == 0) != (self.parent is None):
            raise ContractViolation("generation 0 iff the program has no parent")

    def to_yaml(self) -> str:
        data = {
            "name": self.name,
            "parent": self.parent,
            "generation": self.generation,
            "system_prompt": self.system_prompt,
            "allowed_tools": list(self.allowed_tools),
            "evaluation": {
                "validation_score": self.evaluation.get("validation_score"),
                "scored_at": self.evaluation.get("scored_at"),
                "mode": self.evaluation.get("mode"),
            },
        }
        return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)

    @classmethod
    def from_yaml(cls, text: str) -> "ProgramConfig":
        data = yaml.safe_load(text)
        if not isinstance(data, dict):
            raise CorruptionError("program config is not a mapping")
        evaluation = {**_empty_evaluation(), **(data.get("evaluation") or {})}
        return cls(
            name=data["name"],
            parent=data.get("parent"),
            generation=int(data["generation"]),
            system_prompt=data.get("system_prompt") or "",
            allowed_tools=list(data.get("allowed_tools") or []),
            evaluation=evaluation,
        )


@dataclass(frozen=True)
class ProgramRef:
    branch: str
    score: float | None = None
    generation: int = 0

    def __post_init__(self):
        if not self.branch.startswith(PROGRAM_PREFIX):
            raise ContractViolation(f"program branch must start with {PROGRAM_PREFIX!r}: {self.branch}")

    @property
    def suffix(self) -> str:
        return self.branch[len(PROGRAM_PREFIX):]


@dataclass
class LoadedProgram:
    """A program's config and skills read out of the store, ready to execute."""

    ref: ProgramRef
    config: ProgramConfig
    skills: dict[str, SkillFolder]
    workdir: Path | None = None

    def has_skill(self, name: str) -> bool:
        return name in self.skills


class ProgramStore:
    def __init__(self, backend: StoreBackend, clock: Callable[[], str] = utc_now):
        self.backend = backend
        self.clock = clock

    @classmethod
    def open(cls, repo: str | Path, clock: Callable[[], str] = utc_now) -> "ProgramStore":
        return cls(GitBackend(repo), clock)

    # -- reading ------------------------------------------------------------

    def _require(self, branch: str) -> None:
        if not self.backend.branch_exists(branch):
            raise StoreError(f"no such program: {branch}")

    def config(self, ref: ProgramRef | str) -> ProgramConfig:
        branch = ref if isinstance(ref, str) else ref.branch
        self._require(branch)
        text = self.backend.read_file(branch, CONFIG_PATH)
        if text is None:
            raise CorruptionError(f"{branch} has no {CONFIG_PATH}")
        return ProgramConfig.from_yaml(text)

    def ref(self, branch: str) -> ProgramRef:
        cfg = self.config(branch)
        return ProgramRef(branch, cfg.evaluation.get("validation_score"), cfg.generation)

    def programs(self) -> list[ProgramRef]:
        return [self.ref(b) for b in self.backend.branches(PROGRAM_PREFIX)]

    def skills(self, ref: ProgramRef | str) -> dict[str, SkillFolder]:
        branch = ref if isinstance(ref, str) else ref.branch
        grouped: dict[str, dict[str, str]] = {}
        for path in self.backend.list_files(branch, SKILLS_DIR + "/"):
            rel = path[len(SKILLS_DIR) + 1:]
            if "/" not in rel:
                continue
            folder, inner = rel.split("/", 1)
            grouped.setdefault(folder, {})[inner] = self.backend.read_file(branch, path) or ""
        return {name: SkillFolder.from_files(name, files) for name, files in sorted(grouped.items())}

    def load(self, ref: ProgramRef | str) -> LoadedProgram:
        branch = ref if isinstance(ref, str) else ref.branch
        return LoadedProgram(self.ref(branch), self.config(branch), self.skills(branch))

    def export(self, ref: ProgramRef | str, dest: str | Path) -> Path:
        branch = ref if isinstance(ref, str) else ref.branch
        self.backend.export(branch, dest)
        return Path(dest)

    # -- writing ------------------------------------------------------------

    def init_base(self, system_prompt: str, allowed_tools: Sequence[str] = (),
                  source_branch: str | None = None) -> ProgramRef:
        if self.backend.branch_exists(BASE_BRANCH):
            raise SetupError(f"{BASE_BRANCH} already exists; repository is already initialised")
        self.backend.check_clean()
        cfg = ProgramConfig("base", None, 0, system_prompt, list(allowed_tools))
        self.backend.create_branch(BASE_BRANCH, source_branch or self.backend.default_branch)
        self.backend.commit(
            BASE_BRANCH,
            {CONFIG_PATH: cfg.to_yaml(), _KEEP_FILE: ""},
            (),
            "init base program",
        )
        log.info("initialised %s", BASE_BRANCH)
        return ProgramRef(BASE_BRANCH, None, 0)

    def _skill_writes(self, branch: str, folders: Sequence[SkillFolder]) -> tuple[dict, list]:
        current = self.skills(branch)
        writes: dict[str, str] = {}
        deletes: list[str] = []
        for folder in folders:
            check_skill_name(folder.name)
            if current.get(folder.name) == folder:
                continue
            root = f"{SKILLS_DIR}/{folder.name}"
            new_files = {posixpath.join(root, rel): text for rel, text in folder.files().items()}
            old_files = self.backend.list_files(branch, root + "/")
            deletes.extend(p for p in old_files if p not in new_files)
            writes.update(new_files)
        return writes, deletes

    def create_child(self, parent: ProgramRef, mutation: Mutation, mode: Mode,
                     iteration: int, name: str | None = None) -> ProgramRef:
        """Branch a child off ``parent`` carrying one skill or prompt mutation."""
        if mode not in ("skill", "prompt"):
            raise ContractViolation(f"unknown mutation mode {mode!r}")
        parent_cfg = self.config(parent)
        child_name = name or f"iter-{mode}-{iteration}"
        branch = PROGRAM_PREFIX + child_name
        if self.backend.branch_exists(branch):
            raise NamingError(f"program branch already exists: {branch}")

        system_prompt = parent_cfg.system_prompt
        writes: dict[str, str] = {}
        deletes: list[str] = []
        if mode == "prompt":
            if not isinstance(mutation, str) or not mutation.strip() \
                    or mutation == parent_cfg.system_prompt:
                raise ContractViolation("prompt mutation is empty or identical to the parent prompt")
            system_prompt = mutation
        else:
            folders = [mutation] if isinstance(mutation, SkillFolder) else list(mutation or [])
            if not folders or not all(isinstance(f, SkillFolder) for f in folders):
                raise ContractViolation("skill mutation needs at least one SkillFolder")
            writes, deletes = self._skill_writes(parent.branch, folders)
            if not writes and not deletes:
                raise ContractViolation("skill mutation does not change the parent's skills")

        cfg = ProgramConfig(
            name=child_name,
            parent=parent.branch,
            generation=parent_cfg.generation + 1,
            system_prompt=system_prompt,
            allowed_tools=list(parent_cfg.allowed_tools),
            evaluation=_empty_evaluation(mode),
        )
        writes[CONFIG_PATH] = cfg.to_yaml()
        self.backend.create_branch(branch, parent.branch)
        self.backend.commit(branch, writes, deletes, f"{child_name}: {mode} mutation of {parent.branch}")
        return ProgramRef(branch, None, cfg.generation)

    def record_evaluation(self, ref: ProgramRef, score: float) -> ProgramRef:
        """Store a validation score in the program config as a follow-up commit."""
        cfg = self.config(ref)
        cfg.evaluation = {**cfg.evaluation, "validation_score": float(score), "scored_at": self.clock()}
        self.backend.commit(ref.branch, {CONFIG_PATH: cfg.to_yaml()}, (), f"{cfg.name}: score {score:.4f}")
        if self.is_frontier(ref):
            self.backend.tag(self._tag(ref), ref.branch)
        return ProgramRef(ref.branch, float(score), cfg.generation)

    # -- frontier tags --------------------------------------------------------

    @staticmethod
    def _tag(ref: ProgramRef) -> str:
        return FRONTIER_PREFIX + ref.suffix

    def is_frontier(self, ref: ProgramRef) -> bool:
        return self._tag(ref) in self.backend.tags(FRONTIER_PREFIX)

    def tag_frontier(self, ref: ProgramRef) -> None:
        self._require(ref.branch)
        self.backend.tag(self._tag(ref), ref.branch)

    def untag_frontier(self, ref: ProgramRef) -> None:
        self.backend.delete_tag(self._tag(ref))

    def frontier_branches(self) -> list[str]:
        return [PROGRAM_PREFIX + t[len(FRONTIER_PREFIX):] for t in self.backend.tags(FRONTIER_PREFIX)]

    # -- deletion & lineage -------------------------------------------------------

    def delete_program(self, ref: ProgramRef, force: bool = False) -> None:
        if not force:
            if ref.branch == BASE_BRANCH:
                raise ProtectionError("the base program is immutable")
            if self.is_frontier(ref):
                raise ProtectionError(f"{ref.branch} is a frontier member")
        self._require(ref.branch)
        self.backend.delete_branch(ref.branch)
        if force:
            self.untag_frontier(ref)

    def lineage(self, ref: ProgramRef | str) -> list[ProgramRef]:
        """Programs from ``ref`` back to the root, following parent pointers."""
        branch = ref if isinstance(ref, str) else ref.branch
        chain: list[ProgramRef] = []
        seen: set[str] = set()
        while True:
            if branch in seen:
                raise CorruptionError(f"parent pointers form a cycle at {branch}")
            seen.add(branch)
            if not self.backend.branch_exists(branch):
                raise CorruptionError(f"lineage is broken: missing program branch {branch}")
            cfg = self.config(branch)
            chain.append(ProgramRef(branch, cfg.evaluation.get("validation_score"), cfg.generation))
            if cfg.parent is None:
                break
            branch = cfg.parent
        if chain[-1].generation != 0 or len(chain) != chain[0].generation + 1:
            raise CorruptionError(f"generation counters inconsistent along lineage of {chain[0].branch}")
        return chain
