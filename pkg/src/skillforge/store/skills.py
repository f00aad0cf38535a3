"""Skill folders: a ``SKILL.md`` with YAML front-matter plus optional files."""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field

import yaml

from ..errors import BuildError

SKILL_FILE = "SKILL.md"
_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def check_skill_name(name: str) -> str:
    if not _NAME_RE.match(name or "") or name in (".", ".."):
        raise BuildError(f"invalid skill folder name {name!r}")
    return name


def safe_relpath(path: str) -> str:
    """Normalise a folder-relative path, refusing anything that escapes it."""
    if not path or path.startswith(("/", "\\")) or "\\" in path:
        raise BuildError(f"unsafe path {path!r}")
    norm = posixpath.normpath(path)
    if norm in (".", "..") or norm.startswith("../") or posixpath.isabs(norm):
        raise BuildError(f"path escapes the skill folder: {path!r}")
    return norm


@dataclass(frozen=True)
class SkillFolder:
    name: str
    description: str
    instructions: str
    scripts: dict[str, str] = field(default_factory=dict)
    references: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        check_skill_name(self.name)

    def render_skill_md(self) -> str:
        front = yaml.safe_dump(
            {"name": self.name, "description": self.description},
            sort_keys=False, allow_unicode=True, width=1_000_000,
        )
        return f"---\n{front}---\n\n{self.instructions}"

    def files(self) -> dict[str, str]:
        """Folder-relative path -> text content."""
        out = {SKILL_FILE: self.render_skill_md()}
        for rel, text in {**self.references, **self.scripts}.items():
            out[safe_relpath(rel)] = text
        return out

    @classmethod
    def from_files(cls, name: str, files: dict[str, str]) -> "SkillFolder":
        if SKILL_FILE not in files:
            raise BuildError(f"skill {name!r} has no {SKILL_FILE}")
        meta, body = parse_skill_md(files[SKILL_FILE])
        if meta.get("name") != name:
            raise BuildError(
                f"{SKILL_FILE} front-matter name {meta.get('name')!r} does not match folder {name!r}"
            )
        scripts, refs = {}, {}
        for rel, text in files.items():
            if rel == SKILL_FILE:
                continue
            rel = safe_relpath(rel)
            (scripts if rel.startswith("scripts/") else refs)[rel] = text
        return cls(name, str(meta.get("description", "")), body, scripts, refs)


def parse_skill_md(text: str) -> tuple[dict, str]:
    """Split a SKILL.md into (front-matter mapping, markdown body)."""
    if not text.startswith("---\n"):
        raise BuildError("SKILL.md must open with a '---' front-matter block")
    end = text.find("\n---\n", 3)
    if end < 0:
        raise BuildError("SKILL.md front-matter is not terminated")
    try:
        meta = yaml.safe_load(text[4:end + 1]) or {}
    except yaml.YAMLError as exc:
        raise BuildError(f"SKILL.md front-matter is not valid YAML: {exc}") from exc
    if not isinstance(meta, dict) or "name" not in meta or "description" not in meta:
        raise BuildError("SKILL.md front-matter needs 'name' and 'description'")
    body = text[end + 5:]
    if body.startswith("\n"):
        body = body[1:]
    return meta, body
