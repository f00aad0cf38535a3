"""Run configuration: one YAML document, overridable from the command line."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .agents import (
    ChatBackend,
    HttpChatBackend,
    LLMExecutor,
    LLMProposer,
    LLMSkillBuilder,
    ScriptedProposer,
    ScriptedSkillBuilder,
    ShellBackend,
    skill_gated_executor,
)
from .agents.roles import Executor, Proposer, SkillBuilder
from .errors import ConfigError
from .loop import LoopConfig
from .scoring import SCORERS

BACKEND_KINDS = ("http", "shell", "mock")
ROLES = ("executor", "proposer", "builder")


@dataclass
class BackendSettings:
    kind: str = "mock"
    base_url: str | None = None
    model: str | None = None
    api_key_env: str | None = None  # name of the variable, never the value
    command: list[str] = field(default_factory=list)
    timeout: float = 600.0
    attempts: int = 3
    max_tokens: int = 4096
    skill: str = "X"  # mock: the skill that makes the executor correct

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "http" and not (self.base_url and self.model):
            raise ConfigError("http backend needs base_url and model")
        if self.kind == "shell" and not self.command:
            raise ConfigError("shell backend needs a command list")

    @classmethod
    def from_dict(cls, data: dict | None) -> "BackendSettings":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown backend settings: {sorted(unknown)}")
        if "api_key" in data:
            raise ConfigError("put the credential in an environment variable and set api_key_env")
        return cls(**data)

    def chat_backend(self) -> ChatBackend:
        if self.kind == "http":
            return HttpChatBackend(self.base_url, self.model, self.api_key_env,
                                   timeout=self.timeout, attempts=self.attempts)
        if self.kind == "shell":
            return ShellBackend(self.command, timeout=self.timeout, attempts=self.attempts)
        raise ConfigError("mock backends have no chat transport")


@dataclass
class RunConfig:
    train: Path
    validation: Path
    test: Path | None = None
    repo: Path = Path(".")
    run_dir: Path = Path("runs/default")
    scorer: str = "fuzzy"
    backend: BackendSettings = field(default_factory=BackendSettings)
    roles: dict[str, BackendSettings] = field(default_factory=dict)
    loop: LoopConfig = field(default_factory=LoopConfig)

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; choose from {sorted(SCORERS)}")
        for role in self.roles:
            if role not in ROLES:
                raise ConfigError(f"unknown role {role!r}; choose from {ROLES}")
        for label, path in (("train", self.train), ("validation", self.validation),
                            ("test", self.test), ("repo", self.repo)):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{label} path does not exist: {path}")
        if self.settings_for("executor").kind == "shell":
            # a shell agent discovers skills on disk, so programs must be exported
            self.loop.materialize = True

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        base = base_dir or Path(".")
        data = dict(data)
        known = {"data", "repo", "run_dir", "scorer", "backend", "roles", "loop"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        paths = data.get("data") or {}
        if "train" not in paths or "validation" not in paths:
            raise ConfigError("config needs data.train and data.validation")

        def resolve(p: Any) -> Path | None:
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p

        return cls(
            train=resolve(paths["train"]),
            validation=resolve(paths["validation"]),
            test=resolve(paths.get("test")),
            repo=resolve(data.get("repo", ".")),
            run_dir=resolve(data.get("run_dir", "runs/default")),
            scorer=data.get("scorer", "fuzzy"),
            backend=BackendSettings.from_dict(data.get("backend")),
            roles={k: BackendSettings.from_dict(v) for k, v in (data.get("roles") or {}).items()},
            loop=LoopConfig.from_dict(data.get("loop") or {}),
        )

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a YAML mapping")
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, name = key.rpartition(".")
            target = data.setdefault(section, {}) if section else data
            target[name] = value
        return cls.from_dict(data, path.parent)

    def settings_for(self, role: str) -> BackendSettings:
        return self.roles.get(role, self.backend)

    def build_roles(self) -> tuple[Executor, Proposer, SkillBuilder]:
        ex, pr, bu = (self.settings_for(r) for r in ROLES)
        executor = (skill_gated_executor(ex.skill) if ex.kind == "mock"
                    else LLMExecutor(ex.chat_backend(), ex.max_tokens,
                                     inline_skills=ex.kind == "http"))
        proposer = (ScriptedProposer(pr.skill) if pr.kind == "mock"
                    else LLMProposer(pr.chat_backend(), max_tokens=pr.max_tokens))
        builder = (ScriptedSkillBuilder() if bu.kind == "mock"
                   else LLMSkillBuilder(bu.chat_backend(), max_tokens=bu.max_tokens))
        return executor, proposer, builder

    def to_json(self) -> dict:
        """Serialisable view; contains variable names only, never credentials."""
        return {
            "train": str(Path(self.train).resolve()),
            "validation": str(Path(self.validation).resolve()),
            "test": None if self.test is None else str(Path(self.test).resolve()),
            "repo": str(Path(self.repo).resolve()),
            "run_dir": str(Path(self.run_dir).resolve()),
            "scorer": self.scorer,
            "backend": asdict(self.backend),
            "roles": {k: asdict(v) for k, v in self.roles.items()},
            "loop": asdict(self.loop),
        }
