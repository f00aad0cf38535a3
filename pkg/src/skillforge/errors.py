"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SkillforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(SkillforgeError, ValueError):
    """Invalid configuration values or files."""


class ContractViolation(SkillforgeError, ValueError):
    """A caller broke an operation's precondition."""


class StoreError(SkillforgeError):
    """Version-control store failure."""


class SetupError(StoreError):
    """Repository missing, dirty, or already initialised."""


class NamingError(StoreError):
    """Program branch name already taken."""


class ProtectionError(StoreError):
    """Refused to delete a protected program."""


class CorruptionError(StoreError):
    """Lineage references a program that no longer exists."""


class BackendError(SkillforgeError):
    """An LLM or agent backend failed to produce a response."""


class ProposalError(SkillforgeError):
    """Proposer output could not be parsed or failed validation."""


class BuildError(SkillforgeError):
    """Skill-builder output was rejected."""
