from .backends import GitBackend, MemoryBackend, StoreBackend
from .programs import (
    BASE_BRANCH,
    CONFIG_PATH,
    FRONTIER_PREFIX,
    PROGRAM_PREFIX,
    SKILLS_DIR,
    LoadedProgram,
    ProgramConfig,
    ProgramRef,
    ProgramStore,
    utc_now,
)
from .skills import SKILL_FILE, SkillFolder, parse_skill_md

__all__ = [
    "BASE_BRANCH",
    "CONFIG_PATH",
    "FRONTIER_PREFIX",
    "PROGRAM_PREFIX",
    "SKILLS_DIR",
    "SKILL_FILE",
    "GitBackend",
    "LoadedProgram",
    "MemoryBackend",
    "ProgramConfig",
    "ProgramRef",
    "ProgramStore",
    "SkillFolder",
    "StoreBackend",
    "parse_skill_md",
    "utc_now",
]
