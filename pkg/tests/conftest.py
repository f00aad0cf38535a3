from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from skillforge.data import DatasetSplits, Example
from skillforge.store import MemoryBackend, ProgramStore

sys.path.insert(0, str(Path(__file__).parent))

FIXED_TIME = "2026-01-01T00:00:00+00:00"


def fixed_clock() -> str:
    return FIXED_TIME


def make_examples(n: int, categories: int = 2, prefix: str = "q") -> list[Example]:
    return [
        Example(f"{prefix}{i:03d}", f"What is quantity {i}?", str(1000 + 7 * i), f"c{i % categories}")
        for i in range(n)
    ]


def toy_splits(n_train: int = 10, n_val: int = 10) -> DatasetSplits:
    train = make_examples(n_train, prefix="t")
    pools: dict[str, list[Example]] = {}
    for ex in train:
        pools.setdefault(ex.category, []).append(ex)
    return DatasetSplits(pools, make_examples(n_val, prefix="v"), [])


@pytest.fixture
def git_repo(tmp_path: Path) -> Path:
    repo = tmp_path / "repo"
    repo.mkdir()
    env = ["-c", "user.name=t", "-c", "user.email=t@t"]
    subprocess.run(["git", "init", "-q", "-b", "main", str(repo)], check=True)
    (repo / "README.md").write_text("codebase\n")
    subprocess.run(["git", "-C", str(repo), "add", "."], check=True)
    subprocess.run(["git", "-C", str(repo), *env, "commit", "-qm", "init"], check=True)
    return repo


@pytest.fixture
def mem_store() -> ProgramStore:
    store = ProgramStore(MemoryBackend({"README.md": "codebase\n"}), clock=fixed_clock)
    store.init_base("Answer the question.", ["read"])
    return store


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if outcome != "error" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1][len("test_criterion_"):]
            number, _, label = name.partition("_")
            lines.append((int(number), "PASS" if outcome == "passed" else "FAIL", label.replace("_", " ")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, verdict, label in sorted(lines):
            terminalreporter.write_line(f"criterion {number}: {verdict}  {label}")
