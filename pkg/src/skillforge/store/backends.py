"""Version-control backends behind the program store.

Both backends expose the same small contract: branch create/delete,
atomic multi-file commits, file reads at a branch, tags, and path-level
diffs. :class:`GitBackend` shells out to ``git`` and never touches the
working tree; :class:`MemoryBackend` keeps snapshots in dictionaries.
"""

from __future__ import annotations

import io
import os
import subprocess
import tarfile
import tempfile
from pathlib import Path
from typing import Iterable, Protocol

from ..errors import SetupError, StoreError


class StoreBackend(Protocol):
    default_branch: str

    def branches(self, prefix: str = "") -> list[str]: ...
    def branch_exists(self, name: str) -> bool: ...
    def create_branch(self, name: str, from_branch: str) -> None: ...
    def commit(self, branch: str, writes: dict[str, str], deletes: Iterable[str], message: str) -> str: ...
    def read_file(self, branch: str, path: str) -> str | None: ...
    def list_files(self, branch: str, prefix: str = "") -> list[str]: ...
    def delete_branch(self, name: str) -> None: ...
    def tag(self, name: str, branch: str) -> None: ...
    def delete_tag(self, name: str) -> None: ...
    def tags(self, prefix: str = "") -> list[str]: ...
    def changed_paths(self, a: str, b: str) -> set[str]: ...
    def export(self, branch: str, dest: str | Path) -> None: ...
    def check_clean(self) -> None: ...


class MemoryBackend:
    """In-process store; each branch holds a full snapshot of its files."""

    def __init__(self, files: dict[str, str] | None = None, default_branch: str = "main"):
        self.default_branch = default_branch
        self._branches: dict[str, dict[str, str]] = {default_branch: dict(files or {})}
        self._tags: dict[str, str] = {}
        self._commits = 0

    def _tree(self, branch: str) -> dict[str, str]:
        try:
            return self._branches[branch]
        except KeyError:
            raise StoreError(f"no such branch: {branch}") from None

    def branches(self, prefix: str = "") -> list[str]:
        return sorted(b for b in self._branches if b.startswith(prefix))

    def branch_exists(self, name: str) -> bool:
        return name in self._branches

    def create_branch(self, name: str, from_branch: str) -> None:
        if name in self._branches:
            raise StoreError(f"branch exists: {name}")
        self._branches[name] = dict(self._tree(from_branch))

    def commit(self, branch: str, writes: dict[str, str], deletes: Iterable[str], message: str) -> str:
        tree = self._tree(branch)
        for path in deletes:
            tree.pop(path, None)
        tree.update(writes)
        self._commits += 1
        return f"mem{self._commits:06d}"

    def read_file(self, branch: str, path: str) -> str | None:
        return self._tree(branch).get(path)

    def list_files(self, branch: str, prefix: str = "") -> list[str]:
        return sorted(p for p in self._tree(branch) if p.startswith(prefix))

    def delete_branch(self, name: str) -> None:
        self._tree(name)
        del self._branches[name]

    def tag(self, name: str, branch: str) -> None:
        self._tree(branch)
        self._tags[name] = branch

    def delete_tag(self, name: str) -> None:
        self._tags.pop(name, None)

    def tags(self, prefix: str = "") -> list[str]:
        return sorted(t for t in self._tags if t.startswith(prefix))

    def changed_paths(self, a: str, b: str) -> set[str]:
        ta, tb = self._tree(a), self._tree(b)
        return {p for p in ta.keys() | tb.keys() if ta.get(p) != tb.get(p)}

    def export(self, branch: str, dest: str | Path) -> None:
        root = Path(dest)
        for rel, text in self._tree(branch).items():
            target = root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")

    def check_clean(self) -> None:
        return None

    def snapshot(self) -> dict:
        """Deterministic dump of every branch and tag, for reproducibility checks."""
        return {
            "branches": {b: dict(sorted(t.items())) for b, t in sorted(self._branches.items())},
            "tags": dict(sorted(self._tags.items())),
        }


_GIT_IDENTITY = {
    "GIT_AUTHOR_NAME": "skillforge",
    "GIT_AUTHOR_EMAIL": "skillforge@localhost",
    "GIT_COMMITTER_NAME": "skillforge",
    "GIT_COMMITTER_EMAIL": "skillforge@localhost",
}


class GitBackend:
    """Drive an on-disk git repository through plumbing commands.

    Commits are built in a throwaway index so the user's checkout is never
    modified.
    """

    def __init__(self, repo: str | Path):
        self.repo = Path(repo)
        if not self.repo.is_dir():
            raise SetupError(f"repository path does not exist: {self.repo}")
        probe = self._run("rev-parse", "--git-dir", check=False)
        if probe.returncode != 0:
            raise SetupError(f"not a git repository: {self.repo}")
        head = self._run("symbolic-ref", "--short", "-q", "HEAD", check=False)
        self.default_branch = head.stdout.strip() or "HEAD"

    def _run(self, *args: str, input: str | bytes | None = None, env: dict | None = None,
             check: bool = True, text: bool = True) -> subprocess.CompletedProcess:
        full_env = {**os.environ, **_GIT_IDENTITY, **(env or {})}
        proc = subprocess.run(
            ["git", "-C", str(self.repo), *args],
            input=input, capture_output=True, text=text, env=full_env,
        )
        if check and proc.returncode != 0:
            err = proc.stderr if text else proc.stderr.decode(errors="replace")
            raise StoreError(f"git {' '.join(args)} failed: {err.strip()}")
        return proc

    def _rev(self, ref: str) -> str | None:
        proc = self._run("rev-parse", "-q", "--verify", f"{ref}^{{commit}}", check=False)
        return proc.stdout.strip() or None

    def check_clean(self) -> None:
        if self._rev("HEAD") is None:
            raise SetupError("repository has no commits; commit the codebase first")
        if self._run("status", "--porcelain").stdout.strip():
            raise SetupError("working tree is dirty; commit or stash changes first")

    def branches(self, prefix: str = "") -> list[str]:
        out = self._run("for-each-ref", "--format=%(refname:lstrip=2)", "refs/heads/").stdout
        return sorted(n for n in out.split() if n.startswith(prefix))

    def branch_exists(self, name: str) -> bool:
        return self._rev(f"refs/heads/{name}") is not None

    def create_branch(self, name: str, from_branch: str) -> None:
        if self.branch_exists(name):
            raise StoreError(f"branch exists: {name}")
        base = self._rev(f"refs/heads/{from_branch}") or self._rev(from_branch)
        if base is None:
            raise StoreError(f"no such branch: {from_branch}")
        self._run("update-ref", f"refs/heads/{name}", base, "0" * 40)

    def commit(self, branch: str, writes: dict[str, str], deletes: Iterable[str], message: str) -> str:
        parent = self._rev(f"refs/heads/{branch}")
        if parent is None:
            raise StoreError(f"no such branch: {branch}")
        lines = []
        for path in deletes:
            lines.append(f"0 {'0' * 40}\t{path}")
        for path, text in writes.items():
            sha = self._run("hash-object", "-w", "--stdin", input=text.encode("utf-8"),
                            text=False).stdout.decode().strip()
            lines.append(f"100644 {sha}\t{path}")
        with tempfile.TemporaryDirectory() as tmp:
            env = {"GIT_INDEX_FILE": str(Path(tmp) / "index")}
            self._run("read-tree", parent, env=env)
            if lines:
                self._run("update-index", "--index-info", input="\n".join(lines) + "\n", env=env)
            tree = self._run("write-tree", env=env).stdout.strip()
        if tree == self._run("rev-parse", f"{parent}^{{tree}}").stdout.strip():
            return parent
        new = self._run("commit-tree", tree, "-p", parent, "-m", message).stdout.strip()
        self._run("update-ref", f"refs/heads/{branch}", new, parent)
        return new

    def read_file(self, branch: str, path: str) -> str | None:
        proc = self._run("cat-file", "-p", f"refs/heads/{branch}:{path}", check=False, text=False)
        if proc.returncode != 0:
            return None
        return proc.stdout.decode("utf-8")

    def list_files(self, branch: str, prefix: str = "") -> list[str]:
        args = ["ls-tree", "-r", "--name-only", f"refs/heads/{branch}"]
        if prefix:
            args += ["--", prefix]
        out = self._run(*args).stdout.splitlines()
        return sorted(p for p in out if p.startswith(prefix))

    def delete_branch(self, name: str) -> None:
        if not self.branch_exists(name):
            raise StoreError(f"no such branch: {name}")
        self._run("update-ref", "-d", f"refs/heads/{name}")

    def tag(self, name: str, branch: str) -> None:
        target = self._rev(f"refs/heads/{branch}")
        if target is None:
            raise StoreError(f"no such branch: {branch}")
        self._run("tag", "-f", name, target)

    def delete_tag(self, name: str) -> None:
        self._run("tag", "-d", name, check=False)

    def tags(self, prefix: str = "") -> list[str]:
        out = self._run("tag", "-l", f"{prefix}*").stdout
        return sorted(out.split())

    def changed_paths(self, a: str, b: str) -> set[str]:
        out = self._run("diff", "--name-only", f"refs/heads/{a}", f"refs/heads/{b}").stdout
        return set(out.splitlines())

    def export(self, branch: str, dest: str | Path) -> None:
        data = self._run("archive", "--format=tar", f"refs/heads/{branch}", text=False).stdout
        Path(dest).mkdir(parents=True, exist_ok=True)
        with tarfile.open(fileobj=io.BytesIO(data)) as tar:
            tar.extractall(dest)
