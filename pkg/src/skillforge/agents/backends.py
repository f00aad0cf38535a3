"""LLM / agent backends: a vendor-neutral HTTP chat client and a CLI shell-out."""

from __future__ import annotations

import logging
import os
import subprocess
import time
from typing import Callable, Protocol, Sequence, TypeVar

import requests

from ..errors import BackendError, ConfigError
from .types import BackendRequest, BackendResponse

log = logging.getLogger(__name__)

T = TypeVar("T")


class ChatBackend(Protocol):
    def complete(self, request: BackendRequest) -> BackendResponse: ...


def with_retries(fn: Callable[[], T], attempts: int = 3, base_delay: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep) -> T:
    """Call ``fn`` up to ``attempts`` times, doubling the delay after each BackendError."""
    last: BackendError | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except BackendError as exc:
            last = exc
            if attempt < attempts - 1:
                delay = base_delay * 2**attempt
                log.warning("backend error (attempt %d/%d), retrying in %.1fs: %s",
                            attempt + 1, attempts, delay, exc)
                sleep(delay)
    assert last is not None
    raise last


class HttpChatBackend:
    """POST ``{model, system, messages, max_tokens}``; expect ``{content, usage}`` back.

    The credential is read from the environment variable named by
    ``api_key_env`` at call time and is never stored on the instance.
    """

    def __init__(self, base_url: str, model: str, api_key_env: str | None = None,
                 timeout: float = 600.0, attempts: int = 3, base_delay: float = 1.0,
                 session: requests.Session | None = None):
        if not base_url:
            raise ConfigError("HTTP backend needs a base_url")
        self.base_url = base_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.attempts = attempts
        self.base_delay = base_delay
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, payload: dict) -> BackendResponse:
        try:
            resp = self.session.post(self.base_url, json=payload, headers=self._headers(),
                                     timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"transport error: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        if resp.status_code >= 400:
            # client errors will not improve on retry
            raise ConfigError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise BackendError(f"response is not JSON: {resp.text[:200]}") from exc
        content = data.get("content")
        if not isinstance(content, str) or not content.strip():
            raise BackendError("response has empty content")
        usage = {k: int(v) for k, v in (data.get("usage") or {}).items() if isinstance(v, (int, float))}
        transcript = payload["messages"] + [{"role": "assistant", "content": content}]
        return BackendResponse(content, transcript, usage)

    def complete(self, request: BackendRequest) -> BackendResponse:
        payload = {
            "model": self.model,
            "system": request.system,
            "messages": list(request.messages),
            "max_tokens": request.max_tokens,
        }
        return with_retries(lambda: self._post(payload), self.attempts, self.base_delay)


class ShellBackend:
    """Run a local coding-agent CLI inside the program's exported directory.

    ``command`` is an argv list; ``{prompt}``, ``{system}`` and ``{tools}``
    placeholders are substituted. When no argument mentions ``{prompt}``,
    the prompt is written to stdin instead. Stdout is the final answer.
    """

    def __init__(self, command: Sequence[str], timeout: float = 1800.0, attempts: int = 3,
                 base_delay: float = 1.0, env: dict[str, str] | None = None):
        if not command:
            raise ConfigError("shell backend needs a command")
        self.command = list(command)
        self.timeout = timeout
        self.attempts = attempts
        self.base_delay = base_delay
        self.env = env or {}

    def _run_once(self, request: BackendRequest) -> BackendResponse:
        prompt = "\n\n".join(m["content"] for m in request.messages if m.get("role") == "user")
        subs = {"prompt": prompt, "system": request.system, "tools": ",".join(request.allowed_tools)}
        argv = []
        for arg in self.command:
            for key, value in subs.items():
                arg = arg.replace("{" + key + "}", value)
            argv.append(arg)
        use_stdin = not any("{prompt}" in arg for arg in self.command)
        start = time.monotonic()
        try:
            proc = subprocess.run(
                argv,
                input=prompt if use_stdin else None,
                capture_output=True,
                text=True,
                cwd=request.workdir,
                timeout=self.timeout,
                env={**os.environ, **self.env},
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendError(f"agent command failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise BackendError(f"agent exited {proc.returncode}: {proc.stderr[-500:]}")
        content = proc.stdout.strip()
        if not content:
            raise BackendError("agent produced no output")
        transcript = list(request.messages) + [{"role": "assistant", "content": content}]
        return BackendResponse(content, transcript, {"wall_ms": int((time.monotonic() - start) * 1000)})

    def complete(self, request: BackendRequest) -> BackendResponse:
        return with_retries(lambda: self._run_once(request), self.attempts, self.base_delay)
