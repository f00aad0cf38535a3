from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conftest import make_examples
from skillforge.agents import (
    BackendRequest,
    ExecutionTrace,
    Failure,
    HttpChatBackend,
    LLMClassifier,
    LLMExecutor,
    LLMProposer,
    LLMSkillBuilder,
    MockExecutor,
    Proposal,
    ScriptedBackend,
    ScriptedProposer,
    ScriptedSkillBuilder,
    ShellBackend,
    build_prompt,
    build_skill,
    execute,
    extract_answer,
    parse_proposal,
    propose,
    with_retries,
)
from skillforge.agents.prompts import meta_skill
from skillforge.errors import BackendError, BuildError, ConfigError, ProposalError
from skillforge.store import BASE_BRANCH, SkillFolder


def failure(gt="4242", qid="v1"):
    ex = make_examples(1)[0]
    ex = type(ex)(qid, "How many?", gt, "c0")
    return Failure(ex, ExecutionTrace(qid, "17", [{"role": "assistant", "content": "17"}]), 0.0)


def fenced(obj):
    return "Here you go\n```json\n" + json.dumps(obj) + "\n```"


# -- parsing and validation ----------------------------------------------------

def test_extract_answer():
    assert extract_answer("thinking...\nFINAL: 42 ", "FINAL:") == "42"
    assert extract_answer("  42\n") == "42"


def test_parse_proposal_variants():
    p = parse_proposal(fenced({"kind": "new_skill", "target": "units", "rationale": "r",
                               "specification": "Normalise units."}))
    assert p == Proposal("new_skill", "units", "r", "Normalise units.")
    bare = parse_proposal('{"kind": "edit_prompt", "target": "system_prompt", "specification": "x"}')
    assert bare.kind == "edit_prompt"
    for bad in ["no json", '{"kind": "delete", "target": "a", "specification": "b"}',
                '{"kind": "new_skill", "target": "", "specification": "b"}']:
        with pytest.raises(ProposalError):
            parse_proposal(bad)


class _Flaky:
    def __init__(self, first, then):
        self.outputs = [first, then]
        self.reformats = 0

    def draft(self, context):
        return self.outputs[0]

    def reformat(self, context, previous, error):
        self.reformats += 1
        return self.outputs[1]


def test_propose_reformats_once():
    good = fenced({"kind": "new_skill", "target": "units", "specification": "Normalise units."})
    proposer = _Flaky("garbage", good)
    assert propose([failure()], "", proposer, {}).target_skill_name == "units"
    assert proposer.reformats == 1
    with pytest.raises(ProposalError):
        propose([failure()], "", _Flaky("garbage", "still garbage"), {})


def test_propose_rejects_leaks_and_bad_kinds():
    leak = fenced({"kind": "new_skill", "target": "s", "specification": "The answer is 4242."})
    with pytest.raises(ProposalError, match="leaks"):
        propose([failure("4242")], "", _Flaky(leak, leak), {})
    edit_missing = fenced({"kind": "edit_skill", "target": "s", "specification": "tweak"})
    with pytest.raises(ProposalError):
        propose([failure()], "", _Flaky(edit_missing, edit_missing), {})
    with pytest.raises(ProposalError):
        propose([], "", ScriptedProposer(), {})


def test_short_answers_do_not_trigger_leak_guard():
    spec = fenced({"kind": "new_skill", "target": "s", "specification": "Check 12 columns."})
    assert propose([failure("12")], "", _Flaky(spec, spec), {}).kind == "new_skill"


def test_scripted_proposer_context_render():
    proposer = ScriptedProposer("X")
    p = propose([failure()], "iter 1: admitted", proposer, {"other": "desc"})
    text = proposer.contexts[0].render()
    assert p.kind == "new_skill"
    assert "Ground truth: 4242" in text and "iter 1: admitted" in text and "- other: desc" in text


# -- execution -----------------------------------------------------------------

def test_execute_retries_then_marks_failure(mem_store):
    program = mem_store.load(BASE_BRANCH)
    ex = make_examples(1)[0]
    trace = execute(program, ex, MockExecutor(lambda p, e: "1", fail_ids={ex.id}), attempts=2)
    assert trace.failed and trace.predicted_answer == ""
    ok = execute(program, ex, MockExecutor(lambda p, e: "ANSWER: 7"), answer_delimiter="ANSWER:")
    assert not ok.failed and ok.predicted_answer == "7"


# -- skill building ------------------------------------------------------------

def test_build_skill_from_scripted_builder(mem_store):
    parent = mem_store.load(BASE_BRANCH)
    prop = Proposal("new_skill", "X", "r", "Verify figures twice.")
    folder = build_skill(parent, prop, ScriptedSkillBuilder())
    assert folder.name == "X" and "Revision 1" in folder.instructions


class _RawBuilder:
    def __init__(self, files):
        self.files = files

    def draft(self, parent, proposal):
        return fenced({"files": self.files})

    def draft_prompt(self, parent, proposal):
        return "New prompt with 4242 inside"


def test_build_skill_sandbox_and_leaks(mem_store):
    parent = mem_store.load(BASE_BRANCH)
    prop = Proposal("new_skill", "X", "r", "spec")
    md = SkillFolder("X", "d", "body").render_skill_md()
    with pytest.raises(BuildError):
        build_skill(parent, prop, _RawBuilder({"Y/SKILL.md": md}))
    with pytest.raises(BuildError):
        build_skill(parent, prop, _RawBuilder({"X/SKILL.md": md, "X/../../etc": "x"}))
    with pytest.raises(BuildError):
        build_skill(parent, prop, _RawBuilder({"X/notes.md": "no skill file"}))
    leaky = SkillFolder("X", "d", "answer is 4242").render_skill_md()
    with pytest.raises(BuildError, match="leaks"):
        build_skill(parent, prop, _RawBuilder({"X/SKILL.md": leaky}), ["4242"])
    with pytest.raises(BuildError):
        build_prompt(parent, Proposal("edit_prompt", "system_prompt", "", "s"), _RawBuilder({}), ["4242"])


# -- LLM-backed roles over a scripted transport -------------------------------

def test_llm_roles_over_scripted_backend(mem_store):
    program = mem_store.load(BASE_BRANCH)
    backend = ScriptedBackend(["42"])
    resp = LLMExecutor(backend).run(program, make_examples(1)[0])
    assert resp.content == "42"
    assert backend.requests[0].system.startswith("Answer the question.")

    prop_json = fenced({"kind": "new_skill", "target": "units", "specification": "s"})
    proposer = LLMProposer(ScriptedBackend(["oops", prop_json]))
    assert propose([failure()], "", proposer, {}).target_skill_name == "units"

    md = SkillFolder("units", "Use for units", "Steps.").render_skill_md()
    builder = LLMSkillBuilder(ScriptedBackend([fenced({"files": {"units/SKILL.md": md}})]))
    folder = build_skill(program, Proposal("new_skill", "units", "", "s"), builder)
    assert folder.description == "Use for units"
    assert "SKILL.md" in builder.system + builder.meta_skill
    assert meta_skill().startswith("---")


def test_llm_classifier():
    clf = LLMClassifier(ScriptedBackend(["Financial Tables\n"]))
    assert clf(make_examples(1)[0]) == "financial-tables"
    strict = LLMClassifier(ScriptedBackend(["weather"]), labels=["finance"])
    with pytest.raises(BackendError):
        strict(make_examples(1)[0])


# -- transports ----------------------------------------------------------------

def test_with_retries_backoff():
    delays, calls = [], []

    def fn():
        calls.append(1)
        if len(calls) < 3:
            raise BackendError("busy")
        return "ok"

    assert with_retries(fn, attempts=3, base_delay=0.5, sleep=delays.append) == "ok"
    assert delays == [0.5, 1.0]
    with pytest.raises(BackendError):
        with_retries(lambda: (_ for _ in ()).throw(BackendError("x")), attempts=2, sleep=lambda d: None)


class _Handler(BaseHTTPRequestHandler):
    statuses: list[int] = []
    seen: list[dict] = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.seen.append({"auth": self.headers.get("Authorization"), "body": body})
        status = self.statuses.pop(0) if self.statuses else 200
        payload = {"content": "The answer is 7", "usage": {"input_tokens": 3, "output_tokens": 4}}
        data = json.dumps(payload if status == 200 else {"error": "x"}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    _Handler.statuses, _Handler.seen = [], []
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat", _Handler
    server.shutdown()


def test_http_backend_contract(http_server, monkeypatch):
    url, handler = http_server
    monkeypatch.setenv("SKILLFORGE_TEST_KEY", "sekrit")
    backend = HttpChatBackend(url, "model-a", "SKILLFORGE_TEST_KEY", base_delay=0.0)
    handler.statuses = [503]
    resp = backend.complete(BackendRequest("sys", [{"role": "user", "content": "q"}], max_tokens=9))
    assert resp.content == "The answer is 7" and resp.usage == {"input_tokens": 3, "output_tokens": 4}
    assert len(handler.seen) == 2
    assert handler.seen[-1]["auth"] == "Bearer sekrit"
    assert handler.seen[-1]["body"] == {"model": "model-a", "system": "sys",
                                        "messages": [{"role": "user", "content": "q"}], "max_tokens": 9}
    assert "sekrit" not in json.dumps(vars(backend), default=str)
    handler.statuses = [400]
    with pytest.raises(ConfigError):
        backend.complete(BackendRequest("s", [{"role": "user", "content": "q"}]))


def test_http_backend_needs_key(http_server, monkeypatch):
    url, _ = http_server
    monkeypatch.delenv("SKILLFORGE_MISSING_KEY", raising=False)
    with pytest.raises(ConfigError):
        HttpChatBackend(url, "m", "SKILLFORGE_MISSING_KEY").complete(
            BackendRequest("s", [{"role": "user", "content": "q"}]))


def test_shell_backend_runs_in_workdir(tmp_path):
    (tmp_path / "marker.txt").write_text("skills here")
    script = "import sys,pathlib; print(sys.stdin.read().upper(), pathlib.Path('marker.txt').read_text())"
    backend = ShellBackend([sys.executable, "-c", script], attempts=1)
    resp = backend.complete(BackendRequest("s", [{"role": "user", "content": "hello"}], workdir=tmp_path))
    assert resp.content == "HELLO skills here"
    argv = ShellBackend([sys.executable, "-c", "import sys; print(sys.argv[1])", "{prompt}"], attempts=1)
    assert argv.complete(BackendRequest("s", [{"role": "user", "content": "{x}"}])).content == "{x}"
    failing = ShellBackend([sys.executable, "-c", "raise SystemExit(3)"], attempts=2, base_delay=0.0)
    with pytest.raises(BackendError):
        failing.complete(BackendRequest("s", [{"role": "user", "content": "q"}]))
