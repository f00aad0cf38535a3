from .backends import ChatBackend, HttpChatBackend, ShellBackend, with_retries
from .mocks import (
    MockExecutor,
    ScriptedBackend,
    ScriptedProposer,
    ScriptedSkillBuilder,
    skill_gated_executor,
    table_executor,
)
from .roles import (
    Executor,
    LLMClassifier,
    LLMExecutor,
    LLMProposer,
    LLMSkillBuilder,
    Proposer,
    ProposerContext,
    SkillBuilder,
    build_prompt,
    build_skill,
    execute,
    extract_answer,
    parse_proposal,
    propose,
)
from .types import BackendRequest, BackendResponse, ExecutionTrace, Failure, Proposal

__all__ = [
    "BackendRequest", "BackendResponse", "ChatBackend", "ExecutionTrace", "Executor",
    "Failure", "HttpChatBackend", "LLMClassifier", "LLMExecutor", "LLMProposer", "LLMSkillBuilder",
    "MockExecutor", "Proposal", "Proposer", "ProposerContext", "ScriptedBackend",
    "ScriptedProposer", "ScriptedSkillBuilder", "ShellBackend", "SkillBuilder",
    "build_prompt", "build_skill", "execute", "extract_answer", "parse_proposal",
    "propose", "skill_gated_executor", "table_executor", "with_retries",
]
