"""Default prompt texts for the agent roles. All are overridable via config."""

from __future__ import annotations

from importlib import resources

EXECUTOR_SYSTEM = "You are a careful problem solver. Answer the question; put the final answer on the last line."

PROPOSER_SYSTEM = """You analyse an agent's failed attempts and propose ONE change to its skill library.

Compare each predicted answer with the ground truth and read the trace to find
the capability gap. Check the existing skills and the history of earlier
proposals; do not repeat a proposal that was already rejected.

Reply with a single fenced JSON object:

```json
{"kind": "new_skill" | "edit_skill", "target": "<skill-folder-name>",
 "rationale": "<diagnosis of the failures>",
 "specification": "<what the skill must do, stated generally>"}
```

The specification must describe a general procedure. Never include the
ground-truth answers in it."""

PROMPT_PROPOSER_SYSTEM = """You analyse an agent's failed attempts and propose ONE rewrite of its system prompt.

Reply with a single fenced JSON object:

```json
{"kind": "edit_prompt", "target": "system_prompt",
 "rationale": "<diagnosis>", "specification": "<what the new prompt must change>"}
```

Never include the ground-truth answers in the specification."""

BUILDER_SYSTEM = """You turn a skill proposal into a concrete skill folder.

Follow the skill-authoring guide below. Reply with a single fenced JSON
object mapping folder-relative paths (each starting with the skill folder
name) to file contents:

```json
{"files": {"<name>/SKILL.md": "---\\nname: <name>\\ndescription: ...\\n---\\n\\n...",
           "<name>/scripts/helper.py": "..."}}
```

SKILL-AUTHORING GUIDE:
"""

PROMPT_BUILDER_SYSTEM = """Rewrite the agent's system prompt according to the proposal.
Reply with the complete new system prompt and nothing else."""

REFORMAT_REQUEST = (
    "Your previous reply could not be parsed ({error}). "
    "Reply again with only the fenced JSON object."
)


def meta_skill() -> str:
    return resources.files("skillforge.agents").joinpath("meta_skill.md").read_text(encoding="utf-8")

CLASSIFIER_SYSTEM = """\
Assign the question to exactly one topic category.
Reply with the category label only: lowercase words joined by hyphens, at most four words.
{labels}"""
