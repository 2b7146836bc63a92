"""Elaboration generation under the three prompting conditions.

Conditions differ only in how the prior context is wrapped: bare context,
context plus a generic instruction, or a question-answering frame carrying an
implicit-question prompt. Only prior-context sentences ever enter a prompt;
the elaboration itself and the post-context never do.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import ContextWindow
from .errors import ConfigError
from .prompts import (
    ELAB_CONTEXT_LAYOUT,
    ELAB_GENERIC_LAYOUT,
    ELAB_QUD_LAYOUT,
    GENERIC_INSTRUCTION,
    ROLE_CONTEXT,
    ROLE_QUESTION_CUE,
    AssembledPrompt,
    DecodeParams,
    GenerationRecord,
    run_generation,
)

CONDITION_KINDS = ("context_only", "generic", "qud")


@dataclass(frozen=True)
class ElabPromptCondition:
    kind: str
    question: str | None = None

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise ConfigError(f"unknown condition {self.kind!r}; expected one of {CONDITION_KINDS}")
        if self.kind == "qud" and not (self.question and self.question.strip()):
            raise ConfigError("qud condition requires a question")
        if self.kind != "qud" and self.question is not None:
            raise ConfigError(f"{self.kind} condition takes no question")


def build_elab_prompt(context: ContextWindow, condition: ElabPromptCondition) -> AssembledPrompt:
    """Render one of the three prompt conditions from prior context only."""
    if condition.kind in ("generic", "qud") and not context.pre:
        raise ConfigError(f"{condition.kind} condition requires nonempty prior context")
    segments: list[tuple[str, str]] = [(ROLE_CONTEXT, s.text) for s in context.pre]
    if condition.kind == "context_only":
        layout = ELAB_CONTEXT_LAYOUT
    elif condition.kind == "generic":
        layout = ELAB_GENERIC_LAYOUT
        segments.append((ROLE_QUESTION_CUE, GENERIC_INSTRUCTION))
    else:
        layout = ELAB_QUD_LAYOUT
        segments.append((ROLE_QUESTION_CUE, condition.question))
    return AssembledPrompt.build(segments, {}, layout)


def _first_nonempty_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


def generate_elaboration(
    prompt: AssembledPrompt,
    backend,
    runner,
    decode: DecodeParams = DecodeParams(),
) -> GenerationRecord:
    """Generate and keep the first non-empty output line (elaborations are
    single sentences; anything after is generator overflow)."""
    return run_generation(
        prompt, backend, runner, decode, kind="elaboration", postprocess=_first_nonempty_line
    )
