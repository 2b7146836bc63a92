"""Prompt assembly primitives and the generation record shared by the
question and elaboration generators.

A prompt is an ordered list of (role, text) segments plus a delimiter map and
a layout id; rendering is a pure function of those three, so re-rendering is
idempotent and byte-stable. Layout ids are recorded in every generation
record for provenance.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .backends import content_key
from .errors import ConfigError, DegenerateOutputError, OverLengthError

ROLE_CONTEXT = "context"
ROLE_ANCHOR = "anchor"
ROLE_ELABORATION = "elaboration"
ROLE_TARGET_OPEN = "target-open"
ROLE_TARGET_CLOSE = "target-close"
ROLE_QUESTION_CUE = "question-cue"

GENERIC_INSTRUCTION = "Please explain the last sentence in simple terms:"

DEFAULT_QG_DELIMITERS = {
    ROLE_CONTEXT: "<s>",
    ROLE_ANCHOR: "<anchor>",
    ROLE_ELABORATION: "<elab>",
    ROLE_TARGET_OPEN: "<t>",
    ROLE_TARGET_CLOSE: "</t>",
    ROLE_QUESTION_CUE: "<question>",
}

QG_LAYOUT = "qg-tagged-v1"
ELAB_CONTEXT_LAYOUT = "elab-context-v1"
ELAB_GENERIC_LAYOUT = "elab-generic-v1"
ELAB_QUD_LAYOUT = "elab-qud-v1"


def render_prompt(
    segments: Sequence[tuple[str, str]],
    delimiter_map: Mapping[str, str],
    layout: str,
) -> str:
    if layout == QG_LAYOUT:
        parts: list[str] = []
        for role, text in segments:
            parts.append(delimiter_map[role])
            if text:
                parts.append(text)
        return " ".join(parts)
    context = " ".join(text for role, text in segments if role == ROLE_CONTEXT)
    if layout == ELAB_CONTEXT_LAYOUT:
        return context
    if layout == ELAB_GENERIC_LAYOUT:
        return f"{context}\n{GENERIC_INSTRUCTION}"
    if layout == ELAB_QUD_LAYOUT:
        question = next(text for role, text in segments if role == ROLE_QUESTION_CUE)
        return f"Context: {context}\nQuestion: {question}\nAnswer:"
    raise ConfigError(f"unknown prompt layout {layout!r}")


@dataclass(frozen=True)
class AssembledPrompt:
    segments: tuple[tuple[str, str], ...]
    delimiter_map: tuple[tuple[str, str], ...]
    layout: str
    rendered: str

    @classmethod
    def build(
        cls,
        segments: Sequence[tuple[str, str]],
        delimiter_map: Mapping[str, str],
        layout: str,
    ) -> "AssembledPrompt":
        segs = tuple((role, text) for role, text in segments)
        return cls(
            segments=segs,
            delimiter_map=tuple(sorted(delimiter_map.items())),
            layout=layout,
            rendered=render_prompt(segs, dict(delimiter_map), layout),
        )

    def rerender(self) -> str:
        return render_prompt(self.segments, dict(self.delimiter_map), self.layout)

    def drop_oldest_context(self) -> "AssembledPrompt":
        for i, (role, _) in enumerate(self.segments):
            if role == ROLE_CONTEXT:
                remaining = self.segments[:i] + self.segments[i + 1 :]
                return AssembledPrompt.build(remaining, dict(self.delimiter_map), self.layout)
        raise OverLengthError("prompt over length with no context sentences left to drop")

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 128
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")


@dataclass(frozen=True)
class GenerationRecord:
    kind: str  # "question" | "elaboration"
    text: str
    prompt_rendered: str
    prompt_sha256: str
    backend_id: str
    decode: DecodeParams
    cache_key: str
    finish_reason: str
    layout: str
    truncated_context_sentences: int = 0

    def to_obj(self) -> dict:
        return {
            "kind": self.kind,
            "text": self.text,
            "prompt_sha256": self.prompt_sha256,
            "prompt_rendered": self.prompt_rendered,
            "backend_id": self.backend_id,
            "decode": {
                "temperature": self.decode.temperature,
                "max_tokens": self.decode.max_tokens,
                "stop": list(self.decode.stop),
            },
            "cache_key": self.cache_key,
            "finish_reason": self.finish_reason,
            "layout": self.layout,
            "truncated_context_sentences": self.truncated_context_sentences,
        }


def _request_payload(prompt: AssembledPrompt, decode: DecodeParams) -> dict:
    return {
        "prompt": prompt.rendered,
        "max_tokens": decode.max_tokens,
        "temperature": decode.temperature,
        "stop": list(decode.stop),
    }


def run_generation(
    prompt: AssembledPrompt,
    backend,
    runner,
    decode: DecodeParams,
    kind: str,
    postprocess=None,
) -> GenerationRecord:
    """Dispatch through the runner, truncating oldest context sentences on
    over-length rejections; the drop count lands in the record."""
    current = prompt
    truncated = 0
    while True:
        request = _request_payload(current, decode)
        try:
            response = runner.call(backend, request)
            break
        except OverLengthError:
            current = current.drop_oldest_context()
            truncated += 1
    text = response["text"]
    if postprocess is not None:
        text = postprocess(text)
    text = text.strip()
    if not text:
        raise DegenerateOutputError(f"backend produced empty {kind}")
    if truncated:
        warnings.warn(f"dropped {truncated} oldest context sentences to fit", stacklevel=2)
    return GenerationRecord(
        kind=kind,
        text=text,
        prompt_rendered=current.rendered,
        prompt_sha256=current.sha256,
        backend_id=backend.descriptor.backend_id,
        decode=decode,
        cache_key=content_key(backend.descriptor.backend_id, request),
        finish_reason=response.get("finish_reason", "stop"),
        layout=current.layout,
        truncated_context_sentences=truncated,
    )
