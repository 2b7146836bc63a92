"""Model-input assembly for the five question-generation configurations,
generation dispatch, and target-span prediction.

Two input families exist. Answer-aware configs see the full prior context
with the anchor sentence delimited, then the elaboration itself. Expectation-
driven configs see only context before the anchor plus the anchor with its
target span delimited (gold or predicted) and never the elaboration. The
annotated anchor is always used; anchor prediction is out of scope.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .corpus import ContextWindow, Document, ElaborationInstance, Sentence, TargetSpan, detokenize
from .errors import AlignmentError, ConfigError, IntegrityError
from .prompts import (
    DEFAULT_QG_DELIMITERS,
    QG_LAYOUT,
    ROLE_ANCHOR,
    ROLE_CONTEXT,
    ROLE_ELABORATION,
    ROLE_QUESTION_CUE,
    ROLE_TARGET_CLOSE,
    ROLE_TARGET_OPEN,
    AssembledPrompt,
    DecodeParams,
    GenerationRecord,
    run_generation,
)

QG_CONFIG_NAMES = ("DCQA-base", "DCQA-ft", "INQ-GoldT-base", "INQ-GoldT-ft", "INQ-PredT")


@dataclass(frozen=True)
class TrainingRecipe:
    learning_rate: float
    epochs: int
    batch_size: int
    base_checkpoint_label: str

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("training recipe values must be positive")


# Recorded fine-tuning metadata; training itself is not executed here.
_RECIPES = {
    "DCQA-base": TrainingRecipe(5e-5, 5, 8, "gpt2-medium"),
    "DCQA-ft": TrainingRecipe(2e-5, 5, 2, "DCQA-base"),
    "INQ-GoldT-base": TrainingRecipe(5e-5, 7, 8, "gpt2-medium"),
    "INQ-GoldT-ft": TrainingRecipe(2e-5, 5, 2, "INQ-GoldT-base"),
    "INQ-PredT": TrainingRecipe(2e-5, 5, 2, "INQ-GoldT-base"),
}

SPAN_PREDICTOR_RECIPE = TrainingRecipe(5e-5, 3, 16, "distilbert-base-uncased")


@dataclass(frozen=True)
class QGConfig:
    name: str
    sees_elaboration: bool
    target_source: str  # none | gold | predicted
    training_recipe: TrainingRecipe

    def __post_init__(self):
        if self.name not in QG_CONFIG_NAMES:
            raise ConfigError(f"unknown QG config {self.name!r}; expected one of {QG_CONFIG_NAMES}")
        if self.sees_elaboration != self.name.startswith("DCQA"):
            raise ConfigError(f"{self.name}: sees_elaboration must be {self.name.startswith('DCQA')}")
        expected_target = {
            "DCQA-base": "none",
            "DCQA-ft": "none",
            "INQ-GoldT-base": "gold",
            "INQ-GoldT-ft": "gold",
            "INQ-PredT": "predicted",
        }[self.name]
        if self.target_source != expected_target:
            raise ConfigError(f"{self.name}: target_source must be {expected_target!r}")

    @classmethod
    def standard(cls, name: str) -> "QGConfig":
        if name not in QG_CONFIG_NAMES:
            raise ConfigError(f"unknown QG config {name!r}; expected one of {QG_CONFIG_NAMES}")
        return cls(
            name=name,
            sees_elaboration=name.startswith("DCQA"),
            target_source={"DCQA-base": "none", "DCQA-ft": "none"}.get(
                name, "predicted" if name == "INQ-PredT" else "gold"
            ),
            training_recipe=_RECIPES[name],
        )


def assemble_qg_input(
    instance: ElaborationInstance,
    config: QGConfig,
    doc: Document,
    anchor_index: int,
    target: TargetSpan | None = None,
    delimiters: dict[str, str] | None = None,
) -> AssembledPrompt:
    """Build the rendered model input for one (instance, annotation) pair.

    The anchor must be one of the window's prior-context sentences. Configs
    without a target slot ignore any supplied target.
    """
    delims = dict(DEFAULT_QG_DELIMITERS)
    if delimiters:
        delims.update(delimiters)
    window = instance.context
    pre_indices = [s.index for s in window.pre]
    if anchor_index not in pre_indices:
        raise IntegrityError(
            f"anchor {anchor_index} is not in the prior context {pre_indices} "
            f"of instance {instance.instance_id}"
        )

    segments: list[tuple[str, str]] = []
    if config.sees_elaboration:
        for s in window.pre:
            role = ROLE_ANCHOR if s.index == anchor_index else ROLE_CONTEXT
            segments.append((role, s.text))
        segments.append((ROLE_ELABORATION, window.elaboration.text))
    else:
        if config.target_source == "gold" and target is None:
            raise ConfigError(f"{config.name} requires a gold target span")
        if target is None:
            raise ConfigError(f"{config.name} requires a target span (predicted)")
        if target.sentence_index != anchor_index:
            raise IntegrityError(
                f"target sits in sentence {target.sentence_index}, anchor is {anchor_index}"
            )
        for s in window.pre:
            if s.index < anchor_index:
                segments.append((ROLE_CONTEXT, s.text))
        anchor_tokens = doc.sentence(anchor_index).tokens()
        segments.append((ROLE_ANCHOR, " ".join(anchor_tokens[: target.start_token])))
        segments.append((ROLE_TARGET_OPEN, " ".join(anchor_tokens[target.start_token : target.end_token])))
        segments.append((ROLE_TARGET_CLOSE, " ".join(anchor_tokens[target.end_token :])))
    segments.append((ROLE_QUESTION_CUE, ""))
    return AssembledPrompt.build(segments, delims, QG_LAYOUT)


def generate_question(
    prompt: AssembledPrompt,
    backend,
    runner,
    decode: DecodeParams = DecodeParams(),
) -> GenerationRecord:
    return run_generation(prompt, backend, runner, decode, kind="question")


class SpanClampWarning(UserWarning):
    pass


def predict_target(
    anchor_sentence: Sentence,
    context: ContextWindow,
    predictor,
) -> TargetSpan:
    """Ask the span backend for a target inside the anchor sentence; spans
    outside the sentence bounds are clamped with a warning."""
    tokens = anchor_sentence.tokens()
    start, end = predictor.predict(tokens, [s.text for s in context.pre])
    clamped_start = max(0, min(int(start), len(tokens) - 1))
    clamped_end = max(clamped_start + 1, min(int(end), len(tokens)))
    if (clamped_start, clamped_end) != (start, end):
        warnings.warn(
            f"predicted span ({start}, {end}) clamped to ({clamped_start}, {clamped_end})",
            SpanClampWarning,
            stacklevel=2,
        )
    return TargetSpan(
        sentence_index=anchor_sentence.index,
        start_token=clamped_start,
        end_token=clamped_end,
        surface_text=detokenize(tokens[clamped_start:clamped_end]),
    )


def span_prediction_metrics(
    predicted: list[TargetSpan], gold: list[TargetSpan]
) -> tuple[float, float]:
    """(exact match rate, micro-averaged token precision) over aligned lists."""
    if len(predicted) != len(gold):
        raise AlignmentError(f"{len(predicted)} predictions vs {len(gold)} gold spans")
    if not predicted:
        raise AlignmentError("no spans to score")
    exact = 0
    shared = 0
    predicted_total = 0
    for p, g in zip(predicted, gold):
        if (p.sentence_index, p.start_token, p.end_token) == (
            g.sentence_index,
            g.start_token,
            g.end_token,
        ):
            exact += 1
        shared += len(p.positions() & g.positions())
        predicted_total += p.end_token - p.start_token
    return exact / len(predicted), shared / predicted_total
