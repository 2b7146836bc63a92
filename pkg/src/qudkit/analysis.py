"""Corpus statistics over loaded annotations.

Covers annotator agreement on anchors, question similarity within and across
elaborations, target span characteristics (length, POS, verbs, proper nouns),
word-frequency comparison of targets against full documents, question-type
tallies, and discourse-relation tallies against a shipped reference
distribution.

Everything here is a pure function over immutable corpus objects; pluggable
backends (similarity, POS tagger, question-type classifier) are passed in.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .corpus import (
    TOKENIZER_FINGERPRINT,
    Document,
    ElaborationInstance,
    QUDAnnotation,
    anchor_distance,
    tokenize,
)
from .errors import EmptyInputError, StatisticsError, ValidationError
from .metrics import ScorePair

SimilarityMetric = Callable[[str, str], ScorePair]

PROPER_NOUN_TAGS = frozenset({"NNP", "NNPS"})

QUESTION_TYPE_LABELS = (
    "Concept",
    "Example",
    "Consequence",
    "Cause",
    "Procedural",
    "Verification",
    "Comparison",
    "Extent",
    "Other",
)

PDTB3_LEVEL2_LABELS = frozenset(
    {
        "Temporal.Asynchronous",
        "Temporal.Synchronous",
        "Contingency.Cause",
        "Contingency.Cause+Belief",
        "Contingency.Cause+SpeechAct",
        "Contingency.Condition",
        "Contingency.Condition+SpeechAct",
        "Contingency.Negative-condition",
        "Contingency.Purpose",
        "Comparison.Concession",
        "Comparison.Concession+SpeechAct",
        "Comparison.Contrast",
        "Comparison.Similarity",
        "Expansion.Conjunction",
        "Expansion.Disjunction",
        "Expansion.Equivalence",
        "Expansion.Exception",
        "Expansion.Instantiation",
        "Expansion.Level-of-detail",
        "Expansion.Manner",
        "Expansion.Substitution",
        "EntRel",
        "NoRel",
        "Hypophora",
    }
)


def config_fingerprint(backend_ids: Sequence[str] = (), seed: int | None = None) -> dict:
    """Provenance block embedded in every serialized report."""
    return {
        "tokenizer": TOKENIZER_FINGERPRINT,
        "backends": sorted(backend_ids),
        "seed": seed,
    }


# ----------------------------------------------------------- agreement


@dataclass(frozen=True)
class AgreementReport:
    fleiss_kappa: float
    free_marginal_kappa: float
    percent_agreement: float
    n_items: int
    n_categories: int
    n_excluded: int = 0

    def __post_init__(self):
        if not 0.0 <= self.percent_agreement <= 1.0:
            raise ValueError("percent_agreement outside [0, 1]")
        for k in (self.fleiss_kappa, self.free_marginal_kappa):
            if not -1.0 <= k <= 1.0:
                raise ValueError(f"kappa {k} outside [-1, 1]")


def fleiss_kappa_from_matrix(counts) -> tuple[float, float, float]:
    """(fixed-marginal kappa, free-marginal kappa, percent agreement).

    Accepts an items x categories count matrix; rows may have different
    rater totals (>= 2 each). Unanimous ratings return exactly 1.0.
    """
    m = np.asarray(counts, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise StatisticsError("agreement matrix must be non-empty and 2-d")
    n_i = m.sum(axis=1)
    if np.any(n_i < 2):
        raise StatisticsError("every item needs at least 2 ratings")
    p_i = (m * (m - 1)).sum(axis=1) / (n_i * (n_i - 1))
    p_bar = float(p_i.mean())
    p_j = m.sum(axis=0) / m.sum()
    p_e = float((p_j**2).sum())
    n_cats = m.shape[1]
    if p_bar >= 1.0:
        # unanimity (also the only way p_e can hit 1); keep both kappas exact
        return 1.0, 1.0, 1.0
    kappa = (p_bar - p_e) / (1.0 - p_e)
    free = (p_bar - 1.0 / n_cats) / (1.0 - 1.0 / n_cats)
    return kappa, free, p_bar


def anchor_agreement(
    annotations_by_instance: Mapping[str, Sequence[QUDAnnotation]],
    instances: Mapping[str, ElaborationInstance],
) -> AgreementReport:
    """Agreement on anchor distance: one item per instance, one category per
    distinct distance value (raw integers, unbinned). Instances with fewer
    than 2 annotations are excluded and counted."""
    items: list[list[int]] = []
    excluded = 0
    for instance_id, anns in annotations_by_instance.items():
        if len(anns) < 2:
            excluded += 1
            continue
        inst = instances[instance_id]
        items.append([anchor_distance(a, inst) for a in anns])
    if not items:
        raise EmptyInputError("no instance has 2+ annotations")
    categories = sorted({d for row in items for d in row})
    cat_index = {c: i for i, c in enumerate(categories)}
    matrix = np.zeros((len(items), len(categories)))
    for r, row in enumerate(items):
        for d in row:
            matrix[r, cat_index[d]] += 1
    kappa, free, agreement = fleiss_kappa_from_matrix(matrix)
    return AgreementReport(
        fleiss_kappa=kappa,
        free_marginal_kappa=free,
        percent_agreement=agreement,
        n_items=len(items),
        n_categories=len(categories),
        n_excluded=excluded,
    )


# --------------------------------------------- question similarity


@dataclass(frozen=True)
class SimilarityReport:
    same_elab_mean: ScorePair
    random_pair_mean: ScorePair
    n_same_pairs: int
    n_random_pairs: int


def _mean_pair(pairs: Sequence[ScorePair]) -> ScorePair:
    return ScorePair(
        raw=float(np.mean([p.raw for p in pairs])),
        rescaled=float(np.mean([p.rescaled for p in pairs])),
    )


def pairwise_question_similarity(
    annotations_by_instance: Mapping[str, Sequence[QUDAnnotation]],
    doc_of_instance: Mapping[str, str],
    similarity: SimilarityMetric,
    rng_seed: int,
) -> SimilarityReport:
    """Mean similarity of same-elaboration question pairs vs a seed-sampled
    baseline of question pairs from the same article but different
    elaborations (baseline size matched to the same-elaboration pair count
    when enough cross pairs exist). Organizational annotations (no question)
    are skipped."""
    questions: dict[str, list[str]] = {}
    for instance_id, anns in sorted(annotations_by_instance.items()):
        qs = [a.question for a in anns if a.question.strip()]
        if qs:
            questions[instance_id] = qs

    same_scores: list[ScorePair] = []
    for instance_id, qs in questions.items():
        for q1, q2 in itertools.combinations(qs, 2):
            same_scores.append(similarity(q1, q2))
    if not same_scores:
        raise EmptyInputError("no instance has 2+ question annotations")

    by_doc: dict[str, list[tuple[str, str]]] = {}
    for instance_id, qs in questions.items():
        doc_id = doc_of_instance[instance_id]
        for q in qs:
            by_doc.setdefault(doc_id, []).append((instance_id, q))
    cross_pairs: list[tuple[str, str]] = []
    for doc_id in sorted(by_doc):
        entries = by_doc[doc_id]
        for (ia, qa), (ib, qb) in itertools.combinations(entries, 2):
            if ia != ib:
                cross_pairs.append((qa, qb))
    if not cross_pairs:
        raise EmptyInputError("no same-article cross-elaboration question pairs")
    rng = random.Random(rng_seed)
    n_needed = len(same_scores)
    if len(cross_pairs) > n_needed:
        sampled = rng.sample(cross_pairs, n_needed)
    else:
        sampled = cross_pairs
    random_scores = [similarity(qa, qb) for qa, qb in sampled]

    return SimilarityReport(
        same_elab_mean=_mean_pair(same_scores),
        random_pair_mean=_mean_pair(random_scores),
        n_same_pairs=len(same_scores),
        n_random_pairs=len(random_scores),
    )


# -------------------------------------------------------- target spans


def target_overlap_rate(
    annotations_by_instance: Mapping[str, Sequence[QUDAnnotation]],
    mode: str = "any_overlap",
) -> float:
    """Fraction of same-instance annotation pairs whose targets overlap.

    any_overlap: same sentence and at least one shared token index (default);
    exact_span: identical (sentence, start, end).
    """
    if mode not in ("any_overlap", "exact_span"):
        raise ValueError(f"unknown overlap mode {mode!r}")
    agree = 0
    total = 0
    for anns in annotations_by_instance.values():
        for a, b in itertools.combinations(anns, 2):
            total += 1
            ta, tb = a.target, b.target
            if ta.sentence_index != tb.sentence_index:
                continue
            if mode == "exact_span":
                if (ta.start_token, ta.end_token) == (tb.start_token, tb.end_token):
                    agree += 1
            else:
                if ta.start_token < tb.end_token and tb.start_token < ta.end_token:
                    agree += 1
    if total == 0:
        raise EmptyInputError("no instance has 2+ annotations")
    return agree / total


@dataclass(frozen=True)
class TargetStats:
    mean_len_tokens: float
    std_len_tokens: float
    pos_histogram: dict[str, int]
    pct_with_verb: float
    pct_with_proper_noun: float
    total_target_tokens: int

    def __post_init__(self):
        if sum(self.pos_histogram.values()) != self.total_target_tokens:
            raise ValueError("POS histogram does not sum to total target tokens")
        for pct in (self.pct_with_verb, self.pct_with_proper_noun):
            if not 0.0 <= pct <= 1.0:
                raise ValueError("percentage outside [0, 1]")


def target_statistics(
    annotations: Sequence[QUDAnnotation],
    instances: Mapping[str, ElaborationInstance],
    documents: Mapping[str, Document],
    pos_tagger,
) -> TargetStats:
    """Token-length and POS profile of annotated targets.

    The tagger sees the full anchor sentence (context-aware tagging), the
    histogram covers only the target slice. std is population (ddof 0).
    """
    lengths: list[int] = []
    histogram: dict[str, int] = {}
    with_verb = 0
    with_proper = 0
    for ann in annotations:
        doc = documents[instances[ann.instance_id].doc_id]
        sent_tokens = doc.sentence(ann.target.sentence_index).tokens()
        tags = pos_tagger.tag(sent_tokens)
        span_tags = tags[ann.target.start_token : ann.target.end_token]
        lengths.append(ann.target.end_token - ann.target.start_token)
        for t in span_tags:
            histogram[t] = histogram.get(t, 0) + 1
        if any(t.startswith("VB") for t in span_tags):
            with_verb += 1
        if any(t in PROPER_NOUN_TAGS for t in span_tags):
            with_proper += 1
    if not lengths:
        raise EmptyInputError("no annotations supplied")
    return TargetStats(
        mean_len_tokens=float(np.mean(lengths)),
        std_len_tokens=float(np.std(lengths)),
        pos_histogram=dict(sorted(histogram.items())),
        pct_with_verb=with_verb / len(lengths),
        pct_with_proper_noun=with_proper / len(lengths),
        total_target_tokens=int(sum(lengths)),
    )


# ------------------------------------------------------ word frequency


class FrequencyLexicon:
    """word -> log10 frequency per million, from a two-column TSV."""

    def __init__(self, table: Mapping[str, float]):
        self._table = {w.lower(): float(v) for w, v in table.items()}

    @classmethod
    def from_tsv(cls, path: str | Path) -> "FrequencyLexicon":
        table: dict[str, float] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"lexicon line {lineno}: expected 2 tab-separated columns")
            table[parts[0]] = float(parts[1])
        return cls(table)

    def get(self, word: str) -> float | None:
        return self._table.get(word.lower())

    def __len__(self) -> int:
        return len(self._table)


@dataclass(frozen=True)
class FrequencyTestReport:
    mean_log_freq_targets: float
    mean_log_freq_document: float
    t_statistic: float
    p_value: float
    n_target_tokens: int
    n_doc_tokens: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [0, 1]")


def _word_tokens(tokens: Sequence[str]) -> list[str]:
    # only alphabetic-bearing tokens are lexicon material
    return [t for t in tokens if any(ch.isalpha() for ch in t)]


def _lookup_sample(
    words: Sequence[str], lexicon: FrequencyLexicon, oov_policy: str, floor_per_million: float
) -> list[float]:
    if oov_policy not in ("floor", "drop"):
        raise ValueError(f"unknown OOV policy {oov_policy!r}")
    floor = float(np.log10(floor_per_million))
    sample: list[float] = []
    for w in words:
        v = lexicon.get(w)
        if v is None:
            if oov_policy == "floor":
                sample.append(floor)
        else:
            sample.append(v)
    return sample


def frequency_test(
    annotations: Sequence[QUDAnnotation],
    instances: Mapping[str, ElaborationInstance],
    documents: Mapping[str, Document],
    lexicon: FrequencyLexicon,
    oov_policy: str = "floor",
    floor_per_million: float = 0.5,
    equal_var: bool = False,
) -> FrequencyTestReport:
    """Independent-samples t-test of target-token log frequency vs all
    document tokens (Welch by default). t < 0 iff targets are rarer."""
    target_words: list[str] = []
    for ann in annotations:
        doc = documents[instances[ann.instance_id].doc_id]
        target_words.extend(_word_tokens(ann.target.tokens(doc)))
    doc_words: list[str] = []
    for doc in documents.values():
        for sent in doc.sentences:
            doc_words.extend(_word_tokens(sent.tokens()))
    target_sample = _lookup_sample(target_words, lexicon, oov_policy, floor_per_million)
    doc_sample = _lookup_sample(doc_words, lexicon, oov_policy, floor_per_million)
    if len(target_sample) < 2 or len(doc_sample) < 2:
        raise StatisticsError("samples need at least 2 tokens each")
    t, p = _scipy_stats.ttest_ind(target_sample, doc_sample, equal_var=equal_var)
    return FrequencyTestReport(
        mean_log_freq_targets=float(np.mean(target_sample)),
        mean_log_freq_document=float(np.mean(doc_sample)),
        t_statistic=float(t),
        p_value=float(p),
        n_target_tokens=len(target_sample),
        n_doc_tokens=len(doc_sample),
    )


# ---------------------------------------------------- question types


@dataclass(frozen=True)
class QuestionTypeDistribution:
    counts: dict[str, int]
    proportions: dict[str, float]

    def __post_init__(self):
        total = sum(self.proportions.values())
        if self.counts and abs(total - 1.0) > 1e-9:
            raise ValueError(f"proportions sum to {total}, not 1")


def question_type_distribution(
    questions: Sequence[str], classifier
) -> QuestionTypeDistribution:
    """Tally classifier labels over questions; labels must come from the
    fixed taxonomy."""
    if not questions:
        raise EmptyInputError("no questions supplied")
    counts: dict[str, int] = {}
    for q in questions:
        label = classifier.classify(q)
        if label not in QUESTION_TYPE_LABELS:
            raise ValidationError(
                f"classifier returned {label!r}; expected one of {sorted(QUESTION_TYPE_LABELS)}"
            )
        counts[label] = counts.get(label, 0) + 1
    total = sum(counts.values())
    counts = dict(sorted(counts.items()))
    return QuestionTypeDistribution(
        counts=counts,
        proportions={k: v / total for k, v in counts.items()},
    )


# ------------------------------------------------- discourse relations


def relation_distribution(labels: Sequence[tuple[str, str]]) -> dict[str, float]:
    """Normalized tally over externally supplied (instance_id, PDTB-3
    level-2 label) pairs. No classification happens here."""
    if not labels:
        raise EmptyInputError("no relation labels supplied")
    counts: dict[str, int] = {}
    for _, label in labels:
        if label not in PDTB3_LEVEL2_LABELS:
            raise ValidationError(
                f"unknown PDTB-3 level-2 label {label!r}; expected one of "
                f"{sorted(PDTB3_LEVEL2_LABELS)}"
            )
        counts[label] = counts.get(label, 0) + 1
    total = sum(counts.values())
    return {k: v / total for k, v in sorted(counts.items())}


def load_pdtb_reference() -> dict[str, float]:
    """Reference PDTB-3 level-2 proportions shipped with the package."""
    payload = json.loads(
        resources.files("qudkit.data").joinpath("pdtb3_reference.json").read_text("utf-8")
    )
    pct = payload["percentages"]
    total = sum(pct.values())
    return {k: v / total for k, v in sorted(pct.items())}
