"""Automatic generation metrics and human-evaluation tallies.

BLEU-4 is sentence-level by default with corpus-level aggregation available;
the similarity score follows greedy token matching over backend embeddings,
reported raw and affinely rescaled against an empirical baseline.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IntegrityError

CRITERIA = ("elaboration_like", "coherence")


@dataclass(frozen=True)
class ScorePair:
    raw: float
    rescaled: float

    def __post_init__(self):
        if not 0.0 <= self.raw <= 1.0:
            raise ValueError(f"raw score {self.raw} outside [0, 1]")

    @classmethod
    def from_raw(cls, raw: float, baseline: float) -> "ScorePair":
        if baseline >= 1.0:
            raise ValueError(f"rescaling baseline {baseline} must be < 1")
        raw = min(max(raw, 0.0), 1.0)
        return cls(raw=raw, rescaled=(raw - baseline) / (1.0 - baseline))


# ------------------------------------------------------------------- BLEU-4


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _modified_precision(
    candidate: Sequence[str], references: Sequence[Sequence[str]], n: int
) -> tuple[int, int]:
    cand = _ngram_counts(candidate, n)
    total = max(len(candidate) - n + 1, 0)
    if not cand:
        return 0, total
    max_ref: Counter = Counter()
    for ref in references:
        ref_counts = _ngram_counts(ref, n)
        for gram, c in ref_counts.items():
            if c > max_ref[gram]:
                max_ref[gram] = c
    matched = sum(min(c, max_ref[gram]) for gram, c in cand.items())
    return matched, total


def _closest_ref_length(candidate_len: int, references: Sequence[Sequence[str]]) -> int:
    return min((abs(len(r) - candidate_len), len(r)) for r in references)[1]


def _bleu_from_stats(
    matches: Sequence[int],
    totals: Sequence[int],
    candidate_len: int,
    ref_len: int,
    smoothing: str,
    k: int,
) -> float:
    log_sum = 0.0
    for n, (matched, total) in enumerate(zip(matches, totals), start=1):
        if smoothing == "add-k" and n >= 2 and matched == 0:
            # vacuous order (candidate shorter than n) counts as satisfied
            p = 1.0 if total == 0 else k / (total + k)
        else:
            p = matched / total if total > 0 else 0.0
        if p == 0.0:
            return 0.0
        log_sum += 0.25 * math.log(p)
    bp = 1.0 if candidate_len > ref_len else math.exp(1.0 - ref_len / candidate_len)
    return bp * math.exp(log_sum)


def bleu4(
    candidate: Sequence[str],
    references: Sequence[Sequence[str]],
    smoothing: str = "add-k",
    k: int = 1,
) -> float:
    """Sentence BLEU-4 with multi-reference clipped counts.

    Unigram precision is never smoothed, so zero lexical overlap scores
    exactly 0; under add-k, higher orders with no matches get (k / (total+k))
    and orders the candidate is too short to form count as satisfied.
    """
    if smoothing not in ("add-k", "none"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if not references:
        raise ValueError("at least one reference required")
    if len(candidate) == 0:
        warnings.warn("empty candidate scores 0", stacklevel=2)
        return 0.0
    stats = [_modified_precision(candidate, references, n) for n in (1, 2, 3, 4)]
    return _bleu_from_stats(
        [m for m, _ in stats],
        [t for _, t in stats],
        len(candidate),
        _closest_ref_length(len(candidate), references),
        smoothing,
        k,
    )


def corpus_bleu4(
    pairs: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]],
    smoothing: str = "add-k",
    k: int = 1,
) -> float:
    """Corpus-level BLEU-4: n-gram statistics pooled before the geometric mean."""
    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    cand_len = 0
    ref_len = 0
    for candidate, references in pairs:
        if len(candidate) == 0:
            continue
        for i, n in enumerate((1, 2, 3, 4)):
            m, t = _modified_precision(candidate, references, n)
            matches[i] += m
            totals[i] += t
        cand_len += len(candidate)
        ref_len += _closest_ref_length(len(candidate), references)
    if cand_len == 0:
        warnings.warn("no scorable candidates", stacklevel=2)
        return 0.0
    return _bleu_from_stats(matches, totals, cand_len, ref_len, smoothing, k)


# ------------------------------------------------- embedding similarity F1


def _greedy_f1(cand_vecs: np.ndarray, ref_vecs: np.ndarray) -> float:
    norms_c = np.linalg.norm(cand_vecs, axis=1, keepdims=True)
    norms_r = np.linalg.norm(ref_vecs, axis=1, keepdims=True)
    norms_c[norms_c == 0] = 1.0
    norms_r[norms_r == 0] = 1.0
    sim = (cand_vecs / norms_c) @ (ref_vecs / norms_r).T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def embedding_similarity(candidate: str, reference: str, embedder, baseline: float) -> ScorePair:
    """Greedy token-matching F1 between backend embeddings, raw and rescaled."""
    _, cand_vecs = embedder.encode(candidate)
    _, ref_vecs = embedder.encode(reference)
    if len(cand_vecs) == 0 or len(ref_vecs) == 0:
        return ScorePair.from_raw(0.0, baseline)
    return ScorePair.from_raw(_greedy_f1(np.asarray(cand_vecs), np.asarray(ref_vecs)), baseline)


def embedding_similarity_multi_ref(
    candidate: str, references: Sequence[str], embedder, baseline: float
) -> ScorePair:
    """Max F1 over references (policy for multiply-annotated gold questions)."""
    best = None
    for ref in references:
        pair = embedding_similarity(candidate, ref, embedder, baseline)
        if best is None or pair.raw > best.raw:
            best = pair
    if best is None:
        raise ValueError("at least one reference required")
    return best


# ------------------------------------------------- human evaluation tallies


@dataclass(frozen=True)
class HumanQuestionJudgment:
    question_id: str
    judge_id: str
    reasonable: bool
    answered: bool


@dataclass(frozen=True)
class ElabRanking:
    instance_id: str
    judge_id: str
    criterion: str
    first: str
    second: str

    def __post_init__(self):
        if self.first == self.second:
            raise IntegrityError("ranking places the same system first and second")
        if self.criterion not in CRITERIA:
            raise IntegrityError(f"unknown ranking criterion {self.criterion!r}")


@dataclass(frozen=True)
class JudgmentTally:
    per_system: dict[str, dict[str, float]]
    agreement_reasonable: float | None
    agreement_answered: float | None
    n_multi_judged: int


def _pairwise_agreement(votes_by_item: Mapping[str, list[bool]]) -> tuple[float | None, int]:
    agree = 0
    total = 0
    n_items = 0
    for votes in votes_by_item.values():
        if len(votes) < 2:
            continue
        n_items += 1
        for i in range(len(votes)):
            for j in range(i + 1, len(votes)):
                total += 1
                if votes[i] == votes[j]:
                    agree += 1
    return (agree / total if total else None), n_items


def tally_question_judgments(
    judgments: Sequence[HumanQuestionJudgment], system_of: Mapping[str, str]
) -> JudgmentTally:
    """Per-system yes rates for both criteria plus inter-judge agreement."""
    per_system: dict[str, dict[str, float]] = {}
    by_system: dict[str, list[HumanQuestionJudgment]] = {}
    for j in judgments:
        system = system_of[j.question_id]
        by_system.setdefault(system, []).append(j)
    for system, js in by_system.items():
        per_system[system] = {
            "reasonable_yes": sum(x.reasonable for x in js) / len(js),
            "answered_yes": sum(x.answered for x in js) / len(js),
            "n": len(js),
        }
    reasonable_votes: dict[str, list[bool]] = {}
    answered_votes: dict[str, list[bool]] = {}
    for j in judgments:
        reasonable_votes.setdefault(j.question_id, []).append(j.reasonable)
        answered_votes.setdefault(j.question_id, []).append(j.answered)
    agreement_1, n_multi = _pairwise_agreement(reasonable_votes)
    agreement_2, _ = _pairwise_agreement(answered_votes)
    return JudgmentTally(per_system, agreement_1, agreement_2, n_multi)


@dataclass(frozen=True)
class RankingTally:
    counts: dict[str, dict[str, dict[str, int]]]  # system -> criterion -> {"first": n, "second": n}
    totals: dict[str, int]  # criterion -> number of submissions

    def percentage(self, system: str, criterion: str, rank: str) -> float:
        total = self.totals.get(criterion, 0)
        if total == 0:
            return 0.0
        return self.counts.get(system, {}).get(criterion, {}).get(rank, 0) / total


def tally_rankings(rankings: Sequence[ElabRanking]) -> RankingTally:
    seen: set[tuple[str, str, str]] = set()
    counts: dict[str, dict[str, dict[str, int]]] = {}
    totals: dict[str, int] = {}
    for r in rankings:
        key = (r.instance_id, r.judge_id, r.criterion)
        if key in seen:
            raise IntegrityError(f"duplicate ranking for {key}")
        seen.add(key)
        totals[r.criterion] = totals.get(r.criterion, 0) + 1
        for rank, system in (("first", r.first), ("second", r.second)):
            slot = counts.setdefault(system, {}).setdefault(r.criterion, {"first": 0, "second": 0})
            slot[rank] += 1
    return RankingTally(counts, totals)


# ------------------------------------------------------------------ CSV I/O


def load_judgments_csv(path: str | Path) -> list[HumanQuestionJudgment]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            HumanQuestionJudgment(
                question_id=row["question_id"],
                judge_id=row["judge_id"],
                reasonable=row["reasonable"].strip().lower() in ("1", "true", "yes"),
                answered=row["answered"].strip().lower() in ("1", "true", "yes"),
            )
            for row in csv.DictReader(fh)
        ]


def load_rankings_csv(path: str | Path) -> list[ElabRanking]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            ElabRanking(
                instance_id=row["instance_id"],
                judge_id=row["judge_id"],
                criterion=row["criterion"],
                first=row["first"],
                second=row["second"],
            )
            for row in csv.DictReader(fh)
        ]
