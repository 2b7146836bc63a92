from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qudkit.corpus import tokenize
from qudkit.errors import IntegrityError
from qudkit.metrics import (
    ElabRanking,
    HumanQuestionJudgment,
    ScorePair,
    bleu4,
    corpus_bleu4,
    embedding_similarity,
    embedding_similarity_multi_ref,
    load_judgments_csv,
    load_rankings_csv,
    tally_question_judgments,
    tally_rankings,
)

from .oracles import bleu4_oracle, greedy_match_f1_oracle

# ------------------------------------------------------------------- BLEU-4


def test_bleu_identity():
    for length in (1, 2, 4, 9):
        cand = [f"w{i}" for i in range(length)]
        assert bleu4(cand, [cand]) == pytest.approx(1.0, abs=1e-12)


def test_bleu_zero_overlap_is_exactly_zero():
    assert bleu4(["x", "y", "z"], [["a", "b", "c"]]) == 0.0


def test_bleu_hand_case_frozen():
    # p1..p4 = 4/5, 3/4, 2/3, 1/2 -> (1/5)^(1/4), BP = 1
    got = bleu4("a b c d e".split(), ["a b c d f".split()])
    assert got == pytest.approx(0.6687403049764221, abs=1e-12)
    assert got == pytest.approx(bleu4_oracle("a b c d e".split(), ["a b c d f".split()]), abs=1e-9)


def test_bleu_empty_candidate_warns_zero():
    with pytest.warns(UserWarning):
        assert bleu4([], [["a"]]) == 0.0


def test_bleu_reference_permutation_invariant():
    cand = "the cat sat on the mat".split()
    refs = [["the", "cat", "sat"], ["a", "cat", "sat", "on", "mats"], ["the", "mat"]]
    a = bleu4(cand, refs)
    b = bleu4(cand, list(reversed(refs)))
    assert a == b


def test_bleu_degrades_when_match_replaced():
    cand = "a b c d e f".split()
    ref = ["a b c d e f".split()]
    worse = "a b c d e zzz".split()
    assert bleu4(worse, ref) < bleu4(cand, ref)


def test_bleu_oracle_equivalence_random():
    rng = random.Random(123)
    vocab = [f"t{i}" for i in range(12)]
    for _ in range(100):
        cand = [rng.choice(vocab) for _ in range(rng.randint(1, 15))]
        refs = [
            [rng.choice(vocab) for _ in range(rng.randint(1, 15))]
            for _ in range(rng.randint(1, 3))
        ]
        for smoothing in ("add-k", "none"):
            assert bleu4(cand, refs, smoothing=smoothing) == pytest.approx(
                bleu4_oracle(cand, refs, smoothing=smoothing), abs=1e-9
            )


@given(
    st.lists(st.sampled_from("abcdef"), min_size=1, max_size=12),
    st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=12), min_size=1, max_size=3),
)
@settings(max_examples=150, deadline=None)
def test_bleu_bounds_property(cand, refs):
    score = bleu4(cand, refs)
    assert 0.0 <= score <= 1.0


def test_corpus_bleu_identity():
    pairs = [(["a", "b", "c"], [["a", "b", "c"]]), (["d", "e"], [["d", "e"]])]
    assert corpus_bleu4(pairs) == pytest.approx(1.0, abs=1e-12)


def test_bleu_rejects_unknown_smoothing():
    with pytest.raises(ValueError):
        bleu4(["a"], [["a"]], smoothing="laplace")


# ------------------------------------------------- embedding similarity


class VocabEmbedder:
    """Maps each token to a fixed vector; unknown tokens get a zero vector."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = len(next(iter(table.values())))

    def encode(self, text):
        toks = tokenize(text)
        vecs = np.array([self.table.get(t, np.zeros(self.dim)) for t in toks])
        return toks, vecs


ORTHO = VocabEmbedder({"left": [1.0, 0.0], "right": [0.0, 1.0]})


def test_similarity_identity():
    emb = VocabEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    pair = embedding_similarity("a b", "a b", emb, baseline=0.25)
    assert pair.raw == pytest.approx(1.0, abs=1e-12)
    assert pair.rescaled == pytest.approx(1.0, abs=1e-12)


def test_similarity_orthogonal_single_tokens():
    baseline = 0.25
    pair = embedding_similarity("left", "right", ORTHO, baseline=baseline)
    assert pair.raw == 0.0
    assert pair.rescaled == pytest.approx(-baseline / (1 - baseline), abs=1e-12)


def test_similarity_three_token_hand_case():
    s = 1 / math.sqrt(2)
    emb = VocabEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [s, s]})
    pair = embedding_similarity("a c", "a b", emb, baseline=0.5)
    # hand computation: P = R = (1 + 1/sqrt(2)) / 2
    assert pair.raw == pytest.approx(0.8535533905932737, abs=1e-12)
    assert pair.rescaled == pytest.approx(0.7071067811865475, abs=1e-12)
    oracle = greedy_match_f1_oracle(
        [[1.0, 0.0], [s, s]], [[1.0, 0.0], [0.0, 1.0]]
    )
    assert pair.raw == pytest.approx(oracle, abs=1e-9)


def test_similarity_symmetric_under_swap():
    s = 1 / math.sqrt(2)
    emb = VocabEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [s, s]})
    ab = embedding_similarity("a c", "a b b", emb, baseline=0.0)
    ba = embedding_similarity("a b b", "a c", emb, baseline=0.0)
    assert ab.raw == pytest.approx(ba.raw, abs=1e-12)


def test_similarity_multi_ref_takes_max():
    emb = VocabEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    pair = embedding_similarity_multi_ref("a", ["b", "a"], emb, baseline=0.0)
    assert pair.raw == pytest.approx(1.0, abs=1e-12)


def test_rescaling_affine_order_preserving():
    baseline = 0.3
    lo = ScorePair.from_raw(0.4, baseline)
    hi = ScorePair.from_raw(0.9, baseline)
    assert lo.rescaled < hi.rescaled
    assert hi.rescaled == pytest.approx((0.9 - 0.3) / 0.7, abs=1e-12)


def test_score_pair_validates_raw():
    with pytest.raises(ValueError):
        ScorePair(raw=1.5, rescaled=0.0)
    with pytest.raises(ValueError):
        ScorePair.from_raw(0.5, baseline=1.0)


# ------------------------------------------------- human evaluation tallies


def test_judgment_tally_all_yes():
    judgments = [
        HumanQuestionJudgment(f"q{i}", "j1", True, True) for i in range(4)
    ]
    system_of = {f"q{i}": "sysA" for i in range(4)}
    tally = tally_question_judgments(judgments, system_of)
    assert tally.per_system["sysA"]["reasonable_yes"] == 1.0
    assert tally.per_system["sysA"]["answered_yes"] == 1.0
    assert tally.agreement_reasonable is None  # nothing judged twice


def test_judgment_tally_total_disagreement():
    judgments = []
    for i in range(3):
        judgments.append(HumanQuestionJudgment(f"q{i}", "j1", True, False))
        judgments.append(HumanQuestionJudgment(f"q{i}", "j2", False, True))
    tally = tally_question_judgments(judgments, {f"q{i}": "s" for i in range(3)})
    assert tally.agreement_reasonable == 0.0
    assert tally.agreement_answered == 0.0
    assert tally.n_multi_judged == 3


def test_judgment_tally_partitions():
    judgments = [
        HumanQuestionJudgment("q1", "j1", True, False),
        HumanQuestionJudgment("q2", "j1", False, True),
        HumanQuestionJudgment("q3", "j1", True, True),
    ]
    system_of = {"q1": "A", "q2": "A", "q3": "B"}
    tally = tally_question_judgments(judgments, system_of)
    assert tally.per_system["A"]["n"] + tally.per_system["B"]["n"] == 3
    assert tally.per_system["A"]["reasonable_yes"] == 0.5


def test_ranking_single():
    tally = tally_rankings([ElabRanking("i1", "j1", "coherence", "A", "B")])
    assert tally.counts["A"]["coherence"]["first"] == 1
    assert tally.counts["B"]["coherence"]["second"] == 1
    assert tally.percentage("A", "coherence", "first") == 1.0


def test_ranking_duplicate_rejected():
    rankings = [
        ElabRanking("i1", "j1", "coherence", "A", "B"),
        ElabRanking("i1", "j1", "coherence", "B", "A"),
    ]
    with pytest.raises(IntegrityError):
        tally_rankings(rankings)


def test_ranking_same_pick_rejected():
    with pytest.raises(IntegrityError):
        ElabRanking("i1", "j1", "coherence", "A", "A")


def test_ranking_order_invariant():
    rankings = [
        ElabRanking("i1", "j1", "coherence", "A", "B"),
        ElabRanking("i2", "j1", "coherence", "B", "A"),
        ElabRanking("i1", "j2", "elaboration_like", "A", "C"),
    ]
    a = tally_rankings(rankings)
    b = tally_rankings(list(reversed(rankings)))
    assert a == b


def test_csv_roundtrip(tmp_path):
    jf = tmp_path / "judgments.csv"
    jf.write_text(
        "question_id,judge_id,reasonable,answered\nq1,j1,yes,no\nq1,j2,true,1\n",
        encoding="utf-8",
    )
    js = load_judgments_csv(jf)
    assert js[0] == HumanQuestionJudgment("q1", "j1", True, False)
    assert js[1].answered is True

    rf = tmp_path / "rankings.csv"
    rf.write_text(
        "instance_id,judge_id,criterion,first,second\ni1,j1,coherence,A,B\n",
        encoding="utf-8",
    )
    rs = load_rankings_csv(rf)
    assert rs[0].first == "A" and rs[0].second == "B"
