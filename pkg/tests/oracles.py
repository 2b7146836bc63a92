"""Independent brute-force oracles used by the test suite.

Deliberately naive: plain loops, list scans, exact fractions. These must stay
decoupled from the library implementations they check.
"""

from __future__ import annotations

import math
from fractions import Fraction


def ngram_list(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def count_gram(gram, grams):
    c = 0
    for g in grams:
        if g == gram:
            c += 1
    return c


def bleu4_oracle(candidate, references, smoothing="add-k", k=1):
    """Sentence BLEU-4 by explicit enumeration.

    Same frozen definition as the library: unigram precision never smoothed;
    orders >= 2 with zero matches get add-k; orders with no candidate n-grams
    count as 1.0 under add-k; brevity penalty against the closest reference
    length (ties broken toward the shorter reference).
    """
    if len(candidate) == 0:
        return 0.0
    log_sum = 0.0
    for n in (1, 2, 3, 4):
        cand_grams = ngram_list(candidate, n)
        total = len(cand_grams)
        matched = 0
        seen = []
        for gram in cand_grams:
            if gram in seen:
                continue
            seen.append(gram)
            cand_count = count_gram(gram, cand_grams)
            max_ref = 0
            for ref in references:
                rc = count_gram(gram, ngram_list(ref, n))
                if rc > max_ref:
                    max_ref = rc
            matched += min(cand_count, max_ref)
        if smoothing == "add-k" and n >= 2 and matched == 0:
            p = Fraction(1) if total == 0 else Fraction(k, total + k)
        else:
            p = Fraction(matched, total) if total > 0 else Fraction(0)
        if p == 0:
            return 0.0
        log_sum += 0.25 * math.log(float(p))
    c = len(candidate)
    best_dist = None
    best_len = None
    for ref in references:
        d = abs(len(ref) - c)
        if best_dist is None or d < best_dist or (d == best_dist and len(ref) < best_len):
            best_dist, best_len = d, len(ref)
    bp = 1.0 if c > best_len else math.exp(1.0 - best_len / c)
    return bp * math.exp(log_sum)


def fleiss_kappa_oracle(matrix):
    """Hand formula over an items x categories count matrix (variable raters).

    Returns (fixed_marginal_kappa, free_marginal_kappa, percent_agreement)
    computed with exact fractions.
    """
    n_items = len(matrix)
    n_cats = len(matrix[0])
    p_bar = Fraction(0)
    for row in matrix:
        n_i = sum(row)
        pairs_agree = Fraction(0)
        for c in row:
            pairs_agree += Fraction(c * (c - 1))
        p_bar += pairs_agree / Fraction(n_i * (n_i - 1))
    p_bar /= n_items
    total_ratings = sum(sum(row) for row in matrix)
    p_e = Fraction(0)
    for j in range(n_cats):
        col = sum(row[j] for row in matrix)
        p_e += (Fraction(col, total_ratings)) ** 2
    if p_bar == 1:
        kappa = 1.0
    else:
        kappa = float((p_bar - p_e) / (1 - p_e))
    free = float((p_bar - Fraction(1, n_cats)) / (1 - Fraction(1, n_cats)))
    return kappa, free, float(p_bar)


def welch_t_oracle(a, b):
    """Textbook Welch t statistic (sample variances, ddof 1)."""
    na, nb = len(a), len(b)
    ma = sum(a) / na
    mb = sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    return (ma - mb) / math.sqrt(va / na + vb / nb)


def greedy_match_f1_oracle(cand_vectors, ref_vectors):
    """BERTScore-style greedy matching from explicit cosine loops."""

    def cos(u, v):
        dot = sum(x * y for x, y in zip(u, v))
        nu = math.sqrt(sum(x * x for x in u))
        nv = math.sqrt(sum(x * x for x in v))
        if nu == 0 or nv == 0:
            return 0.0
        return dot / (nu * nv)

    precision = sum(max(cos(c, r) for r in ref_vectors) for c in cand_vectors) / len(cand_vectors)
    recall = sum(max(cos(r, c) for c in cand_vectors) for r in ref_vectors) / len(ref_vectors)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
