import itertools
import json
import math
import os
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from audioforge import metrics

GOLDEN = json.load(open(os.path.join(os.path.dirname(__file__), "golden",
                                     "metrics_golden.json"), encoding="utf-8"))


# -- golden oracles -----------------------------------------------------------


@pytest.mark.parametrize("case", GOLDEN["wer"])
def test_wer_matches_golden_exactly(case):
    got = metrics.wer(case["hyp"], case["ref"])
    assert got == Fraction(case["num"], case["den"])


@pytest.mark.parametrize("case", GOLDEN["bleu"])
def test_bleu_matches_golden(case):
    got = metrics.bleu(case["hyps"], case["refs"])
    assert abs(got - case["value"]) < 1e-9


@pytest.mark.parametrize("case", GOLDEN["meteor"])
def test_meteor_matches_golden(case):
    assert abs(metrics.meteor_exact(case["hyp"], case["ref"]) - case["value"]) < 1e-9
    assert metrics.min_chunks(case["hyp"], case["ref"]) == case["chunks"]


@pytest.mark.parametrize("case", GOLDEN["token_f1"])
def test_token_f1_matches_golden(case):
    assert abs(metrics.token_f1(case["pred"], case["ref"]) - case["value"]) < 1e-9


def test_bleu_hand_case_brevity_penalty():
    """Perfect precisions on a one-token-short hypothesis: BLEU = exp(-1/3)."""
    got = metrics.bleu([["the", "cat", "sat"]], [["the", "cat", "sat", "on"]])
    assert abs(got - math.exp(-1.0 / 3.0)) < 1e-12
    assert round(got, 4) == 0.7165


# -- WER ----------------------------------------------------------------------


def test_wer_is_exact_fraction():
    got = metrics.wer(["a", "x", "c"], ["a", "b", "c"])
    assert got == Fraction(1, 3) and isinstance(got, Fraction)


def test_corpus_wer_pools_edits():
    pairs = [(["a"], ["a", "b"]), (["x", "y", "z"], ["x", "y"])]
    # 1 deletion + 1 insertion over 4 reference tokens
    assert metrics.corpus_wer(pairs) == Fraction(2, 4)


def test_wer_empty_reference_rejected():
    with pytest.raises(metrics.MetricError):
        metrics.wer(["a"], [])
    with pytest.raises(metrics.MetricError):
        metrics.corpus_wer([(["a"], [])])


def test_wer_can_exceed_one():
    assert metrics.wer(["a", "b", "c", "d"], ["x"]) == Fraction(4, 1)


def test_edit_distance_triangle_and_symmetry():
    rng = np.random.default_rng(5)
    vocab = ["a", "b", "c"]
    for _ in range(30):
        s = [vocab[i] for i in rng.integers(0, 3, rng.integers(0, 6))]
        t = [vocab[i] for i in rng.integers(0, 3, rng.integers(0, 6))]
        u = [vocab[i] for i in rng.integers(0, 3, rng.integers(0, 6))]
        dst = metrics.edit_distance
        assert dst(s, t) == dst(t, s)
        assert dst(s, u) <= dst(s, t) + dst(t, u)
        assert dst(s, s) == 0


# -- BLEU ----------------------------------------------------------------------


def test_bleu_perfect_match_is_one():
    toks = ["the", "cat", "sat", "on", "a", "mat"]
    assert metrics.bleu([toks], [toks]) == pytest.approx(1.0)


def test_bleu_no_unigram_overlap_is_zero():
    assert metrics.bleu([["dog"]], [["cat"]]) == 0.0


def test_bleu_corpus_not_mean_of_sentences():
    hyps = [["the", "cat"], ["sat", "on", "a", "mat"]]
    refs = [["the", "cat"], ["sat", "on", "the", "mat"]]
    corpus = metrics.bleu(hyps, refs)
    mean = np.mean([metrics.bleu([h], [r]) for h, r in zip(hyps, refs)])
    assert corpus != pytest.approx(mean)


def test_bleu_validates_inputs():
    with pytest.raises(metrics.MetricError):
        metrics.bleu([], [])
    with pytest.raises(metrics.MetricError):
        metrics.bleu([["a"]], [["a"], ["b"]])


# -- METEOR ----------------------------------------------------------------------


def brute_min_chunks(hyp, ref):
    """Second exhaustive oracle (itertools-based) for small cases."""
    hc, rc = Counter(hyp), Counter(ref)
    m = sum(min(c, rc[t]) for t, c in hc.items())
    if m == 0:
        return 0
    best = m
    positions = list(range(len(hyp)))
    for hyp_idx in itertools.combinations(positions, m):
        for ref_perm in itertools.permutations(range(len(ref)), m):
            if any(hyp[i] != ref[j] for i, j in zip(hyp_idx, ref_perm)):
                continue
            chunks = 1
            for (i1, j1), (i2, j2) in zip(list(zip(hyp_idx, ref_perm))[:-1],
                                          list(zip(hyp_idx, ref_perm))[1:]):
                if not (i2 == i1 + 1 and j2 == j1 + 1):
                    chunks += 1
            best = min(best, chunks)
    return best


def test_min_chunks_against_second_oracle():
    rng = np.random.default_rng(3)
    vocab = ["a", "b", "c"]
    for _ in range(40):
        hyp = [vocab[i] for i in rng.integers(0, 3, rng.integers(1, 6))]
        ref = [vocab[i] for i in rng.integers(0, 3, rng.integers(1, 6))]
        assert metrics.min_chunks(hyp, ref) == brute_min_chunks(hyp, ref), (hyp, ref)


def test_min_chunks_contiguous_match_is_one_chunk():
    assert metrics.min_chunks(["a", "b", "c"], ["a", "b", "c"]) == 1
    assert metrics.min_chunks(["c", "a", "b"], ["a", "b", "c"]) == 2


def test_meteor_identity_and_bounds():
    toks = ["the", "cat", "sat"]
    score = metrics.meteor_exact(toks, toks)
    m = len(toks)
    assert score == pytest.approx((1.0) * (1.0 - 0.5 * (1 / m) ** 3))
    assert metrics.meteor_exact(["x"], ["y"]) == 0.0
    assert metrics.meteor_exact([], ["y"]) == 0.0
    rng = np.random.default_rng(4)
    vocab = ["a", "b", "c", "d"]
    for _ in range(25):
        hyp = [vocab[i] for i in rng.integers(0, 4, rng.integers(1, 7))]
        ref = [vocab[i] for i in rng.integers(0, 4, rng.integers(1, 7))]
        assert 0.0 <= metrics.meteor_exact(hyp, ref) <= 1.0


def test_meteor_greedy_fallback_for_long_refs():
    ref = [f"w{i}" for i in range(20)]  # beyond the exact-search limit
    assert metrics.min_chunks(list(ref), ref) == 1
    assert metrics.min_chunks(ref[10:] + ref[:10], ref) == 2


# -- token F1 --------------------------------------------------------------------


def test_token_f1_normalization():
    assert metrics.token_f1("The Cat!", "the cat") == 1.0
    assert metrics.token_f1("", "") == 1.0
    assert metrics.token_f1("", "x") == 0.0
    assert metrics.token_f1("a b", "c d") == 0.0


def test_token_f1_multiset_semantics():
    # pred {a:2, b:1}, ref {a:1, b:2} -> overlap 2, P=R=2/3
    assert metrics.token_f1("a a b", "a b b") == pytest.approx(2 / 3)


def test_normalize_answer_thai_passthrough():
    assert metrics.normalize_answer("วันนี้, อากาศดี!") == "วันนี้ อากาศดี"


def test_tokenize_units():
    assert metrics.tokenize("ab cd", "word") == ["ab", "cd"]
    assert metrics.tokenize("ab cd", "char") == ["a", "b", "c", "d"]
    with pytest.raises(metrics.MetricError):
        metrics.tokenize("x", "syllable")


# -- gender -----------------------------------------------------------------------


def test_extract_gender_female_checked_first():
    assert metrics.extract_gender("The speaker is female.") == "female"
    assert metrics.extract_gender("a MALE voice") == "male"
    assert metrics.extract_gender("ผู้พูดเป็นผู้หญิง") == "female"
    assert metrics.extract_gender("เสียงผู้ชาย") == "male"
    assert metrics.extract_gender("no clue") is None


def test_gender_accuracy():
    acc = metrics.gender_accuracy(
        ["female voice", "male voice", "unclear"],
        ["female", "female", "male"])
    assert acc == pytest.approx(1 / 3)
    with pytest.raises(metrics.MetricError):
        metrics.gender_accuracy(["x"], [])
    with pytest.raises(metrics.MetricError):
        metrics.gender_accuracy([], [])
