"""Corpus metrics: WER, BLEU, exact-match METEOR, token-overlap F1, and
keyword-rule gender accuracy."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from fractions import Fraction


class MetricError(ValueError):
    pass


# -- tokenization -------------------------------------------------------


def tokenize(text: str, unit: str = "word") -> list[str]:
    if unit == "word":
        return text.split()
    if unit == "char":
        return [c for c in text if not c.isspace()]
    raise MetricError(f"unknown tokenization unit '{unit}'")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation (Unicode category P*), collapse
    whitespace. Thai letters and their combining vowel/tone marks pass
    through unchanged."""
    out = "".join(" " if unicodedata.category(c).startswith("P") else c
                  for c in text.lower())
    return " ".join(out.split())


# -- WER ------------------------------------------------------------------


def edit_distance(hyp: list[str], ref: list[str]) -> int:
    """Levenshtein distance (substitutions + deletions + insertions)."""
    n, m = len(hyp), len(ref)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        hi = hyp[i - 1]
        for j in range(1, m + 1):
            cost = 0 if hi == ref[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[m]


def wer(hyp: list[str], ref: list[str]) -> Fraction:
    if not ref:
        raise MetricError("WER undefined for an empty reference")
    return Fraction(edit_distance(hyp, ref), len(ref))


def corpus_wer(pairs: list[tuple[list[str], list[str]]]) -> Fraction:
    """Corpus WER = total edits / total reference length."""
    edits, total = 0, 0
    for hyp, ref in pairs:
        if not ref:
            raise MetricError("WER undefined for an empty reference")
        edits += edit_distance(hyp, ref)
        total += len(ref)
    return Fraction(edits, total)


# -- BLEU --------------------------------------------------------------------


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: list[list[str]], refs: list[list[str]], max_n: int = 4,
         smooth: bool = True) -> float:
    """Corpus BLEU, uniform 1..4-gram weights, clipped counts, brevity
    penalty exp(1 - r/c) for c < r. With smoothing, +1 is added to the
    numerator and denominator of precisions for n >= 2."""
    if not hyps or len(hyps) != len(refs):
        raise MetricError("BLEU needs a nonempty corpus with matching lengths")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    log_sum = 0.0
    for n in range(1, max_n + 1):
        num, den = matches[n - 1], totals[n - 1]
        if smooth and n >= 2:
            num, den = num + 1, den + 1
        if den == 0:
            continue  # no n-grams of this order anywhere: skip it
        if num == 0:
            return 0.0
        log_sum += math.log(num / den) / max_n
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_sum)


# -- METEOR (exact-match stage) ----------------------------------------------


def _max_matches(hyp: list[str], ref: list[str]) -> int:
    hc, rc = Counter(hyp), Counter(ref)
    return sum(min(c, rc[t]) for t, c in hc.items())


def min_chunks(hyp: list[str], ref: list[str], m: int | None = None,
               exact_limit: int = 14) -> int:
    """Minimum chunk count over all maximum matchings.

    Exact search (memoized DFS over hyp positions and a ref-usage bitmask)
    for references up to exact_limit tokens; greedy left-to-right otherwise.
    """
    if m is None:
        m = _max_matches(hyp, ref)
    if m == 0:
        return 0
    if len(ref) > exact_limit:
        return _greedy_chunks(hyp, ref)
    best = [m]  # upper bound: every match its own chunk
    seen: dict[tuple[int, int, int], tuple[int, int]] = {}

    # adj_j = ref index matched at hyp position i-1 (-2 if none): a match
    # (i, j) continues the current chunk iff j == adj_j + 1.
    def dfs(i: int, mask: int, adj_j: int, matched: int, chunks: int):
        if chunks >= best[0]:
            return
        if matched == m:
            best[0] = chunks
            return
        if i == len(hyp):
            return
        key = (i, mask, adj_j)
        prev = seen.get(key)
        if prev is not None and prev[0] >= matched and prev[1] <= chunks:
            return
        seen[key] = (matched, chunks)
        tok = hyp[i]
        for j, r in enumerate(ref):
            if r == tok and not mask & (1 << j):
                cont = adj_j >= 0 and j == adj_j + 1
                dfs(i + 1, mask | (1 << j), j, matched + 1,
                    chunks + (0 if cont else 1))
        dfs(i + 1, mask, -2, matched, chunks)  # leave hyp[i] unmatched

    dfs(0, 0, -2, 0, 0)
    return best[0]


def _greedy_chunks(hyp: list[str], ref: list[str]) -> int:
    used = [False] * len(ref)
    chunks = 0
    last_j = -2
    for i, tok in enumerate(hyp):
        pick = -1
        # prefer continuing the current chunk
        if 0 <= last_j + 1 < len(ref) and not used[last_j + 1] and ref[last_j + 1] == tok:
            pick = last_j + 1
        else:
            for j, r in enumerate(ref):
                if r == tok and not used[j]:
                    pick = j
                    break
        if pick >= 0:
            used[pick] = True
            chunks += 0 if pick == last_j + 1 and last_j != -2 else 1
            last_j = pick
        else:
            last_j = -2
    return chunks


def meteor_exact(hyp: list[str], ref: list[str]) -> float:
    """Exact-match METEOR: F_mean weighted toward recall, chunk penalty
    0.5 * (chunks / m)^3."""
    if not hyp or not ref:
        return 0.0
    m = _max_matches(hyp, ref)
    if m == 0:
        return 0.0
    p = m / len(hyp)
    r = m / len(ref)
    f = 10.0 * p * r / (r + 9.0 * p)
    chunks = min_chunks(hyp, ref, m)
    penalty = 0.5 * (chunks / m) ** 3
    return f * (1.0 - penalty)


# -- token F1 ------------------------------------------------------------------


def token_f1(pred: str, ref: str) -> float:
    """Bag-of-token overlap F1 after normalization (multiset semantics)."""
    p_tokens = normalize_answer(pred).split()
    r_tokens = normalize_answer(ref).split()
    if not p_tokens and not r_tokens:
        return 1.0
    if not p_tokens or not r_tokens:
        return 0.0
    overlap = sum((Counter(p_tokens) & Counter(r_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p_tokens)
    recall = overlap / len(r_tokens)
    return 2.0 * precision * recall / (precision + recall)


# -- gender accuracy --------------------------------------------------------------

# female checked before male so "female" is never captured as "male"
DEFAULT_GENDER_KEYWORDS = (("female", ("female", "หญิง", "ผู้หญิง")),
                           ("male", ("male", "ชาย", "ผู้ชาย")))


def extract_gender(response: str, keywords=DEFAULT_GENDER_KEYWORDS) -> str | None:
    low = response.lower()
    for label, kws in keywords:
        if any(k in low for k in kws):
            return label
    return None


def gender_accuracy(responses: list[str], labels: list[str],
                    keywords=DEFAULT_GENDER_KEYWORDS) -> float:
    if len(responses) != len(labels):
        raise MetricError("responses and labels differ in length")
    if not responses:
        raise MetricError("empty corpus")
    correct = sum(1 for resp, lab in zip(responses, labels)
                  if extract_gender(resp, keywords) == lab.lower())
    return correct / len(responses)
