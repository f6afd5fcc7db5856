#!/usr/bin/env python3
"""Evaluation: reference metrics and the LLM-judge [[x]] protocol.

WER is computed on exact rationals; BLEU/METEOR/token-F1 are floats checked
against brute-force oracles in the test suite. Open-ended tasks are scored
by a judge that must answer with a [[rating]] verdict.
"""

from fractions import Fraction

from audioforge import evalrun, metrics
from audioforge.clients import MockJudgeClient
from audioforge.judge import complexif_judge, judge_score, parse_rating
from audioforge.manifest import ManifestEntry

# --- reference metrics -------------------------------------------------------
hyp, ref = "the cat sat".split(), "the cat sat on".split()
print("WER:", metrics.wer(hyp, ref), "=", float(metrics.wer(hyp, ref)))
print("BLEU (brevity-penalty case):", round(metrics.bleu([hyp], [ref]), 4))
print("METEOR-exact:", round(metrics.meteor_exact(hyp, ref), 4))
print("token F1:", round(metrics.token_f1("The cat sat!", "the cat sat on"), 4))
assert metrics.wer(hyp, ref) == Fraction(1, 4)

# Thai is scored at character level; punctuation strips must keep vowel marks
print("normalized Thai:", metrics.normalize_answer("วันนี้, อากาศดี!"))

# --- judge protocol ----------------------------------------------------------
print("parse [[7.5]]:", parse_rating("The answer is adequate. Rating: [[7.5]]"))
verdict = judge_score("Summarize the clip.",
                      "A short melody plays over steady rain with a low hum.",
                      MockJudgeClient())
print("judge verdict:", verdict.score)

# ComplexIF scores Quality and Format separately
out = complexif_judge("List two steps. Respond as JSON.", "JSON",
                      '{"steps": ["one", "two"]}', MockJudgeClient())
print("complexif quality/format:",
      out["quality"].score, "/", out["format"].score)

# --- a task evaluation end to end --------------------------------------------
entries = [ManifestEntry(id="e0", audio_path="a.wav", task="asr", lang="en",
                         prompt="Transcribe this audio",
                         response="the cat sat on a mat", source="demo")]
report = evalrun.run_eval("asr", lambda e: "the cat sat on the mat", entries)
print("asr report:", {k: report[k] for k in ("metric", "value", "n")})
