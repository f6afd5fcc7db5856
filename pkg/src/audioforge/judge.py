"""LLM-judge protocol: prompt rendering and bracketed-rating parsing.

Verdicts are decimals in [1.0, 10.0] wrapped as [[x]]; the last occurrence
in the judge text wins. A missing or out-of-range rating is an error,
never a default score.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .clients import TextGenClient

RATING_RE = re.compile(r"\[\[(\d+(?:\.\d+)?)\]\]")

MIN_SCORE = 1.0
MAX_SCORE = 10.0


class JudgeParseError(ValueError):
    pass


@dataclass
class JudgeVerdict:
    score: float
    raw: str


def _template(name: str) -> str:
    return resources.files("audioforge.assets").joinpath(name).read_text("utf-8")


def render_single_prompt(question: str, response: str) -> str:
    return _template("judge_single.txt").format(question=question, response=response)


def render_format_prompt(question: str, required_format: str, response: str) -> str:
    return _template("judge_format.txt").format(
        question=question, required_format=required_format, response=response)


def format_rating(score: float) -> str:
    return f"[[{score}]]"


def parse_rating(text: str) -> float:
    found = RATING_RE.findall(text)
    if not found:
        raise JudgeParseError(f"no [[x]] rating found in judge output: {text[:120]!r}")
    score = float(found[-1])
    if not MIN_SCORE <= score <= MAX_SCORE:
        raise JudgeParseError(f"rating {score} outside [{MIN_SCORE}, {MAX_SCORE}]")
    return score


def judge_score(question: str, response: str, client: TextGenClient) -> JudgeVerdict:
    prompt = render_single_prompt(question, response)
    raw = client.generate(prompt, params={"aspect": "quality", "response": response})
    return JudgeVerdict(score=parse_rating(raw), raw=raw)


def complexif_judge(question: str, required_format: str, response: str,
                    client: TextGenClient) -> dict:
    """Dual-aspect judging; each aspect is parsed independently, so one
    failed parse fails only that aspect."""
    out: dict = {}
    quality_raw = client.generate(
        render_single_prompt(question, response),
        params={"aspect": "quality", "response": response})
    format_raw = client.generate(
        render_format_prompt(question, required_format, response),
        params={"aspect": "format", "response": response,
                "required_format": required_format})
    for aspect, raw in (("quality", quality_raw), ("format", format_raw)):
        try:
            out[aspect] = JudgeVerdict(score=parse_rating(raw), raw=raw)
        except JudgeParseError as e:
            out[aspect] = e
    return out
