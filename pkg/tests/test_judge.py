import pytest

from audioforge.clients import MockJudgeClient
from audioforge.judge import (JudgeParseError, JudgeVerdict, complexif_judge,
                              format_rating, judge_score, parse_rating,
                              render_format_prompt, render_single_prompt)


def test_parse_rating_boundaries():
    assert parse_rating("Rating: [[1.0]]") == 1.0
    assert parse_rating("Rating: [[10.0]]") == 10.0
    assert parse_rating("score [[7]]") == 7.0
    assert parse_rating("[[6.5]]") == 6.5


def test_parse_rating_out_of_range_rejected():
    with pytest.raises(JudgeParseError):
        parse_rating("[[0.5]]")
    with pytest.raises(JudgeParseError):
        parse_rating("[[10.5]]")
    with pytest.raises(JudgeParseError):
        parse_rating("[[0]]")


def test_parse_rating_missing_rejected_no_default():
    for text in ("no rating here", "[7.0]", "[[seven]]", ""):
        with pytest.raises(JudgeParseError):
            parse_rating(text)


def test_parse_rating_last_occurrence_wins():
    assert parse_rating("draft [[3.0]] ... final verdict [[9.0]]") == 9.0


def test_format_rating_round_trips():
    for score in (1.0, 5.5, 10.0):
        assert parse_rating(format_rating(score)) == score


def test_render_prompts_embed_fields():
    p = render_single_prompt("What is said?", "a transcript")
    assert "What is said?" in p and "a transcript" in p and "[[" in p
    f = render_format_prompt("Q", "JSON", "resp")
    assert "JSON" in f and "resp" in f


def test_judge_score_with_mock():
    verdict = judge_score("Summarize the clip.",
                          "The clip contains a short melody with steady rhythm "
                          "and a quiet background hum.", MockJudgeClient())
    assert isinstance(verdict, JudgeVerdict)
    assert 1.0 <= verdict.score <= 10.0
    assert "[[" in verdict.raw


def test_mock_judge_prefers_richer_answers():
    judge = MockJudgeClient()
    short = judge_score("Q", "ok", judge).score
    rich = judge_score("Q", "The audio presents layered percussion, a rising "
                       "string motif, and a clear vocal line that resolves "
                       "gently near the end of the clip.", judge).score
    assert rich > short


def test_complexif_dual_aspect_format_scores():
    judge = MockJudgeClient()
    good = complexif_judge("Do X. Respond as JSON.", "JSON",
                           '{"steps": ["did x"]}', judge)
    bad = complexif_judge("Do X. Respond as JSON.", "JSON",
                          "not valid json {", judge)
    assert good["format"].score == 10.0
    assert bad["format"].score == 1.0
    assert good["format"].score > bad["format"].score
    assert isinstance(good["quality"], JudgeVerdict)


def test_complexif_markdown_and_xml_checks():
    judge = MockJudgeClient()
    assert complexif_judge("Q", "Markdown", "# Title\n- item",
                           judge)["format"].score == 10.0
    assert complexif_judge("Q", "XML", "<answer><step>ok</step></answer>",
                           judge)["format"].score == 10.0
    assert complexif_judge("Q", "XML", "<answer><unclosed>",
                           judge)["format"].score == 1.0


def test_complexif_parse_failure_is_isolated():
    class HalfBrokenJudge:
        def generate(self, text, params=None):
            if (params or {}).get("aspect") == "format":
                return "no verdict markers at all"
            return "fine answer [[8.0]]"

    out = complexif_judge("Q", "JSON", "{}", HalfBrokenJudge())
    assert isinstance(out["quality"], JudgeVerdict) and out["quality"].score == 8.0
    assert isinstance(out["format"], JudgeParseError)
