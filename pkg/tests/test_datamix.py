import json
import os

import numpy as np
import pytest

from audioforge import datamix
from audioforge.clients import (REFUSAL_TEXT, MockCaptionAugmentClient,
                                MockQaGenClient, MockTextGenClient,
                                MockTranslateClient, MockTtsClient)
from audioforge.manifest import ManifestEntry, read_manifest, write_manifest
from audioforge.rng import make_rng


def asr_entries(n, lang="en"):
    return [ManifestEntry(id=f"e{i:04d}", audio_path=f"audio/{i}.wav",
                          task="asr", lang=lang, prompt="Transcribe this audio",
                          response=f"sample transcript number {i}",
                          source="unit") for i in range(n)]


def write_corpus(tmp_path, entries, name="src.jsonl"):
    path = str(tmp_path / name)
    write_manifest(path, entries)
    return path


# -- apportionment ---------------------------------------------------------


def test_largest_remainder_exact_180_20():
    counts = datamix.largest_remainder({"en": 0.9, "th": 0.1}, 200)
    assert counts == {"en": 180, "th": 20}


def test_largest_remainder_sums_and_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = rng.random(3)
        ratio = dict(zip("abc", w / w.sum()))
        n = int(rng.integers(1, 300))
        counts = datamix.largest_remainder(ratio, n)
        assert sum(counts.values()) == n
        for k in ratio:
            assert abs(counts[k] - ratio[k] * n) < 1.0


# -- mixing ----------------------------------------------------------------


def test_mix_ratio_and_determinism(tmp_path):
    src = write_corpus(tmp_path, asr_entries(250))
    spec = datamix.MixtureSpec(seed=11, sources=[
        datamix.MixSource(manifest_path=src, take=200,
                          prompt_lang_ratio={"en": 0.9, "th": 0.1})])
    out1, out2 = str(tmp_path / "m1.jsonl"), str(tmp_path / "m2.jsonl")
    rep1 = datamix.mix(spec, out1)
    rep2 = datamix.mix(spec, out2)
    assert rep1["per_prompt_lang"] == {"en": 180, "th": 20}
    assert rep1["total"] == 200
    assert open(out1, "rb").read() == open(out2, "rb").read()

    thai = [e for e in read_manifest(out1)
            if (e.task, "th") in datamix.PROMPT_TEMPLATES
            and e.prompt in datamix.PROMPT_TEMPLATES[(e.task, "th")]]
    assert len(thai) == 20


def test_mix_take_exceeds_source(tmp_path):
    src = write_corpus(tmp_path, asr_entries(5))
    spec = datamix.MixtureSpec(seed=0, sources=[
        datamix.MixSource(manifest_path=src, take=6)])
    with pytest.raises(datamix.MixError):
        datamix.mix(spec, str(tmp_path / "out.jsonl"))


def test_mix_bad_ratio_rejected(tmp_path):
    src = write_corpus(tmp_path, asr_entries(5))
    spec = datamix.MixtureSpec(seed=0, sources=[
        datamix.MixSource(manifest_path=src, take=2,
                          prompt_lang_ratio={"en": 0.7, "th": 0.7})])
    with pytest.raises(datamix.MixError):
        datamix.mix(spec, str(tmp_path / "out.jsonl"))


def test_mix_leaves_speechif_prompts_null(tmp_path):
    entries = [ManifestEntry(id=f"s{i}", audio_path=f"a/{i}.wav",
                             task="speechif", lang="en", prompt=None,
                             response="a reply", source="unit")
               for i in range(10)]
    src = write_corpus(tmp_path, entries)
    spec = datamix.MixtureSpec(seed=0, sources=[
        datamix.MixSource(manifest_path=src, take=10,
                          prompt_lang_ratio={"en": 0.5, "th": 0.5})])
    out = str(tmp_path / "out.jsonl")
    datamix.mix(spec, out)
    assert all(e.prompt is None for e in read_manifest(out))


# -- templates ---------------------------------------------------------------


def test_template_prompt():
    rng = make_rng(0)
    assert datamix.template_prompt("speechif", "en", rng) is None
    assert datamix.template_prompt("asr", "en", rng) in \
        datamix.PROMPT_TEMPLATES[("asr", "en")]
    assert "Transcribe this audio" in datamix.PROMPT_TEMPLATES[("asr", "en")]
    with pytest.raises(datamix.TemplateError):
        datamix.template_prompt("asr", "fr", rng)


# -- filters -----------------------------------------------------------------


def test_refusal_filter():
    assert datamix.refusal_filter(REFUSAL_TEXT)
    assert datamix.refusal_filter("  ")
    assert not datamix.refusal_filter("Here is a summary of the recording.")


def test_unsuitable_instruction_filter():
    assert datamix.unsuitable_instruction_filter("```python\nprint(1)\n```")
    assert datamix.unsuitable_instruction_filter("Solve 3x^2+4x=7 for x")
    assert datamix.unsuitable_instruction_filter("write a function in Python")
    assert not datamix.unsuitable_instruction_filter(
        "Describe your favorite season in two sentences.")


# -- speechif pipelines --------------------------------------------------------


def test_speechif_type1_filters_refusals():
    entries = asr_entries(40)
    textgen = MockTextGenClient(refusal_rate=0.3)
    planted = sum(1 for e in entries
                  if textgen.generate(e.response) == REFUSAL_TEXT)
    assert planted > 0
    out, report = datamix.speechif_type1(entries, textgen)
    assert report["input"] == 40
    assert report["input"] == report["output"] + report["filtered"] + report["failed"]
    assert report["filtered"] == planted
    assert all(REFUSAL_TEXT not in e.response for e in out)
    assert all(e.prompt is None and e.task == "speechif" for e in out)


def test_speechif_type2_filters_unsuitable(tmp_path):
    pairs = [
        {"instruction": "Name three animals.", "response": "Cat, dog, bird."},
        {"instruction": "```sum(range(10))```", "response": "45"},
        {"instruction": "Compute 12*34+56-78/9 = ?", "response": "462"},
        {"instruction": "Tell me a short story.", "response": "Once upon a time."},
    ]
    out, report = datamix.speechif_type2(pairs, MockTtsClient(),
                                         str(tmp_path / "audio"))
    assert report == {"input": 4, "output": 2, "filtered": 2, "failed": 0}
    for e in out:
        assert e.prompt is None and os.path.exists(e.audio_path)


# -- QA / captions / translation -----------------------------------------------


def test_generate_qa_pairs_extractive_answers_in_transcript():
    transcript = "the teacher sees a red ball"
    pairs, report = datamix.generate_qa_pairs(transcript, "extractive",
                                              MockQaGenClient())
    assert pairs and all(p["answer"] in transcript for p in pairs)
    assert report["input"] == report["output"] + report["filtered"] + report["failed"]


def test_generate_qa_pairs_bad_json_counts_failed():
    class BrokenQaGen:
        def qa_pairs(self, transcript, mode):
            return "not json"

    pairs, report = datamix.generate_qa_pairs("text", "extractive", BrokenQaGen())
    assert pairs == [] and report["failed"] == 1


def test_generate_qa_pairs_mcq_answer_in_choices():
    pairs, _ = datamix.generate_qa_pairs("the cat finds an old song", "mcq",
                                         MockQaGenClient())
    assert pairs


def test_augment_captions_lengthens():
    entries = [ManifestEntry(id="c0", audio_path="a.wav", task="caption",
                             lang="en", prompt="Describe the sounds.",
                             response="a dog barks", source="unit")]
    out, report = datamix.augment_captions(entries, MockCaptionAugmentClient())
    assert report["output"] == 1 and len(out[0].response) > len("a dog barks")
    assert out[0].response.startswith("a dog barks")


def test_derive_translation_pairs_round_trip():
    entries = asr_entries(5)
    client = MockTranslateClient()
    rng = make_rng(0)
    to_th, rep = datamix.derive_translation_pairs(entries, "x2th", client, rng)
    assert rep["output"] == 5
    assert all(e.task == "translate_x2th" and e.lang == "th" for e in to_th)
    # mock translation is reversible: translating back recovers the source
    for orig, tr in zip(entries, to_th):
        assert client.translate(tr.response, "en") == orig.response
    with pytest.raises(ValueError):
        datamix.derive_translation_pairs(entries, "th2en", client, rng)


# -- synthetic corpus ------------------------------------------------------------


def test_synth_corpus_deterministic_and_valid(tmp_path):
    p1 = datamix.synth_corpus(7, 14, str(tmp_path / "c1"))
    first = open(p1, "rb").read()
    p2 = datamix.synth_corpus(7, 14, str(tmp_path / "c1"))  # regenerate in place
    assert p1 == p2 and open(p2, "rb").read() == first
    entries = read_manifest(p1)
    assert entries
    for e in entries:
        assert os.path.exists(e.audio_path)
    gender = [e for e in entries if e.source == "synth:gender"]
    assert gender and all(e.task == "qa" and e.response in ("female", "male")
                          for e in gender)
    speechif = [e for e in entries if e.task == "speechif"]
    assert speechif and all(e.prompt is None for e in speechif)
