"""Training-data machinery: mixture building with language-ratio control,
prompt templating, speech-instruction generation pipelines (Type1 from ASR
transcripts, Type2 from text instruction pairs via TTS), QA/MCQ generation,
caption augmentation, translation-pair derivation, and a synthetic corpus
generator used as the desk-scale stand-in for the real datasets.

Every operation is deterministic under its seed and the mock clients, and
accounts for its inputs: input == output + filtered + failed.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .clients import (CaptionAugmentClient, ClientError, MockQaGenClient,
                      MockTextGenClient, MockTranslateClient, MockTtsClient,
                      QaGenClient, TextGenClient, TranslateClient, TtsClient)
from .manifest import ManifestEntry, read_manifest, write_manifest
from .rng import make_rng


class MixError(ValueError):
    pass


class TemplateError(KeyError):
    pass


# -- prompt templates ---------------------------------------------------

PROMPT_TEMPLATES: dict[tuple[str, str], list[str]] = {
    ("asr", "en"): [
        "Transcribe this audio",
        "Please write down exactly what is said in the recording.",
        "Provide a transcript of this speech.",
        "What does the speaker say? Transcribe it verbatim.",
    ],
    ("asr", "th"): [
        "ถอดความเสียงนี้เป็นข้อความ",
        "กรุณาเขียนสิ่งที่ผู้พูดพูดทั้งหมด",
        "ช่วยถอดเสียงพูดนี้ให้หน่อย",
    ],
    ("caption", "en"): [
        "Describe the sounds in this audio clip.",
        "What can you hear in this recording?",
        "Write a caption for this audio.",
    ],
    ("caption", "th"): [
        "บรรยายเสียงที่ได้ยินในคลิปนี้",
        "คุณได้ยินอะไรในเสียงนี้บ้าง",
    ],
    ("translate_x2th", "en"): [
        "Translate the speech into Thai.",
        "Listen and translate what is said into Thai.",
    ],
    ("translate_x2th", "th"): [
        "แปลเสียงพูดนี้เป็นภาษาไทย",
        "ฟังแล้วแปลเป็นภาษาไทย",
    ],
    ("translate_th2x", "en"): [
        "Translate the Thai speech into English.",
        "Listen to the Thai audio and translate it into English.",
    ],
    ("translate_th2x", "th"): [
        "แปลเสียงพูดภาษาไทยนี้เป็นภาษาอังกฤษ",
    ],
    ("qa", "en"): [
        "Answer the question about the recording.",
    ],
    ("qa", "th"): [
        "ตอบคำถามเกี่ยวกับเสียงนี้",
    ],
}

# tasks whose prompts are (re)templated by the mixer
TEMPLATABLE_TASKS = ("asr", "caption", "translate_x2th", "translate_th2x")


def template_prompt(task: str, prompt_lang: str, rng: np.random.Generator) -> str | None:
    if task == "speechif":
        return None
    key = (task, prompt_lang)
    if key not in PROMPT_TEMPLATES:
        raise TemplateError(f"no prompt templates for task={task}, lang={prompt_lang}")
    options = PROMPT_TEMPLATES[key]
    return options[int(rng.integers(len(options)))]


# -- mixture -------------------------------------------------------------


@dataclass
class MixSource:
    manifest_path: str
    take: int
    prompt_lang_ratio: dict[str, float] = field(default_factory=lambda: {"en": 1.0})


@dataclass
class MixtureSpec:
    seed: int
    sources: list[MixSource]

    def validate(self):
        for s in self.sources:
            total = sum(s.prompt_lang_ratio.values())
            if abs(total - 1.0) > 1e-9:
                raise MixError(f"prompt_lang_ratio weights sum to {total}, expected 1")


def largest_remainder(ratio: dict[str, float], n: int) -> dict[str, int]:
    """Apportion n among languages: exact when r*n is integral, otherwise
    floor counts plus leftovers by largest fractional remainder."""
    langs = sorted(ratio)
    quotas = {l: ratio[l] * n for l in langs}
    counts = {l: int(np.floor(quotas[l] + 1e-9)) for l in langs}
    leftover = n - sum(counts.values())
    by_remainder = sorted(langs, key=lambda l: (-(quotas[l] - counts[l]), l))
    for l in by_remainder[:leftover]:
        counts[l] += 1
    return counts


def mix(spec: MixtureSpec, out_path: str) -> dict:
    """Sample, re-prompt, shuffle, and write a mixed JSONL manifest."""
    spec.validate()
    rng = make_rng(spec.seed)
    mixed: list[ManifestEntry] = []
    report = {"total": 0, "per_source": {}, "per_prompt_lang": {}}
    for src in spec.sources:
        entries = read_manifest(src.manifest_path)
        if src.take > len(entries):
            raise MixError(f"take={src.take} exceeds source size {len(entries)} "
                           f"({src.manifest_path})")
        order = rng.permutation(len(entries))[:src.take]
        sampled = [entries[i] for i in order]

        templatable = [e for e in sampled if e.task in TEMPLATABLE_TASKS]
        counts = largest_remainder(src.prompt_lang_ratio, len(templatable))
        lang_pool = [l for l in sorted(counts) for _ in range(counts[l])]
        lang_pool = [lang_pool[i] for i in rng.permutation(len(lang_pool))]
        for e, lang in zip(templatable, lang_pool):
            e.prompt = template_prompt(e.task, lang, rng)
            report["per_prompt_lang"][lang] = report["per_prompt_lang"].get(lang, 0) + 1

        mixed.extend(sampled)
        report["per_source"][src.manifest_path] = len(sampled)
    mixed = [mixed[i] for i in rng.permutation(len(mixed))]
    report["total"] = len(mixed)
    write_manifest(out_path, mixed)
    return report


# -- filters ----------------------------------------------------------------


def _load_pattern_file(path_or_default: str | None, default_asset: str) -> list[str]:
    if path_or_default is None:
        text = resources.files("audioforge.assets").joinpath(default_asset).read_text("utf-8")
    else:
        with open(path_or_default, encoding="utf-8") as f:
            text = f.read()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def load_refusal_patterns(path: str | None = None) -> list[str]:
    return _load_pattern_file(path, "refusal_patterns.txt")


def load_unsuitable_keywords(path: str | None = None) -> list[str]:
    return _load_pattern_file(path, "unsuitable_keywords.txt")


def refusal_filter(text: str, patterns: list[str] | None = None) -> bool:
    """True = drop. Empty/whitespace responses are degenerate and dropped."""
    if not text or not text.strip():
        return True
    patterns = patterns if patterns is not None else load_refusal_patterns()
    low = text.lower()
    return any(p.lower() in low for p in patterns)


_MATH_CHARS = set("0123456789+-*/=^<>")


def unsuitable_instruction_filter(text: str, symbol_ratio: float = 0.30,
                                  keywords: list[str] | None = None) -> bool:
    """True = drop: code fences, math-symbol-heavy text, or flagged keywords."""
    if "```" in text:
        return True
    non_space = [c for c in text if not c.isspace()]
    if non_space:
        mathy = sum(1 for c in non_space if c in _MATH_CHARS)
        if mathy / len(non_space) > symbol_ratio:
            return True
    keywords = keywords if keywords is not None else load_unsuitable_keywords()
    low = text.lower()
    return any(k.lower() in low for k in keywords)


# -- generation pipelines -----------------------------------------------------


def speechif_type1(entries: list[ManifestEntry], textgen: TextGenClient,
                   patterns: list[str] | None = None) -> tuple[list[ManifestEntry], dict]:
    """ASR transcripts -> generated text responses; refusals filtered out."""
    patterns = patterns if patterns is not None else load_refusal_patterns()
    out, filtered, failed = [], 0, 0
    for e in entries:
        try:
            resp = textgen.generate(e.response)
        except ClientError:
            failed += 1
            continue
        if refusal_filter(resp, patterns):
            filtered += 1
            continue
        out.append(ManifestEntry(id=f"{e.id}-sif1", audio_path=e.audio_path,
                                 task="speechif", lang=e.lang, prompt=None,
                                 response=resp, source=f"{e.source}+type1"))
    report = {"input": len(entries), "output": len(out),
              "filtered": filtered, "failed": failed}
    return out, report


def speechif_type2(pairs: list[dict], tts: TtsClient, audio_dir: str,
                   lang: str = "en", id_prefix: str = "sif2",
                   keywords: list[str] | None = None) -> tuple[list[ManifestEntry], dict]:
    """Instruction-response text pairs -> synthesized instruction audio."""
    os.makedirs(audio_dir, exist_ok=True)
    out, filtered, failed = [], 0, 0
    for i, pair in enumerate(pairs):
        instruction, response = pair["instruction"], pair["response"]
        if unsuitable_instruction_filter(instruction, keywords=keywords):
            filtered += 1
            continue
        try:
            wav = tts.synthesize(instruction)
        except ClientError:
            failed += 1
            continue
        eid = f"{id_prefix}-{i:05d}"
        path = os.path.join(audio_dir, f"{eid}.wav")
        with open(path, "wb") as f:
            f.write(wav)
        out.append(ManifestEntry(id=eid, audio_path=path, task="speechif",
                                 lang=lang, prompt=None, response=response,
                                 source="type2"))
    report = {"input": len(pairs), "output": len(out),
              "filtered": filtered, "failed": failed}
    return out, report


def generate_qa_pairs(transcript: str, mode: str,
                      qagen: QaGenClient) -> tuple[list[dict], dict]:
    """Request QA pairs and validate them against the transcript."""
    dropped, failed = 0, 0
    pairs: list[dict] = []
    try:
        raw = qagen.qa_pairs(transcript, mode)
        parsed = json.loads(raw)
        if not isinstance(parsed, list):
            raise ValueError("expected a JSON list")
    except (ClientError, ValueError, json.JSONDecodeError):
        return [], {"input": 1, "output": 0, "filtered": 0, "failed": 1}
    for item in parsed:
        q, a = item.get("question"), item.get("answer")
        if not q or not a:
            dropped += 1
            continue
        if mode == "extractive" and a not in transcript:
            dropped += 1
            continue
        if mode == "mcq" and a not in item.get("choices", []):
            dropped += 1
            continue
        pairs.append({"question": q, "answer": a})
    report = {"input": len(parsed), "output": len(pairs),
              "filtered": dropped, "failed": failed}
    return pairs, report


def augment_captions(entries: list[ManifestEntry],
                     client: CaptionAugmentClient) -> tuple[list[ManifestEntry], dict]:
    """Replace short captions with detailed ones; failures keep the original."""
    out, failed = [], 0
    for e in entries:
        try:
            detailed = client.augment(e.response)
        except ClientError:
            failed += 1
            detailed = e.response
        out.append(ManifestEntry(id=e.id, audio_path=e.audio_path, task=e.task,
                                 lang=e.lang, prompt=e.prompt, response=detailed,
                                 source=f"{e.source} (augmented)"))
    report = {"input": len(entries), "output": len(out), "filtered": 0,
              "failed": failed}
    return out, report


def derive_translation_pairs(entries: list[ManifestEntry], direction: str,
                             client: TranslateClient,
                             rng: np.random.Generator) -> tuple[list[ManifestEntry], dict]:
    """Turn ASR entries into translation entries via the translate client."""
    if direction not in ("x2th", "th2x"):
        raise ValueError(f"direction must be x2th or th2x, got '{direction}'")
    task = f"translate_{direction}"
    target = "th" if direction == "x2th" else "en"
    out, skipped, failed = [], 0, 0
    for e in entries:
        if not e.response.strip():
            skipped += 1
            continue
        try:
            translated = client.translate(e.response, target)
        except ClientError:
            failed += 1
            continue
        out.append(ManifestEntry(id=f"{e.id}-{direction}", audio_path=e.audio_path,
                                 task=task, lang=target,
                                 prompt=template_prompt(task, target, rng),
                                 response=translated, source=f"{e.source}+{direction}"))
    report = {"input": len(entries), "output": len(out), "filtered": skipped,
              "failed": failed}
    return out, report


# -- synthetic corpus -------------------------------------------------------

EN_SUBJECTS = ["the cat", "a child", "the teacher", "my neighbor", "the robot",
               "an old friend"]
EN_VERBS = ["sees", "likes", "finds", "describes", "hears", "remembers"]
EN_OBJECTS = ["a red ball", "the quiet river", "an old song", "the morning light",
              "a small bird", "the open window"]
TH_PHRASES = [
    "วันนี้อากาศดีมาก",
    "ฉันชอบฟังเพลงตอนเย็น",
    "แมวนอนอยู่บนเก้าอี้",
    "เขากำลังอ่านหนังสือเล่มใหม่",
    "ฝนตกหนักเมื่อวานนี้",
    "เด็กๆ เล่นอยู่ในสวน",
]
EN_CAPTIONS = ["a dog barks twice in the distance", "rain falls on a tin roof",
               "a bell rings near a busy street", "soft piano music plays slowly"]
TH_CAPTIONS = ["เสียงนกร้องตอนเช้า", "เสียงฝนตกกระทบหลังคา", "เสียงระฆังดังใกล้ถนน"]


def _sample_transcript(lang: str, rng: np.random.Generator) -> str:
    if lang == "th":
        return TH_PHRASES[int(rng.integers(len(TH_PHRASES)))]
    return " ".join([EN_SUBJECTS[int(rng.integers(len(EN_SUBJECTS)))],
                     EN_VERBS[int(rng.integers(len(EN_VERBS)))],
                     EN_OBJECTS[int(rng.integers(len(EN_OBJECTS)))]])


def _sample_caption(lang: str, rng: np.random.Generator) -> str:
    pool = TH_CAPTIONS if lang == "th" else EN_CAPTIONS
    return pool[int(rng.integers(len(pool)))]


DEFAULT_SYNTH_TASKS = ("asr", "caption", "translate_x2th", "translate_th2x",
                       "qa", "speechif", "gender")


def synth_corpus(seed: int, n: int, out_dir: str,
                 langs: tuple[str, ...] = ("en", "th"),
                 tasks: tuple[str, ...] = DEFAULT_SYNTH_TASKS,
                 manifest_name: str = "synth.jsonl") -> str:
    """Generate n synthetic examples (WAV via mock TTS + JSONL manifest).

    "gender" is a pseudo-task emitting speaker-gender QA entries whose
    response is the label. Returns the manifest path.
    """
    rng = make_rng(seed)
    tts = MockTtsClient()
    textgen = MockTextGenClient()
    translate = MockTranslateClient()
    qagen = MockQaGenClient()
    audio_dir = os.path.join(out_dir, "audio")
    os.makedirs(audio_dir, exist_ok=True)
    entries: list[ManifestEntry] = []
    for i in range(n):
        task = tasks[i % len(tasks)]
        lang = langs[(i // len(tasks)) % len(langs)]
        if task == "translate_x2th":
            lang = "en"
        elif task == "translate_th2x":
            lang = "th"
        transcript = _sample_transcript(lang, rng)
        eid = f"synth-{seed}-{i:05d}"
        wav_path = os.path.join(audio_dir, f"{eid}.wav")
        with open(wav_path, "wb") as f:
            f.write(tts.synthesize(transcript))

        if task == "asr":
            entry = ManifestEntry(eid, wav_path, "asr", lang,
                                  template_prompt("asr", lang, rng), transcript,
                                  source="synth")
        elif task == "caption":
            entry = ManifestEntry(eid, wav_path, "caption", lang,
                                  template_prompt("caption", lang, rng),
                                  _sample_caption(lang, rng), source="synth")
        elif task in ("translate_x2th", "translate_th2x"):
            target = "th" if task == "translate_x2th" else "en"
            entry = ManifestEntry(eid, wav_path, task, target,
                                  template_prompt(task, target, rng),
                                  translate.translate(transcript, target),
                                  source="synth")
        elif task == "qa":
            pairs, _ = generate_qa_pairs(transcript, "extractive", qagen)
            if not pairs:
                continue
            entry = ManifestEntry(eid, wav_path, "qa", lang,
                                  pairs[0]["question"], pairs[0]["answer"],
                                  source="synth")
        elif task == "speechif":
            entry = ManifestEntry(eid, wav_path, "speechif", lang, None,
                                  textgen.generate(transcript), source="synth")
        elif task == "gender":
            label = "female" if i % 2 == 0 else "male"
            entry = ManifestEntry(eid, wav_path, "qa", "en",
                                  "What is the gender of the speaker?", label,
                                  source="synth:gender")
        else:
            raise ValueError(f"unknown synth task '{task}'")
        entries.append(entry)
    manifest_path = os.path.join(out_dir, manifest_name)
    write_manifest(manifest_path, entries)
    return manifest_path
