"""Evaluation harness: per-task metric dispatch over a manifest, plus the
compound-instruction (complexif) eval-set builder."""

from __future__ import annotations

import json
import os

import numpy as np

from . import metrics
from .audio import decode_wav, log_mel
from .clients import TextGenClient
from .judge import JudgeParseError, complexif_judge, judge_score
from .manifest import ManifestEntry, write_manifest
from .model import AudioLM
from .rng import make_rng

EVAL_TASKS = ("asr", "translation", "caption", "gender", "spokenqa",
              "speechif", "complexif")

TASK_METRIC = {
    "asr": "WER",
    "translation": "BLEU",
    "caption": "METEOR",
    "gender": "Accuracy",
    "spokenqa": "F1",
    "speechif": "Judge",
    "complexif": "JudgeDual",
}


class EvalError(ValueError):
    pass


def make_model_responder(model: AudioLM, audio_root: str = ".", max_new: int = 64):
    """In-process responder: greedy decode conditioned on audio + prompt."""

    def respond(entry: ManifestEntry) -> str:
        with open(os.path.join(audio_root, entry.audio_path), "rb") as f:
            wav = decode_wav(f.read())
        mel = log_mel(wav).frames
        prompt = entry.prompt.encode("utf-8") if entry.prompt else None
        raw, _ = model.generate(mel, prompt, max_new=max_new)
        return raw.decode("utf-8", errors="replace")

    return respond


def make_endpoint_responder(endpoint: str, timeout: float = 30.0):
    def respond(entry: ManifestEntry) -> str:
        import requests

        body = {"kind": "generate", "text": entry.prompt or "",
                "params": {"audio_path": entry.audio_path, "id": entry.id}}
        r = requests.post(endpoint, json=body, timeout=timeout)
        r.raise_for_status()
        out = r.json()
        if not out.get("ok", False):
            raise EvalError(f"endpoint returned ok=false for {entry.id}")
        return out["text"]

    return respond


def _wer_tokens(text: str, lang: str, unit: str) -> list[str]:
    if unit == "auto":
        unit = "char" if lang == "th" else "word"
    return metrics.tokenize(text, unit)


def run_eval(task: str, responder, entries: list[ManifestEntry],
             judge_client: TextGenClient | None = None,
             wer_unit: str = "auto", out_dir: str | None = None,
             seed: int = 0) -> dict:
    """Score model responses on one task; returns a metric report.

    Per-example failures are logged, excluded from the aggregate, and
    counted in the report.
    """
    if task not in EVAL_TASKS:
        raise EvalError(f"unknown eval task '{task}' (choose from {EVAL_TASKS})")
    if task in ("speechif", "complexif") and judge_client is None:
        raise EvalError(f"task '{task}' needs a judge client")

    per_example = []
    failures = 0
    for entry in entries:
        record = {"id": entry.id, "task": task}
        try:
            response = responder(entry)
            record["response"] = response
            if task == "asr":
                hyp = _wer_tokens(response, entry.lang, wer_unit)
                ref = _wer_tokens(entry.response, entry.lang, wer_unit)
                record["edits"] = metrics.edit_distance(hyp, ref)
                record["ref_len"] = len(ref)
                record["value"] = record["edits"] / record["ref_len"]
            elif task == "translation":
                record["hyp_tokens"] = response.split()
                record["ref_tokens"] = entry.response.split()
                record["value"] = metrics.bleu([record["hyp_tokens"]],
                                               [record["ref_tokens"]])
            elif task == "caption":
                record["value"] = metrics.meteor_exact(response.split(),
                                                       entry.response.split())
            elif task == "gender":
                pred = metrics.extract_gender(response)
                record["value"] = float(pred == entry.response.lower())
            elif task == "spokenqa":
                record["value"] = metrics.token_f1(response, entry.response)
            elif task == "speechif":
                verdict = judge_score(entry.prompt or entry.response, response,
                                      judge_client)
                record["value"] = verdict.score
            elif task == "complexif":
                ref = json.loads(entry.response)
                verdicts = complexif_judge(entry.prompt, ref["format"], response,
                                           judge_client)
                for aspect in ("quality", "format"):
                    v = verdicts[aspect]
                    if isinstance(v, JudgeParseError):
                        raise v
                    record[aspect] = v.score
                record["value"] = 0.5 * (record["quality"] + record["format"])
        except Exception as e:  # noqa: BLE001 - per-example isolation
            record["error"] = f"{type(e).__name__}: {e}"
            failures += 1
        per_example.append(record)

    scored = [r for r in per_example if "error" not in r]
    report = {"task": task, "metric": TASK_METRIC[task], "n": len(scored),
              "failures": failures,
              "config": {"wer_unit": wer_unit, "seed": seed}}
    if not scored:
        report["value"] = None
    elif task == "asr":
        report["value"] = sum(r["edits"] for r in scored) / sum(r["ref_len"] for r in scored)
    elif task == "translation":
        report["value"] = metrics.bleu([r["hyp_tokens"] for r in scored],
                                       [r["ref_tokens"] for r in scored])
    elif task == "complexif":
        report["quality"] = float(np.mean([r["quality"] for r in scored]))
        report["format"] = float(np.mean([r["format"] for r in scored]))
        report["value"] = 0.5 * (report["quality"] + report["format"])
    else:
        report["value"] = float(np.mean([r["value"] for r in scored]))

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"eval_{task}.jsonl"), "w",
                  encoding="utf-8") as f:
            for r in per_example:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")
        with open(os.path.join(out_dir, f"eval_{task}_summary.json"), "w",
                  encoding="utf-8") as f:
            json.dump(report, f, ensure_ascii=False, indent=2, sort_keys=True)
    return report


# -- complexif set construction ------------------------------------------------

SUBTASKS = [
    ("transcribe", "transcribe the speech"),
    ("translate", "translate the transcript into Thai"),
    ("describe", "describe the overall sound of the clip"),
]

FORMAT_TEMPLATES = {
    "JSON": 'Respond as a JSON object: {"steps": ["..."]}.',
    "XML": "Respond as XML: <answer><step>...</step></answer>.",
    "Markdown": "Respond in Markdown with one # heading and a bullet list.",
}


def build_complexif_set(base_entries: list[ManifestEntry], seed: int,
                        n: int | None = None) -> list[ManifestEntry]:
    """Compose 2-3 sub-task instructions over one clip plus a required
    output format (seeded choice); the reference records the ordered
    sub-task list and the format tag."""
    rng = make_rng(seed)
    pool = [e for e in base_entries if e.task == "asr"] or list(base_entries)
    if n is not None:
        pool = pool[:n]
    out = []
    fmt_names = sorted(FORMAT_TEMPLATES)
    for i, base in enumerate(pool):
        k = 2 + int(rng.integers(2))  # 2 or 3 sub-tasks
        order = rng.permutation(len(SUBTASKS))[:k]
        chosen = [SUBTASKS[j] for j in order]
        fmt = fmt_names[int(rng.integers(len(fmt_names)))]
        steps = ", then ".join(name for _, name in chosen)
        prompt = (f"Listen to the audio and {steps}. "
                  f"{FORMAT_TEMPLATES[fmt]}")
        reference = json.dumps({"subtasks": [tag for tag, _ in chosen],
                                "refs": [base.response] * k, "format": fmt},
                               ensure_ascii=False, sort_keys=True)
        out.append(ManifestEntry(id=f"cpx-{seed}-{i:04d}", audio_path=base.audio_path,
                                 task="complexif", lang="en", prompt=prompt,
                                 response=reference, source="complexif"))
    return out
