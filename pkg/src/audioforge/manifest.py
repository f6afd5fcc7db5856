"""JSONL manifest schema shared by mixing, training, and evaluation.

One example per line: {id, audio_path, task, lang, prompt, response, source}.
Speech-instruction entries always carry a null prompt (the audio itself is
the instruction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

TASKS = ("asr", "caption", "translate_x2th", "translate_th2x", "qa", "speechif")
# composed eval-only task produced by build_complexif_set
EVAL_ONLY_TASKS = ("complexif",)


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    id: str
    audio_path: str
    task: str
    lang: str          # language of the response
    prompt: str | None
    response: str
    source: str = ""

    def validate(self, allow_eval_tasks: bool = False):
        allowed = TASKS + (EVAL_ONLY_TASKS if allow_eval_tasks else ())
        if self.task not in allowed:
            raise ManifestError(f"entry {self.id}: unknown task '{self.task}'")
        if self.task == "speechif" and self.prompt is not None:
            raise ManifestError(f"entry {self.id}: speechif entries must have null prompt")
        if not self.response:
            raise ManifestError(f"entry {self.id}: empty response")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


def write_manifest(path: str, entries: list[ManifestEntry]):
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(e.to_json())
            f.write("\n")


def read_manifest(path: str, allow_eval_tasks: bool = False) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                e = ManifestEntry(**d)
            except (json.JSONDecodeError, TypeError) as err:
                raise ManifestError(f"{path}:{lineno}: {err}") from err
            e.validate(allow_eval_tasks=allow_eval_tasks)
            entries.append(e)
    return entries
