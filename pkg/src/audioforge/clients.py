"""External generation/TTS/translation clients and their deterministic mocks.

Wire contract (shared by every client kind):
  HTTP POST, request body  {"kind": "...", "text": "...", "params": {...}}
  response body            {"ok": bool, "text": ... | "audio_b64": ...}

Mock implementations are pure functions of the request, so every pipeline
that uses them is reproducible bit-for-bit without a network.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

from .audio import SAMPLE_RATE, encode_wav_pcm16

REFUSAL_TEXT = "I'm sorry, as an AI assistant I cannot help with that."


class ClientError(RuntimeError):
    pass


def stable_hash(text: str, salt: str = "") -> int:
    digest = hashlib.sha256((salt + text).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class HttpClient:
    """Thin POST wrapper implementing the wire contract with retries."""

    def __init__(self, endpoint: str, kind: str, timeout: float = 10.0, retries: int = 2):
        self.endpoint = endpoint
        self.kind = kind
        self.timeout = timeout
        self.retries = retries

    def request(self, text: str, params: dict | None = None) -> dict:
        import requests

        body = {"kind": self.kind, "text": text, "params": params or {}}
        last = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(self.endpoint, json=body, timeout=self.timeout)
                resp.raise_for_status()
                out = resp.json()
                if not out.get("ok", False):
                    raise ClientError(f"{self.kind} endpoint returned ok=false: {out}")
                return out
            except Exception as e:  # noqa: BLE001 - retried, then surfaced
                last = e
        raise ClientError(f"{self.kind} request failed after {self.retries + 1} tries: {last}")


# -- text generation ---------------------------------------------------


class TextGenClient:
    def generate(self, text: str, params: dict | None = None) -> str:
        raise NotImplementedError


class HttpTextGenClient(TextGenClient):
    def __init__(self, endpoint: str, **kw):
        self._http = HttpClient(endpoint, "textgen", **kw)

    def generate(self, text, params=None):
        return self._http.request(text, params)["text"]


class MockTextGenClient(TextGenClient):
    """Deterministic responder; plants refusals on a stable fraction of inputs."""

    def __init__(self, refusal_rate: float = 0.0, salt: str = "textgen"):
        self.refusal_rate = refusal_rate
        self.salt = salt

    def generate(self, text, params=None):
        if self.refusal_rate > 0 and \
                stable_hash(text, self.salt) % 1000 < self.refusal_rate * 1000:
            return REFUSAL_TEXT
        text = text.strip()
        if text.endswith("?"):
            return f"Regarding \"{text}\": the short answer is {self._fact(text)}."
        return f"Noted. In response to \"{text}\", here is a brief reply: {self._fact(text)}."

    def _fact(self, text: str) -> str:
        words = [w.strip(".,!?") for w in text.split() if w.strip(".,!?")]
        pick = words[stable_hash(text, "fact") % len(words)] if words else "unknown"
        return pick.lower()


# -- TTS ----------------------------------------------------------------


class TtsClient:
    def synthesize(self, text: str, params: dict | None = None) -> bytes:
        """Returns WAV bytes."""
        raise NotImplementedError


class HttpTtsClient(TtsClient):
    def __init__(self, endpoint: str, **kw):
        self._http = HttpClient(endpoint, "tts", **kw)

    def synthesize(self, text, params=None):
        return base64.b64decode(self._http.request(text, params)["audio_b64"])


class MockTtsClient(TtsClient):
    """Per-byte sine synthesis: 40 ms at 200 + 4*byte Hz per UTF-8 byte."""

    SAMPLES_PER_BYTE = int(0.040 * SAMPLE_RATE)

    def synthesize(self, text, params=None):
        data = text.encode("utf-8")
        if not data:
            data = b"\x00"
        n = self.SAMPLES_PER_BYTE
        t = np.arange(n) / SAMPLE_RATE
        chunks = [0.3 * np.sin(2.0 * np.pi * (200.0 + 4.0 * b) * t) for b in data]
        return encode_wav_pcm16(np.concatenate(chunks).astype(np.float32))


# -- translation ----------------------------------------------------------


class TranslateClient:
    def translate(self, text: str, target_lang: str) -> str:
        raise NotImplementedError


class HttpTranslateClient(TranslateClient):
    def __init__(self, endpoint: str, **kw):
        self._http = HttpClient(endpoint, "translate", **kw)

    def translate(self, text, target_lang):
        return self._http.request(text, {"target_lang": target_lang})["text"]


class MockTranslateClient(TranslateClient):
    """Reversible tagged passthrough: wraps with a language tag, unwraps back."""

    def translate(self, text, target_lang):
        prefix = f"[{target_lang}] "
        if text.startswith(prefix):
            return text
        if text.startswith("[") and "] " in text[:8]:
            # translating a tagged string back: unwrap to the original text
            return text.split("] ", 1)[1]
        return prefix + text


# -- caption augmentation --------------------------------------------------


class CaptionAugmentClient:
    def augment(self, caption: str) -> str:
        raise NotImplementedError


class HttpCaptionAugmentClient(CaptionAugmentClient):
    def __init__(self, endpoint: str, **kw):
        self._http = HttpClient(endpoint, "caption_augment", **kw)

    def augment(self, caption):
        return self._http.request(caption)["text"]


class MockCaptionAugmentClient(CaptionAugmentClient):
    def __init__(self, identity: bool = False):
        self.identity = identity

    def augment(self, caption):
        if self.identity:
            return caption
        return (f"{caption} The recording continues with sustained detail, "
                f"steady dynamics, and a clearly audible texture throughout.")


# -- QA generation ----------------------------------------------------------


class QaGenClient:
    def qa_pairs(self, transcript: str, mode: str) -> str:
        """Returns a JSON string: [{"question": ..., "answer": ...,
        optionally "choices": [...]}, ...]."""
        raise NotImplementedError


class HttpQaGenClient(QaGenClient):
    def __init__(self, endpoint: str, **kw):
        self._http = HttpClient(endpoint, "qagen", **kw)

    def qa_pairs(self, transcript, mode):
        return self._http.request(transcript, {"mode": mode})["text"]


class MockQaGenClient(QaGenClient):
    def qa_pairs(self, transcript, mode):
        words = [w.strip(".,!?") for w in transcript.split() if w.strip(".,!?")]
        if not words:
            return "[]"
        answer = words[stable_hash(transcript, "qa") % len(words)]
        question = f"Which word from the recording is highlighted: {', '.join(words[:6])}?"
        if mode == "extractive":
            return json.dumps([{"question": question, "answer": answer}],
                              ensure_ascii=False)
        if mode == "mcq":
            distractors = ["moonlight", "granite", "thirteen"]
            choices = [answer] + distractors
            rot = stable_hash(transcript, "mcq") % 4
            choices = choices[rot:] + choices[:rot]
            labels = ["A", "B", "C", "D"]
            q = question + " " + " ".join(f"({l}) {c}" for l, c in zip(labels, choices))
            return json.dumps([{"question": q, "answer": answer, "choices": choices}],
                              ensure_ascii=False)
        raise ClientError(f"unknown QA mode '{mode}'")


# -- judge ------------------------------------------------------------------


class MockJudgeClient(TextGenClient):
    """Rule-based judge emitting MT-Bench-style verdicts "... [[x]]".

    Quality: graded by response length and word variety. Format: checks the
    response against the format named in the prompt (JSON/XML/Markdown).
    """

    def generate(self, text, params=None):
        params = params or {}
        aspect = params.get("aspect", "quality")
        response = params.get("response", "")
        if aspect == "format":
            fmt = params.get("required_format", "").lower()
            ok = self._check_format(response, fmt)
            score = 10.0 if ok else 1.0
            verdict = "follows" if ok else "does not follow"
            return (f"The response {verdict} the required {fmt or 'output'} "
                    f"format. Rating: [[{score}]]")
        words = response.split()
        variety = len(set(words)) / max(len(words), 1)
        score = 1.0 + 9.0 * min(1.0, len(words) / 30.0) * variety
        score = round(max(1.0, min(10.0, score)), 1)
        return (f"The response addresses the question with {len(words)} words. "
                f"Rating: [[{score}]]")

    @staticmethod
    def _check_format(response: str, fmt: str) -> bool:
        text = response.strip()
        if fmt == "json":
            try:
                json.loads(text)
                return True
            except json.JSONDecodeError:
                return False
        if fmt == "xml":
            import xml.etree.ElementTree as ET
            try:
                ET.fromstring(text)
                return True
            except ET.ParseError:
                return False
        if fmt == "markdown":
            return any(line.lstrip().startswith(("#", "-", "*", "1."))
                       for line in text.splitlines())
        return bool(text)


def make_client(kind: str, mode_or_endpoint: str, **mock_kw):
    """Build a client from a config value: "mock" or an http(s) URL."""
    mock_map = {
        "textgen": MockTextGenClient,
        "tts": MockTtsClient,
        "translate": MockTranslateClient,
        "caption_augment": MockCaptionAugmentClient,
        "qagen": MockQaGenClient,
        "judge": MockJudgeClient,
    }
    http_map = {
        "textgen": HttpTextGenClient,
        "tts": HttpTtsClient,
        "translate": HttpTranslateClient,
        "caption_augment": HttpCaptionAugmentClient,
        "qagen": HttpQaGenClient,
        "judge": HttpTextGenClient,
    }
    if mode_or_endpoint == "mock":
        return mock_map[kind](**mock_kw)
    return http_map[kind](mode_or_endpoint)
