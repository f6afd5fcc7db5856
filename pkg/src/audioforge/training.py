"""Two-phase trainer: adapter-only pre-training, then adapter + LoRA SFT.

Loss is next-token cross-entropy over response tokens (plus EOS) only;
audio, BOS, and prompt positions are masked out. Encoders and the base LM
stay frozen in both phases, so fused encoder outputs are treated as
constants during training.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import audio as audio_mod
from .checkpoint import load_checkpoint, load_into_model, save_checkpoint
from .manifest import ManifestEntry, read_manifest
from .model import AudioLM, EOS
from .optim import AdamW
from .rng import make_rng, rng_state_blob
from .tensor import cross_entropy, no_grad

IGNORE_INDEX = -100

PHASE_PREFIXES = {
    "pretrain": ("adapter.",),
    "sft": ("adapter.", "lora."),
}


class PhaseError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    phase: str
    manifest_path: str
    out_dir: str
    seed: int = 0
    steps: int = 100
    batch_size: int = 4
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip_norm: float = 1.0
    lr_schedule: str = "constant"  # "constant" | "cosine"
    warmup_steps: int = 0
    min_lr_ratio: float = 0.1
    checkpoint_every: int = 100
    cache_features: bool = False
    audio_root: str = "."

    def __post_init__(self):
        if self.phase not in PHASE_PREFIXES:
            raise PhaseError(f"unknown phase '{self.phase}'")
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule '{self.lr_schedule}'")


def lr_at_step(cfg: TrainConfig, step: int) -> float:
    """Learning rate for 1-based `step`: linear warmup, then constant or
    cosine decay to min_lr_ratio * lr at cfg.steps."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    if cfg.lr_schedule == "constant":
        return cfg.lr
    span = max(cfg.steps - cfg.warmup_steps, 1)
    frac = min(max(step - cfg.warmup_steps, 0) / span, 1.0)
    floor = cfg.min_lr_ratio * cfg.lr
    return floor + (cfg.lr - floor) * 0.5 * (1.0 + np.cos(np.pi * frac))


def build_targets(n_audio: int, prompt_bytes: bytes | None,
                  response_bytes: bytes) -> np.ndarray:
    """Shifted next-token targets over [BOS][audio][prompt][response][EOS].

    Only predictions of response bytes and the final EOS are unmasked.
    """
    p = len(prompt_bytes or b"")
    r = len(response_bytes)
    L = 1 + n_audio + p + r + 1
    targets = np.full(L, IGNORE_INDEX, dtype=np.int64)
    base = n_audio + p  # position predicting the first response byte
    for j, tok in enumerate(response_bytes):
        targets[base + j] = tok
    targets[base + r] = EOS
    return targets


def trainable_params(model: AudioLM, phase: str) -> set[str]:
    if phase not in PHASE_PREFIXES:
        raise PhaseError(f"unknown phase '{phase}'")
    if phase == "sft" and not model.lora_attached:
        raise PhaseError("SFT requires LoRA to be attached first")
    prefixes = PHASE_PREFIXES[phase]
    return {n for n in model.params if any(n.startswith(p) for p in prefixes)}


def clip_global_norm(params, max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


class Trainer:
    def __init__(self, model: AudioLM, cfg: TrainConfig,
                 entries: list[ManifestEntry] | None = None):
        self.model = model
        self.cfg = cfg
        self.entries = entries if entries is not None else read_manifest(cfg.manifest_path)
        if not self.entries:
            raise DataError(f"empty manifest: {cfg.manifest_path}")
        names = trainable_params(model, cfg.phase)
        model.set_trainable(tuple(PHASE_PREFIXES[cfg.phase]))
        self.opt = AdamW({n: model.params[n] for n in names}, lr=cfg.lr,
                         betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
        self.rng = make_rng(cfg.seed)
        self.step_num = 0
        self._order: list[int] = []
        self._fused_cache: dict[str, np.ndarray] = {}
        self._mel_cache: dict[str, np.ndarray] = {}

    # -- data -----------------------------------------------------------

    def _mel(self, entry: ManifestEntry) -> np.ndarray:
        path = os.path.join(self.cfg.audio_root, entry.audio_path)
        if self.cfg.cache_features and path in self._mel_cache:
            return self._mel_cache[path]
        try:
            with open(path, "rb") as f:
                wav = audio_mod.decode_wav(f.read())
        except (OSError, audio_mod.WavFormatError) as e:
            raise DataError(f"example {entry.id}: {e}") from e
        mel = audio_mod.log_mel(wav).frames
        if self.cfg.cache_features:
            self._mel_cache[path] = mel
        return mel

    def _fused(self, entry: ManifestEntry) -> np.ndarray:
        # encoders are frozen in both phases, so fused features are constants
        path = os.path.join(self.cfg.audio_root, entry.audio_path)
        if self.cfg.cache_features and path in self._fused_cache:
            return self._fused_cache[path]
        with no_grad():
            fused = self.model.encode(self._mel(entry)).data
        if self.cfg.cache_features:
            self._fused_cache[path] = fused
        return fused

    def _next_batch(self) -> list[ManifestEntry]:
        batch = []
        for _ in range(self.cfg.batch_size):
            if not self._order:
                self._order = list(self.rng.permutation(len(self.entries)))
            batch.append(self.entries[self._order.pop(0)])
        return batch

    # -- optimization ----------------------------------------------------

    def train_step(self, batch: list[ManifestEntry] | None = None) -> dict:
        from .tensor import Tensor

        batch = batch or self._next_batch()
        loss_sum = None
        n_tokens = 0
        for entry in batch:
            fused = Tensor(self._fused(entry))
            audio_tokens = self.model.adapt(fused)
            prompt = entry.prompt.encode("utf-8") if entry.prompt else None
            response = entry.response.encode("utf-8")
            embeds = self.model.build_input_embeds(audio_tokens, prompt, response,
                                                   with_eos=True)
            logits = self.model.lm(embeds)
            targets = build_targets(audio_tokens.shape[0], prompt, response)
            part = cross_entropy(logits, targets, ignore_index=IGNORE_INDEX,
                                 reduction="sum")
            n_tokens += int((targets != IGNORE_INDEX).sum())
            loss_sum = part if loss_sum is None else loss_sum + part
        loss = loss_sum / n_tokens
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(
                f"non-finite loss {loss_val} at step {self.step_num + 1} "
                f"(phase={self.cfg.phase}, batch={[e.id for e in batch]})")
        loss.backward()
        grad_norm = clip_global_norm(self.opt.params, self.cfg.grad_clip_norm)
        self.opt.lr = lr_at_step(self.cfg, self.step_num + 1)
        self.opt.step()
        self.opt.zero_grad()
        self.step_num += 1
        return {"step": self.step_num, "loss": loss_val, "grad_norm": grad_norm,
                "n_tokens": n_tokens}

    # -- persistence -------------------------------------------------------

    def save(self, path: str):
        tensors = dict(self.model.state_arrays())
        tensors.update(self.opt.state_tensors())
        save_checkpoint(path, tensors, step=self.step_num, phase=self.cfg.phase,
                        rng_blob=rng_state_blob(self.rng))


def run_phase(model: AudioLM, cfg: TrainConfig,
              entries: list[ManifestEntry] | None = None) -> str:
    """Run one training phase; returns the final checkpoint path."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    trainer = Trainer(model, cfg, entries)
    log_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    final_path = os.path.join(cfg.out_dir, f"{cfg.phase}_final.ckpt")
    with open(log_path, "w", encoding="utf-8") as log:
        for _ in range(cfg.steps):
            report = trainer.train_step()
            log.write(json.dumps(report) + "\n")
            if cfg.checkpoint_every > 0 and trainer.step_num % cfg.checkpoint_every == 0 \
                    and trainer.step_num < cfg.steps:
                trainer.save(os.path.join(cfg.out_dir,
                                          f"{cfg.phase}_step{trainer.step_num}.ckpt"))
    trainer.save(final_path)
    return final_path


def init_sft_model(model: AudioLM, pretrain_ckpt_path: str) -> list[str]:
    """Load a pre-training checkpoint, then attach LoRA for SFT.

    Returns warnings for lora.* tensors initialized fresh.
    """
    ckpt = load_checkpoint(pretrain_ckpt_path)
    model.attach_lora()
    return load_into_model(model, ckpt, allow_missing_lora=True)
