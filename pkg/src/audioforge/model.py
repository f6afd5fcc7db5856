"""Toy-scale audio language model.

Two audio encoders (speech + audio-event) consume the same log-mel
features; their outputs are time-aligned, channel-concatenated, and
bridged into a byte-level causal LM by a window-level query adapter:
K learned queries cross-attend to each fixed-length window of fused
frames and emit K tokens per window in the LM embedding space, so the
audio token count scales with duration as ceil(T_e / W) * K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .layers import (Conv1dStride2, LayerNorm, Linear, MultiHeadAttention,
                     FeedForward, TransformerBlock, causal_mask)
from .rng import make_rng
from .tensor import Tensor, no_grad

# byte-level vocabulary: 256 raw bytes + specials
BOS = 256
EOS = 257
PAD = 258
VOCAB = 259


@dataclass
class ModelConfig:
    d_s: int = 64           # speech encoder width
    n_layers_s: int = 2
    n_heads_s: int = 4
    d_b: int = 32           # audio-event encoder width
    n_layers_b: int = 2
    n_heads_b: int = 4
    d_llm: int = 64
    n_layers_lm: int = 4
    n_heads_lm: int = 4
    d_q: int = 64           # adapter query width
    n_layers_q: int = 2
    n_heads_q: int = 4
    num_queries: int = 1    # K
    window_frames: int = 17  # W, ~0.33 s of encoder frames
    lora_r: int = 8
    lora_alpha: float = 32.0
    context: int = 512
    max_mel_frames: int = 3000
    use_window_pos: bool = True
    pos_kind: str = "learned"  # or "sinusoidal"
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def sinusoidal_table(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    tab = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return tab.astype(np.float32)


class _PosTable:
    def __init__(self, params: dict, name: str, n: int, d: int,
                 rng: np.random.Generator, kind: str):
        self.kind = kind
        if kind == "learned":
            self.tab = Tensor(rng.normal(0.0, d ** -0.5, size=(n, d)).astype(np.float32),
                              requires_grad=True)
            params[name] = self.tab
        elif kind == "sinusoidal":
            self.tab = Tensor(sinusoidal_table(n, d))
        else:
            raise ValueError(f"unknown positional encoding kind: {kind}")

    def slice(self, t: int) -> Tensor:
        return self.tab[:t, :]


class SpeechEncoder:
    """Two stride-2 convs then bidirectional blocks; T -> ceil(ceil(T/2)/2)."""

    def __init__(self, params: dict, cfg: ModelConfig, rng: np.random.Generator):
        name = "speech_encoder"
        self.conv1 = Conv1dStride2(params, f"{name}.conv1", 80, cfg.d_s, rng)
        self.conv2 = Conv1dStride2(params, f"{name}.conv2", cfg.d_s, cfg.d_s, rng)
        max_t = -(-(-(-cfg.max_mel_frames // 2)) // 2)  # ceil twice
        self.pos = _PosTable(params, f"{name}.pos", max_t, cfg.d_s, rng, cfg.pos_kind)
        self.blocks = [TransformerBlock(params, f"{name}.blocks.{i}", cfg.d_s,
                                        cfg.n_heads_s, rng)
                       for i in range(cfg.n_layers_s)]

    def __call__(self, mel: Tensor) -> Tensor:
        x = T.gelu(self.conv1(mel))
        x = T.gelu(self.conv2(x))
        x = x + self.pos.slice(x.shape[0])
        for blk in self.blocks:
            x = blk(x)
        return x


class AudioEventEncoder:
    """Frame-wise projection then bidirectional blocks; length preserved."""

    def __init__(self, params: dict, cfg: ModelConfig, rng: np.random.Generator):
        name = "event_encoder"
        self.proj = Linear(params, f"{name}.proj", 80, cfg.d_b, rng)
        self.pos = _PosTable(params, f"{name}.pos", cfg.max_mel_frames, cfg.d_b,
                             rng, cfg.pos_kind)
        self.blocks = [TransformerBlock(params, f"{name}.blocks.{i}", cfg.d_b,
                                        cfg.n_heads_b, rng)
                       for i in range(cfg.n_layers_b)]

    def __call__(self, mel: Tensor) -> Tensor:
        x = self.proj(mel) + self.pos.slice(mel.shape[0])
        for blk in self.blocks:
            x = blk(x)
        return x


class _AdapterBlock:
    """Query self-attention + cross-attention into window frames + FF."""

    def __init__(self, params: dict, name: str, d_q: int, d_kv: int,
                 n_heads: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(params, f"{name}.ln1", d_q)
        self.self_attn = MultiHeadAttention(params, f"{name}.self_attn", d_q,
                                            n_heads, rng)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d_q)
        self.ln_kv = LayerNorm(params, f"{name}.ln_kv", d_kv)
        self.cross_attn = MultiHeadAttention(params, f"{name}.cross_attn", d_q,
                                             n_heads, rng, d_kv=d_kv)
        self.ln3 = LayerNorm(params, f"{name}.ln3", d_q)
        self.ff = FeedForward(params, f"{name}.ff", d_q, rng)

    def __call__(self, q: Tensor, frames: Tensor) -> Tensor:
        q = q + self.self_attn(self.ln1(q))
        q = q + self.cross_attn(self.ln2(q), context=self.ln_kv(frames))
        q = q + self.ff(self.ln3(q))
        return q


class WindowQFormer:
    """Shared learned queries applied independently to each frame window."""

    def __init__(self, params: dict, cfg: ModelConfig, rng: np.random.Generator):
        name = "adapter"
        d_kv = cfg.d_s + cfg.d_b
        self.cfg = cfg
        self.query_embed = Tensor(
            rng.normal(0.0, cfg.d_q ** -0.5, size=(cfg.num_queries, cfg.d_q)).astype(np.float32),
            requires_grad=True)
        params[f"{name}.query_embed"] = self.query_embed
        self.window_pos = Tensor(
            rng.normal(0.0, d_kv ** -0.5, size=(cfg.window_frames, d_kv)).astype(np.float32),
            requires_grad=True)
        params[f"{name}.window_pos"] = self.window_pos
        self.blocks = [_AdapterBlock(params, f"{name}.blocks.{i}", cfg.d_q, d_kv,
                                     cfg.n_heads_q, rng)
                       for i in range(cfg.n_layers_q)]
        self.out_proj = Linear(params, f"{name}.out_proj", cfg.d_q, cfg.d_llm, rng)

    def __call__(self, fused: Tensor, use_window_pos: bool | None = None) -> Tensor:
        W = self.cfg.window_frames
        t_e = fused.shape[0]
        n_windows = -(-t_e // W)
        with_pos = self.cfg.use_window_pos if use_window_pos is None else use_window_pos
        outs = []
        for w in range(n_windows):
            frames = fused[w * W:min((w + 1) * W, t_e), :]
            if with_pos:
                frames = frames + self.window_pos[:frames.shape[0], :]
            q = self.query_embed
            for blk in self.blocks:
                q = blk(q, frames)
            outs.append(self.out_proj(q))
        return T.concat(outs, axis=0)


class DecoderLM:
    """Byte-level causal LM with a weight-tied output head."""

    def __init__(self, params: dict, cfg: ModelConfig, rng: np.random.Generator):
        name = "lm"
        self.cfg = cfg
        self.embed = Tensor(rng.normal(0.0, cfg.d_llm ** -0.5, size=(VOCAB, cfg.d_llm)).astype(np.float32),
                            requires_grad=True)
        params[f"{name}.embed"] = self.embed
        self.pos = _PosTable(params, f"{name}.pos", cfg.context, cfg.d_llm, rng,
                             cfg.pos_kind)
        self.blocks = [TransformerBlock(params, f"{name}.blocks.{i}", cfg.d_llm,
                                        cfg.n_heads_lm, rng)
                       for i in range(cfg.n_layers_lm)]
        self.ln_f = LayerNorm(params, f"{name}.ln_f", cfg.d_llm)

    def embed_ids(self, ids) -> Tensor:
        return T.embedding_lookup(self.embed, ids)

    def __call__(self, embeds: Tensor) -> Tensor:
        L = embeds.shape[0]
        if L > self.cfg.context:
            raise ValueError(f"sequence length {L} exceeds context {self.cfg.context}")
        x = embeds + self.pos.slice(L)
        mask = causal_mask(L)
        for blk in self.blocks:
            x = blk(x, mask=mask)
        x = self.ln_f(x)
        return T.matmul(x, T.transpose(self.embed))

    def attention_linears(self):
        for blk in self.blocks:
            yield blk.attn


class ContextOverflowError(ValueError):
    pass


class AudioLM:
    """Full pipeline: encode -> adapt -> byte LM, with attachable LoRA."""

    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg or ModelConfig()
        self.params: dict[str, Tensor] = {}
        rng = make_rng(self.cfg.seed)
        self.speech_encoder = SpeechEncoder(self.params, self.cfg, rng)
        self.event_encoder = AudioEventEncoder(self.params, self.cfg, rng)
        self.adapter = WindowQFormer(self.params, self.cfg, rng)
        self.lm = DecoderLM(self.params, self.cfg, rng)
        self.lora_attached = False

    # -- forward pieces -------------------------------------------------

    def encode(self, mel: np.ndarray) -> Tensor:
        """Run both encoders and fuse: nearest-index align, concat channels."""
        mel = np.asarray(mel, dtype=mel.dtype if hasattr(mel, "dtype") else np.float32)
        if mel.ndim != 2 or mel.shape[1] != 80:
            raise ValueError(f"expected (T, 80) mel matrix, got {mel.shape}")
        if mel.shape[0] < 4:
            raise ValueError(f"need at least 4 mel frames, got {mel.shape[0]}")
        # clips longer than the encoder window are truncated, as at inference
        mel_t = Tensor(mel[: self.cfg.max_mel_frames])
        s = self.speech_encoder(mel_t)
        b = self.event_encoder(mel_t)
        t_e, t_b = s.shape[0], b.shape[0]
        if t_e == 1:
            idx = np.zeros(1, dtype=np.int64)
        else:
            idx = np.round(np.arange(t_e) * (t_b - 1) / (t_e - 1)).astype(np.int64)
        b_aligned = T.take(b, idx, axis=0)
        return T.concat([s, b_aligned], axis=1)

    def adapt(self, fused: Tensor, use_window_pos: bool | None = None) -> Tensor:
        return self.adapter(fused, use_window_pos=use_window_pos)

    def lm_forward(self, audio_tokens: Tensor | None, prompt_bytes: bytes | None,
                   response_bytes: bytes) -> Tensor:
        """Logits over [BOS] + audio tokens + prompt + response."""
        embeds = self.build_input_embeds(audio_tokens, prompt_bytes, response_bytes)
        return self.lm(embeds)

    def build_input_embeds(self, audio_tokens: Tensor | None,
                           prompt_bytes: bytes | None, response_bytes: bytes,
                           with_eos: bool = False) -> Tensor:
        parts = [self.lm.embed_ids([BOS])]
        n_audio = 0
        if audio_tokens is not None and audio_tokens.shape[0] > 0:
            parts.append(audio_tokens)
            n_audio = audio_tokens.shape[0]
        text_ids = list(prompt_bytes or b"") + list(response_bytes or b"")
        if with_eos:
            text_ids.append(EOS)
        if text_ids:
            parts.append(self.lm.embed_ids(text_ids))
        total = 1 + n_audio + len(text_ids)
        if total > self.cfg.context:
            raise ContextOverflowError(
                f"sequence length {total} (1 BOS + {n_audio} audio + "
                f"{len(text_ids)} text) exceeds context {self.cfg.context}")
        return T.concat(parts, axis=0) if len(parts) > 1 else parts[0]

    # -- LoRA -------------------------------------------------------------

    def attach_lora(self, r: int | None = None, alpha: float | None = None,
                    targets: tuple[str, ...] = ("q", "v")):
        if self.lora_attached:
            raise RuntimeError("LoRA already attached")
        bad = set(targets) - {"q", "v"}
        if bad:
            raise ValueError(f"unsupported LoRA targets: {sorted(bad)}")
        r = self.cfg.lora_r if r is None else r
        alpha = self.cfg.lora_alpha if alpha is None else alpha
        rng = make_rng(self.cfg.seed + 1)
        for attn in self.lm.attention_linears():
            if "q" in targets:
                attn.wq.attach_lora(self.params, rng, r, alpha)
            if "v" in targets:
                attn.wv.attach_lora(self.params, rng, r, alpha)
        self.lora_attached = True

    def merge_lora(self):
        if not self.lora_attached:
            raise RuntimeError("no LoRA attached")
        for attn in self.lm.attention_linears():
            attn.wq.merge_lora()
            attn.wv.merge_lora()

    # -- generation ---------------------------------------------------------

    def generate(self, mel: np.ndarray | None, prompt_bytes: bytes | None,
                 max_new: int = 256, temperature: float = 0.0,
                 rng: np.random.Generator | None = None) -> tuple[bytes, bool]:
        """Greedy (temperature 0) or sampled decoding until EOS.

        Returns (response_bytes, utf8_ok).
        """
        with no_grad():
            audio = None
            if mel is not None:
                audio = self.adapt(self.encode(mel))
            out = bytearray()
            for _ in range(max_new):
                embeds = self.build_input_embeds(audio, prompt_bytes, bytes(out))
                logits = self.lm(embeds).data[-1]
                logits = logits.copy()
                logits[PAD] = -np.inf
                logits[BOS] = -np.inf
                if temperature <= 0.0:
                    nxt = int(np.argmax(logits))
                else:
                    z = (logits - logits.max()) / temperature
                    p = np.exp(z) / np.exp(z).sum()
                    nxt = int((rng or make_rng(0)).choice(VOCAB, p=p))
                if nxt == EOS:
                    break
                out.append(nxt)
        raw = bytes(out)
        try:
            raw.decode("utf-8")
            return raw, True
        except UnicodeDecodeError:
            return raw, False

    # -- parameter management -------------------------------------------

    def set_trainable(self, prefixes: tuple[str, ...]):
        for name, p in self.params.items():
            p.requires_grad = any(name.startswith(pref) for pref in prefixes)

    def trainable(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.params.items()}


def audio_token_count(t_e: int, window: int, k: int) -> int:
    """Output token count law: ceil(T_e / W) * K."""
    if t_e < 1 or window < 1 or k < 1:
        raise ValueError("t_e, window, and k must all be >= 1")
    return -(-t_e // window) * k
