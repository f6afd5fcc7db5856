"""Transformer building blocks over the autodiff tensors.

All layers register their weights into a shared name->Tensor dict so the
trainer can freeze/unfreeze by name prefix and the checkpointer can
persist everything by name.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

NEG_INF = -1e9


class LoraState:
    """Low-rank delta for one wrapped weight: W_eff = W + (alpha/r) * B @ A."""

    def __init__(self, A: Tensor, B: Tensor, r: int, alpha: float):
        self.A = A
        self.B = B
        self.r = r
        self.alpha = alpha
        self.merged = False

    @property
    def scale(self) -> float:
        return self.alpha / self.r


class Linear:
    """y = x @ W.T + b, with an optional attachable LoRA delta."""

    def __init__(self, params: dict, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator, bias: bool = True,
                 init_std: float | None = None):
        self.name = name
        std = init_std if init_std is not None else d_in ** -0.5
        self.w = Tensor(rng.normal(0.0, std, size=(d_out, d_in)).astype(np.float32),
                        requires_grad=True)
        params[f"{name}.w"] = self.w
        self.b = None
        if bias:
            self.b = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True)
            params[f"{name}.b"] = self.b
        self.lora: LoraState | None = None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, T.transpose(self.w))
        if self.lora is not None and not self.lora.merged:
            delta = T.matmul(T.matmul(x, T.transpose(self.lora.A)),
                             T.transpose(self.lora.B))
            y = y + delta * self.lora.scale
        if self.b is not None:
            y = y + self.b
        return y

    def attach_lora(self, params: dict, rng: np.random.Generator, r: int, alpha: float):
        if self.lora is not None:
            raise RuntimeError(f"LoRA already attached to {self.name}")
        d_out, d_in = self.w.shape
        A = Tensor(rng.normal(0.0, 0.01, size=(r, d_in)).astype(np.float32),
                   requires_grad=True)
        B = Tensor(np.zeros((d_out, r), dtype=np.float32), requires_grad=True)
        params[f"lora.{self.name}.A"] = A
        params[f"lora.{self.name}.B"] = B
        self.lora = LoraState(A, B, r, alpha)

    def merge_lora(self):
        if self.lora is None or self.lora.merged:
            return
        self.w.data = self.w.data + self.lora.scale * (self.lora.B.data @ self.lora.A.data)
        self.lora.merged = True


class LayerNorm:
    def __init__(self, params: dict, name: str, d: int):
        self.g = Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
        self.b = Tensor(np.zeros(d, dtype=np.float32), requires_grad=True)
        params[f"{name}.g"] = self.g
        params[f"{name}.b"] = self.b

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.g, self.b)


def _attend(q: Tensor, k: Tensor, v: Tensor, n_heads: int, d_head: int,
            mask: np.ndarray | None) -> list[Tensor]:
    """Scaled dot-product attention per head on 2-D (seq, dim) tensors."""
    outs = []
    scale = 1.0 / np.sqrt(d_head)
    for h in range(n_heads):
        sl = slice(h * d_head, (h + 1) * d_head)
        qh = q[:, sl]
        kh = k[:, sl]
        vh = v[:, sl]
        scores = T.matmul(qh, T.transpose(kh)) * scale
        if mask is not None:
            scores = scores + Tensor(mask)
        attn = T.softmax(scores, axis=-1)
        outs.append(T.matmul(attn, vh))
    return outs


class MultiHeadAttention:
    """Self- or cross-attention; query width d, key/value source width d_kv."""

    def __init__(self, params: dict, name: str, d: int, n_heads: int,
                 rng: np.random.Generator, d_kv: int | None = None):
        if d % n_heads:
            raise ValueError(f"width {d} not divisible by {n_heads} heads")
        d_kv = d if d_kv is None else d_kv
        self.n_heads = n_heads
        self.d_head = d // n_heads
        self.wq = Linear(params, f"{name}.wq", d, d, rng)
        self.wk = Linear(params, f"{name}.wk", d_kv, d, rng)
        self.wv = Linear(params, f"{name}.wv", d_kv, d, rng)
        self.wo = Linear(params, f"{name}.wo", d, d, rng)

    def __call__(self, x: Tensor, context: Tensor | None = None,
                 mask: np.ndarray | None = None) -> Tensor:
        src = x if context is None else context
        q = self.wq(x)
        k = self.wk(src)
        v = self.wv(src)
        heads = _attend(q, k, v, self.n_heads, self.d_head, mask)
        return self.wo(T.concat(heads, axis=1))


class FeedForward:
    def __init__(self, params: dict, name: str, d: int, rng: np.random.Generator,
                 expansion: int = 4):
        self.fc1 = Linear(params, f"{name}.fc1", d, d * expansion, rng)
        self.fc2 = Linear(params, f"{name}.fc2", d * expansion, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class TransformerBlock:
    """Pre-LN block: x + attn(LN(x)); x + ff(LN(x))."""

    def __init__(self, params: dict, name: str, d: int, n_heads: int,
                 rng: np.random.Generator):
        self.ln1 = LayerNorm(params, f"{name}.ln1", d)
        self.attn = MultiHeadAttention(params, f"{name}.attn", d, n_heads, rng)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d)
        self.ff = FeedForward(params, f"{name}.ff", d, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.ln1(x), mask=mask)
        x = x + self.ff(self.ln2(x))
        return x


class Conv1dStride2:
    """Kernel-3 stride-2 pad-1 1-D conv over (T, C_in); output ceil(T/2) rows."""

    KERNEL = 3

    def __init__(self, params: dict, name: str, c_in: int, c_out: int,
                 rng: np.random.Generator):
        self.c_in = c_in
        self.proj = Linear(params, name, self.KERNEL * c_in, c_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        t_in = x.shape[0]
        t_out = (t_in + 1) // 2
        zero = Tensor(np.zeros((1, self.c_in), dtype=x.data.dtype))
        padded = T.concat([zero, x, zero], axis=0)  # index i+1 == input row i
        centers = 2 * np.arange(t_out)
        idx = (centers[:, None] + np.arange(self.KERNEL)[None, :]).reshape(-1)
        gathered = T.take(padded, idx, axis=0)
        stacked = T.reshape(gathered, (t_out, self.KERNEL * self.c_in))
        return self.proj(stacked)


def causal_mask(n: int) -> np.ndarray:
    m = np.zeros((n, n), dtype=np.float32)
    m[np.triu_indices(n, k=1)] = NEG_INF
    return m
