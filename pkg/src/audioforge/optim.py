"""AdamW optimizer over named parameters."""

from __future__ import annotations

import numpy as np

from .tensor import GradError, Tensor


class AdamW:
    """Decoupled weight-decay Adam. Updates only the tensors it was given."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise GradError(f"parameter '{name}' has no gradient; run backward first")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    # -- checkpoint support --------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"opt.{name}.m"] = self.m[name]
            out[f"opt.{name}.v"] = self.v[name]
        out["opt.t"] = np.asarray([self.t], dtype=np.uint64)
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        for name in self.params:
            km, kv = f"opt.{name}.m", f"opt.{name}.v"
            if km in tensors:
                self.m[name] = tensors[km].astype(np.float32).reshape(self.m[name].shape)
            if kv in tensors:
                self.v[name] = tensors[kv].astype(np.float32).reshape(self.v[name].shape)
        if "opt.t" in tensors:
            self.t = int(tensors["opt.t"][0])
