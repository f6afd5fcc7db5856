#!/usr/bin/env python3
"""LoRA adapters on the decoder's q/v projections.

Attaching is a no-op until training moves the low-rank factors (B starts at
zero), and merging folds the delta into the base weight without changing
what the model computes.
"""

import numpy as np

from audioforge.model import AudioLM, ModelConfig
from audioforge.tensor import no_grad

model = AudioLM(ModelConfig(seed=3))
mel = np.full((50, 80), -1.5, dtype=np.float32)
prompt = "Transcribe this audio".encode()


def logits():
    with no_grad():
        return model.lm_forward(model.adapt(model.encode(mel)),
                                prompt, b"ok").data.copy()


base_logits = logits()
before, _ = model.generate(mel, prompt, max_new=8)

model.attach_lora()  # defaults: r=8, alpha=32 -> scale alpha/r = 4.0
print("lora scale:", model.lm.blocks[0].attn.wq.lora.scale)
print("lora params added:",
      sum(1 for n in model.params if n.startswith("lora.")))

after, _ = model.generate(mel, prompt, max_new=8)
print("logits bitwise unchanged by attach:",
      np.array_equal(logits(), base_logits))
print("greedy output unchanged by attach:", before == after)

# pretend training happened: give the low-rank factors some mass
rng = np.random.default_rng(0)
for name, p in model.params.items():
    if name.startswith("lora.") and name.endswith(".B"):
        p.data = rng.normal(0.0, 0.05, size=p.data.shape).astype(np.float32)

unmerged, _ = model.generate(mel, prompt, max_new=8)
unmerged_logits = logits()
print("logit shift from the LoRA delta:",
      float(np.abs(unmerged_logits - base_logits).max()))

model.merge_lora()  # w <- w + scale * B @ A
merged, _ = model.generate(mel, prompt, max_new=8)
print("greedy output identical after merge:", unmerged == merged)
print("merged vs unmerged logit gap:",
      float(np.abs(logits() - unmerged_logits).max()), "(< 1e-5)")
