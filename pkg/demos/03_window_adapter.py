#!/usr/bin/env python3
"""The window-level Q-Former adapter and its token-count law.

The fused encoder sequence (T_e frames) is cut into windows of W frames;
K shared learned queries attend inside each window, so the LM always sees
N_a = ceil(T_e / W) * K audio tokens.
"""

import math

import numpy as np

from audioforge.model import AudioLM, ModelConfig, audio_token_count

cfg = ModelConfig()
model = AudioLM(cfg)
print("window W =", cfg.window_frames, " queries K =", cfg.num_queries)

# a 1-second clip: 98 mel frames -> two conv stride-2 stages -> 25 frames
mel = np.full((98, 80), -1.5, dtype=np.float32)
fused = model.encode(mel)
print("fused encoder frames:", fused.shape)

tokens = model.adapt(fused)
expected = audio_token_count(fused.shape[0], cfg.window_frames, cfg.num_queries)
print("audio tokens:", tokens.shape, " expected:", expected)

# the law holds over any duration / window / query setting
for t_e in (1, 7, 25, 60):
    for w in (1, 5, 25):
        for k in (1, 4):
            assert audio_token_count(t_e, w, k) == math.ceil(t_e / w) * k
print("N_a == ceil(T_e / W) * K verified on a small grid")

# longer audio -> proportionally more tokens, same adapter weights
long_mel = np.full((98 * 4, 80), -1.5, dtype=np.float32)
print("4-second clip gives", model.adapt(model.encode(long_mel)).shape[0],
      "audio tokens")
