#!/usr/bin/env python3
"""Log-mel spectrogram features from a WAV file.

Synthesize a pure tone, encode it as 16-bit PCM, decode it back, and show
where its energy lands on the 80-band mel filterbank.
"""

import numpy as np

from audioforge.audio import (SAMPLE_RATE, decode_wav, encode_wav_pcm16,
                              log_mel, mel_filterbank)

# one second of 1 kHz sine at 16 kHz
t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
tone = (0.4 * np.sin(2 * np.pi * 1000.0 * t)).astype(np.float32)
wav_bytes = encode_wav_pcm16(tone)
print("wav size:", len(wav_bytes), "bytes")

wav = decode_wav(wav_bytes)
mel = log_mel(wav)
# frames = 1 + (samples - 400) // 160 with no centering
print("mel frames x bands:", mel.frames.shape)

# the hottest band should sit near 1 kHz
band = int(mel.frames.mean(axis=0).argmax())
print("peak mel band:", band, "of 80")

fb = mel_filterbank()
print("filterbank shape (bands x fft bins):", fb.shape)

# digital silence maps to a constant floor after the log + normalization
silence = decode_wav(encode_wav_pcm16(np.zeros(SAMPLE_RATE, dtype=np.float32)))
print("silence frame value:", log_mel(silence).frames[0, 0], "(uniform -1.5)")
