import numpy as np
import pytest

from audioforge.audio import SAMPLE_RATE, encode_wav_pcm16
from audioforge.model import ModelConfig


def make_tiny_cfg(**overrides) -> ModelConfig:
    """A model small enough for gradient checks and fast training tests."""
    kwargs = dict(d_s=8, n_layers_s=1, n_heads_s=2,
                  d_b=8, n_layers_b=1, n_heads_b=2,
                  d_llm=16, n_layers_lm=1, n_heads_lm=2,
                  d_q=8, n_layers_q=1, n_heads_q=2,
                  num_queries=1, window_frames=4,
                  context=96, max_mel_frames=64, seed=0)
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@pytest.fixture
def tiny_cfg():
    return make_tiny_cfg()


def tone(freq: float, seconds: float = 0.2, amp: float = 0.4) -> np.ndarray:
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return (amp * np.sin(2.0 * np.pi * freq * t)).astype(np.float32)


def tone_wav_bytes(freq: float, seconds: float = 0.2) -> bytes:
    return encode_wav_pcm16(tone(freq, seconds))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
