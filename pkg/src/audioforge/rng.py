"""Seeded RNG helpers with a serializable state for checkpoints."""

from __future__ import annotations

import json

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rng_state_blob(rng: np.random.Generator) -> bytes:
    state = rng.bit_generator.state
    return json.dumps(state, sort_keys=True).encode("utf-8")


def restore_rng(blob: bytes) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = json.loads(blob.decode("utf-8"))
    return rng
