"""Desk-scale audio language model pipeline.

Library layout:
  tensor / optim / rng   - autodiff substrate and optimizer
  audio                  - WAV decoding and log-mel features
  layers / model         - dual encoders, window-level query adapter,
                           byte-level causal LM, LoRA
  training / checkpoint  - two-phase trainer and binary checkpoints
  manifest / datamix     - JSONL manifests, mixtures, generation pipelines
  clients                - external clients and deterministic mocks
  metrics / judge / evalrun - evaluation protocol
  cli                    - the `forge` entry point
"""

__version__ = "0.1.0"
