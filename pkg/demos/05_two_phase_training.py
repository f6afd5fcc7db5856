#!/usr/bin/env python3
"""Two-phase training: adapter-only pretraining, then adapter + LoRA SFT.

Both encoders and the LM base stay frozen throughout; only the bridge
(and, in phase two, the LoRA factors) ever receives gradient updates.
"""

import os
import tempfile

from audioforge import training
from audioforge.clients import MockTtsClient
from audioforge.manifest import ManifestEntry, write_manifest
from audioforge.model import AudioLM, ModelConfig

work = tempfile.mkdtemp(prefix="forge_demo_")
tts = MockTtsClient()
entries = []
for i, text in enumerate(["red bird", "blue cat", "old song", "tall tree"]):
    path = os.path.join(work, f"{i}.wav")
    with open(path, "wb") as f:
        f.write(tts.synthesize(text))
    entries.append(ManifestEntry(id=f"d{i}", audio_path=path, task="asr",
                                 lang="en", prompt="Transcribe this audio",
                                 response=text, source="demo"))
manifest = os.path.join(work, "demo.jsonl")
write_manifest(manifest, entries)

model = AudioLM(ModelConfig(d_llm=32, n_layers_lm=1))
snapshot = {k: v.data.tobytes() for k, v in model.params.items()}


def run(phase, steps, lr):
    cfg = training.TrainConfig(phase=phase, manifest_path=manifest,
                               out_dir=os.path.join(work, phase), steps=steps,
                               batch_size=4, seed=0, lr=lr,
                               cache_features=True)
    trainer = training.Trainer(model, cfg, entries)
    first = last = None
    for _ in range(steps):
        last = trainer.train_step()
        first = first or last
    print(f"{phase}: loss {first['loss']:.3f} -> {last['loss']:.3f} "
          f"over {steps} steps")


print("phase 1 trains:", sorted({n.split(".")[0] for n in
                                 training.trainable_params(model, "pretrain")}))
run("pretrain", 30, 1e-2)

moved = {k.split(".")[0] for k, v in model.params.items()
         if snapshot[k] != v.data.tobytes()}
print("param groups that moved:", sorted(moved), "(everything else bitwise frozen)")

model.attach_lora()
print("phase 2 trains:", sorted({n.split(".")[0] for n in
                                 training.trainable_params(model, "sft")}))
run("sft", 30, 1e-2)
