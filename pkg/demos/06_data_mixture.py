#!/usr/bin/env python3
"""Building a training mixture: synthesis, 90/10 prompt languages, SpeechIF.

The mixer assigns prompt languages by largest-remainder apportionment, so a
{en: 0.9, th: 0.1} ratio over 200 entries is exactly 180/20 — never 179/21.
"""

import os
import tempfile

from audioforge import datamix
from audioforge.clients import REFUSAL_TEXT, MockTextGenClient, MockTtsClient
from audioforge.manifest import read_manifest

work = tempfile.mkdtemp(prefix="forge_mix_")

# synthesize a small corpus with mock TTS (deterministic per seed)
manifest = datamix.synth_corpus(seed=5, n=200, out_dir=os.path.join(work, "syn"),
                                tasks=("asr", "caption"))
print("synthesized:", len(read_manifest(manifest)), "entries")

spec = datamix.MixtureSpec(seed=5, sources=[
    datamix.MixSource(manifest_path=manifest, take=200,
                      prompt_lang_ratio={"en": 0.9, "th": 0.1})])
out = os.path.join(work, "mixed.jsonl")
report = datamix.mix(spec, out)
print("prompt languages:", report["per_prompt_lang"])

# SpeechIF Type 1: the spoken text IS the instruction (prompt stays null);
# planted refusals from the text generator are filtered out
entries = read_manifest(manifest)[:40]
sif1, rep1 = datamix.speechif_type1(entries, MockTextGenClient(refusal_rate=0.3))
print("type 1:", rep1)
print("refusals surviving:",
      sum(REFUSAL_TEXT in e.response for e in sif1), "(must be 0)")

# SpeechIF Type 2: text instruction/response pairs are spoken with TTS,
# after dropping anything audio cannot carry (code, equations)
pairs = [{"instruction": "Name three animals.", "response": "Cat, dog, bird."},
         {"instruction": "```python\nprint(1)```", "response": "1"},
         {"instruction": "Solve 3x^2 + 4x = 7 for x.", "response": "x = 1"}]
sif2, rep2 = datamix.speechif_type2(pairs, MockTtsClient(),
                                    os.path.join(work, "sif2"))
print("type 2:", rep2)
print("all speechif prompts null:",
      all(e.prompt is None for e in sif1 + sif2))
