"""`forge` command line: reproducible pipelines over all modules.

Subcommands: synth-corpus, mix, speechif, qa-gen, augment-captions,
translate-pairs, features, pretrain, sft, generate, eval, pipeline.
Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import traceback

import numpy as np

from . import datamix, evalrun, training
from .audio import WavFormatError, decode_wav, log_mel
from .checkpoint import (CheckpointFormatError, load_checkpoint,
                         load_into_model, save_checkpoint)
from .clients import make_client
from .manifest import ManifestError, read_manifest, write_manifest
from .model import AudioLM, ModelConfig
from .rng import make_rng

DEFAULT_CONFIG = {
    "model": ModelConfig().to_dict(),
    "train": {
        "seed": 0,
        "steps": 100,
        "batch_size": 4,
        "lr": 1e-3,
        "grad_clip_norm": 1.0,
        "checkpoint_every": 100,
        "cache_features": False,
        "audio_root": ".",
    },
    "mix": {
        "seed": 0,
        "sources": [],
    },
    "eval": {
        "wer_unit": "auto",
        "max_new": 64,
    },
    "pipeline": {
        "train_examples": 16,
        "sft_examples": 28,
        "eval_examples": 6,
        "pretrain_steps": 60,
        "sft_steps": 60,
        "prompt_lang_ratio": {"en": 0.9, "th": 0.1},
    },
    "clients": {
        "textgen": "mock",
        "tts": "mock",
        "translate": "mock",
        "caption_augment": "mock",
        "qagen": "mock",
        "judge": "mock",
    },
}


class ForgeUserError(Exception):
    pass


USER_ERRORS = (ForgeUserError, ManifestError, datamix.MixError, WavFormatError,
               CheckpointFormatError, FileNotFoundError, training.PhaseError)


def log_event(**fields):
    print(json.dumps(fields, ensure_ascii=False), flush=True)


# -- config ------------------------------------------------------------------


def _merge(defaults: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ForgeUserError(f"unknown config key '{here}'")
        if isinstance(defaults[key], dict) and key not in ("sources", "prompt_lang_ratio"):
            if not isinstance(value, dict):
                raise ForgeUserError(f"config key '{here}' must be an object")
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    user = {}
    if path:
        with open(path, encoding="utf-8") as f:
            user = json.load(f)
    cfg = _merge(DEFAULT_CONFIG, user)
    for item in overrides or []:
        if "=" not in item:
            raise ForgeUserError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in node:
                raise ForgeUserError(f"unknown config key '{key}'")
            node = node[p]
        if parts[-1] not in node:
            raise ForgeUserError(f"unknown config key '{key}'")
        try:
            node[parts[-1]] = json.loads(value)
        except json.JSONDecodeError:
            node[parts[-1]] = value
    mode = os.environ.get("FORGE_CLIENT_MODE")
    if mode == "mock":
        cfg["clients"] = {k: "mock" for k in cfg["clients"]}
    elif mode == "live":
        pass  # endpoints as configured
    return cfg


def echo_config(cfg: dict, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True, ensure_ascii=False)


def _client(cfg: dict, kind: str, **kw):
    return make_client(kind, cfg["clients"][kind], **kw)


def _build_model(cfg: dict) -> AudioLM:
    return AudioLM(ModelConfig.from_dict(cfg["model"]))


def _load_model(cfg: dict, ckpt_path: str) -> AudioLM:
    model = _build_model(cfg)
    ckpt = load_checkpoint(ckpt_path)
    if any(n.startswith("lora.") for n in ckpt.tensors):
        model.attach_lora()
    load_into_model(model, ckpt)
    return model


# -- subcommands --------------------------------------------------------------


def cmd_synth_corpus(args, cfg):
    tasks = tuple(args.tasks.split(",")) if args.tasks else datamix.DEFAULT_SYNTH_TASKS
    path = datamix.synth_corpus(args.seed, args.n, args.out, tasks=tasks)
    log_event(event="synth_corpus", manifest=path, n=args.n, seed=args.seed)
    return 0


def cmd_mix(args, cfg):
    with open(args.spec, encoding="utf-8") as f:
        raw = json.load(f)
    spec = datamix.MixtureSpec(
        seed=raw["seed"],
        sources=[datamix.MixSource(**s) for s in raw["sources"]])
    report = datamix.mix(spec, args.out)
    report_path = args.out + ".report.json"
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    log_event(event="mix", out=args.out, **{"total": report["total"]})
    return 0


def cmd_speechif(args, cfg):
    if args.type == 1:
        entries = read_manifest(args.manifest)
        out, report = datamix.speechif_type1(entries, _client(cfg, "textgen"))
    else:
        with open(args.pairs, encoding="utf-8") as f:
            pairs = json.load(f)
        out, report = datamix.speechif_type2(pairs, _client(cfg, "tts"),
                                             args.audio_dir or "speechif_audio")
    write_manifest(args.out, out)
    log_event(event="speechif", type=args.type, **report)
    return 0


def cmd_qa_gen(args, cfg):
    entries = read_manifest(args.manifest)
    client = _client(cfg, "qagen")
    out = []
    totals = {"input": 0, "output": 0, "filtered": 0, "failed": 0}
    for e in entries:
        pairs, rep = datamix.generate_qa_pairs(e.response, args.mode, client)
        for k in totals:
            totals[k] += rep[k]
        for j, pair in enumerate(pairs):
            out.append(type(e)(id=f"{e.id}-qa{j}", audio_path=e.audio_path,
                               task="qa", lang=e.lang, prompt=pair["question"],
                               response=pair["answer"], source=f"{e.source}+qagen"))
    write_manifest(args.out, out)
    log_event(event="qa_gen", mode=args.mode, **totals)
    return 0


def cmd_augment_captions(args, cfg):
    entries = read_manifest(args.manifest)
    out, report = datamix.augment_captions(entries, _client(cfg, "caption_augment"))
    write_manifest(args.out, out)
    log_event(event="augment_captions", **report)
    return 0


def cmd_translate_pairs(args, cfg):
    entries = read_manifest(args.manifest)
    out, report = datamix.derive_translation_pairs(
        entries, args.direction, _client(cfg, "translate"), make_rng(args.seed))
    write_manifest(args.out, out)
    log_event(event="translate_pairs", direction=args.direction, **report)
    return 0


def cmd_features(args, cfg):
    with open(args.wav, "rb") as f:
        wav = decode_wav(f.read())
    mel = log_mel(wav).frames
    save_checkpoint(args.out, {"features": mel}, step=0, phase="pretrain")
    log_event(event="features", wav=args.wav, out=args.out,
              frames=int(mel.shape[0]), mels=int(mel.shape[1]))
    return 0


def _train_cfg(cfg: dict, phase: str, manifest: str, out_dir: str,
               steps: int | None = None) -> training.TrainConfig:
    t = cfg["train"]
    return training.TrainConfig(
        phase=phase, manifest_path=manifest, out_dir=out_dir, seed=t["seed"],
        steps=steps if steps is not None else t["steps"],
        batch_size=t["batch_size"], lr=t["lr"],
        grad_clip_norm=t["grad_clip_norm"], checkpoint_every=t["checkpoint_every"],
        cache_features=t["cache_features"], audio_root=t["audio_root"])


def cmd_pretrain(args, cfg):
    echo_config(cfg, args.out)
    model = _build_model(cfg)
    tc = _train_cfg(cfg, "pretrain", args.manifest, args.out, args.steps)
    path = training.run_phase(model, tc)
    log_event(event="pretrain_done", checkpoint=path, steps=tc.steps)
    return 0


def cmd_sft(args, cfg):
    echo_config(cfg, args.out)
    model = _build_model(cfg)
    warnings = training.init_sft_model(model, args.init)
    for w in warnings:
        log_event(event="warning", message=w)
    tc = _train_cfg(cfg, "sft", args.manifest, args.out, args.steps)
    path = training.run_phase(model, tc)
    log_event(event="sft_done", checkpoint=path, steps=tc.steps)
    return 0


def cmd_generate(args, cfg):
    model = _load_model(cfg, args.model)
    mel = None
    if args.wav:
        with open(args.wav, "rb") as f:
            mel = log_mel(decode_wav(f.read())).frames
    prompt = args.prompt.encode("utf-8") if args.prompt else None
    raw, utf8_ok = model.generate(mel, prompt, max_new=args.max_new,
                                  temperature=args.temperature,
                                  rng=make_rng(args.seed))
    text = raw.decode("utf-8", errors="replace")
    log_event(event="generate", response=text, utf8_ok=utf8_ok)
    return 0


def cmd_eval(args, cfg):
    entries = read_manifest(args.manifest, allow_eval_tasks=True)
    if args.endpoint:
        responder = evalrun.make_endpoint_responder(args.endpoint)
    else:
        model = _load_model(cfg, args.model)
        responder = evalrun.make_model_responder(
            model, cfg["train"]["audio_root"], max_new=cfg["eval"]["max_new"])
    judge = _client(cfg, "judge")
    report = evalrun.run_eval(args.task, responder, entries, judge_client=judge,
                              wer_unit=cfg["eval"]["wer_unit"], out_dir=args.out)
    log_event(event="eval", **{k: v for k, v in report.items() if k != "config"})
    return 0


def cmd_pipeline(args, cfg):
    """Full demo: synth corpora -> mix -> pretrain -> sft -> eval all tasks."""
    out = args.out
    echo_config(cfg, out)
    p = cfg["pipeline"]
    seed = args.seed

    # corpora
    pre_manifest = datamix.synth_corpus(seed, p["train_examples"],
                                        os.path.join(out, "corpus_pretrain"),
                                        tasks=("asr", "caption"),
                                        manifest_name="pretrain.jsonl")
    sft_manifest_raw = datamix.synth_corpus(seed + 1, p["sft_examples"],
                                            os.path.join(out, "corpus_sft"),
                                            manifest_name="sft_raw.jsonl")
    log_event(event="pipeline_corpus", pretrain=pre_manifest, sft=sft_manifest_raw)

    # mixture with language-ratio control
    mix_dir = os.path.join(out, "mix")
    os.makedirs(mix_dir, exist_ok=True)
    sft_manifest = os.path.join(mix_dir, "sft.jsonl")
    n_sft = len(read_manifest(sft_manifest_raw))
    spec = datamix.MixtureSpec(seed=seed, sources=[
        datamix.MixSource(manifest_path=sft_manifest_raw, take=n_sft,
                          prompt_lang_ratio=p["prompt_lang_ratio"])])
    report = datamix.mix(spec, sft_manifest)
    log_event(event="pipeline_mix", **{"total": report["total"]})

    # two-phase training
    model = _build_model(cfg)
    pre_cfg = _train_cfg(cfg, "pretrain", pre_manifest,
                         os.path.join(out, "pretrain"), p["pretrain_steps"])
    pre_cfg.cache_features = True
    pre_ckpt = training.run_phase(model, pre_cfg)
    log_event(event="pipeline_pretrain", checkpoint=pre_ckpt)

    sft_model = _build_model(cfg)
    training.init_sft_model(sft_model, pre_ckpt)
    sft_cfg = _train_cfg(cfg, "sft", sft_manifest, os.path.join(out, "sft"),
                         p["sft_steps"])
    sft_cfg.cache_features = True
    sft_ckpt = training.run_phase(sft_model, sft_cfg)
    log_event(event="pipeline_sft", checkpoint=sft_ckpt)

    # evaluation over all tasks
    eval_dir = os.path.join(out, "eval")
    n_eval = p["eval_examples"]
    responder = evalrun.make_model_responder(sft_model, max_new=cfg["eval"]["max_new"])
    judge = _client(cfg, "judge")
    summary = {"model": "audioforge-toy", "seed": seed, "tasks": {}}
    task_corpora = {
        "asr": ("asr",), "translation": ("translate_x2th", "translate_th2x"),
        "caption": ("caption",), "gender": ("gender",), "spokenqa": ("qa",),
        "speechif": ("speechif",),
    }
    for task, synth_tasks in task_corpora.items():
        manifest = datamix.synth_corpus(
            seed + 100 + evalrun.EVAL_TASKS.index(task), n_eval,
            os.path.join(out, f"corpus_eval_{task}"), tasks=synth_tasks,
            manifest_name=f"eval_{task}.jsonl")
        entries = read_manifest(manifest)
        rep = evalrun.run_eval(task, responder, entries, judge_client=judge,
                               wer_unit=cfg["eval"]["wer_unit"], out_dir=eval_dir,
                               seed=seed)
        summary["tasks"][task] = {k: rep[k] for k in
                                  ("metric", "value", "n", "failures")}
        log_event(event="pipeline_eval", task=task, value=rep["value"])

    # complexif composed from the asr eval corpus
    asr_entries = read_manifest(os.path.join(out, "corpus_eval_asr",
                                             "eval_asr.jsonl"))
    cpx_entries = evalrun.build_complexif_set(asr_entries, seed)
    write_manifest(os.path.join(out, "eval_complexif.jsonl"), cpx_entries)
    rep = evalrun.run_eval("complexif", responder, cpx_entries, judge_client=judge,
                           out_dir=eval_dir, seed=seed)
    summary["tasks"]["complexif"] = {
        "metric": rep["metric"], "value": rep["value"], "n": rep["n"],
        "failures": rep["failures"], "quality": rep.get("quality"),
        "format": rep.get("format")}
    log_event(event="pipeline_eval", task="complexif", value=rep["value"])

    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True, ensure_ascii=False)
    log_event(event="pipeline_done", summary=os.path.join(out, "summary.json"))
    return 0


# -- argument parsing -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    p = _Parser(prog="forge", description=__doc__)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE",
                   help="override a config key (flags win over the file)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-corpus", help="generate a synthetic corpus")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tasks", help="comma-separated task list")

    sp = sub.add_parser("mix", help="build a training mixture")
    sp.add_argument("--spec", required=True, help="mixture spec JSON")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("speechif", help="speech instruction-following data")
    sp.add_argument("--type", type=int, choices=(1, 2), required=True)
    sp.add_argument("--manifest", help="ASR manifest (type 1)")
    sp.add_argument("--pairs", help="instruction-response pairs JSON (type 2)")
    sp.add_argument("--audio-dir", help="output WAV directory (type 2)")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("qa-gen", help="generate QA pairs from transcripts")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--mode", choices=("extractive", "mcq"), default="extractive")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("augment-captions", help="detail short captions")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("translate-pairs", help="derive translation targets")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--direction", choices=("x2th", "th2x"), required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("features", help="log-mel features for one WAV")
    sp.add_argument("wav")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("pretrain", help="phase 1: adapter-only training")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("sft", help="phase 2: adapter + LoRA training")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--init", required=True, help="pre-training checkpoint")
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("generate", help="decode a response for one input")
    sp.add_argument("--model", required=True, help="checkpoint path")
    sp.add_argument("--wav")
    sp.add_argument("--prompt")
    sp.add_argument("--max-new", type=int, default=256)
    sp.add_argument("--temperature", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("eval", help="score a model on one task")
    sp.add_argument("--task", required=True, choices=evalrun.EVAL_TASKS)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--model", help="checkpoint path")
    sp.add_argument("--endpoint", help="remote generation endpoint")
    sp.add_argument("--out")

    sp = sub.add_parser("pipeline", help="end-to-end demo on synthetic data")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    return p


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "mix": cmd_mix,
    "speechif": cmd_speechif,
    "qa-gen": cmd_qa_gen,
    "augment-captions": cmd_augment_captions,
    "translate-pairs": cmd_translate_pairs,
    "features": cmd_features,
    "pretrain": cmd_pretrain,
    "sft": cmd_sft,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "speechif":
            if args.type == 1 and not args.manifest:
                raise ForgeUserError("--manifest is required for --type 1")
            if args.type == 2 and not args.pairs:
                raise ForgeUserError("--pairs is required for --type 2")
        if args.command == "eval" and not (args.model or args.endpoint):
            raise ForgeUserError("eval needs --model or --endpoint")
        return COMMANDS[args.command](args, cfg)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - internal error boundary
        traceback.print_exc()
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
