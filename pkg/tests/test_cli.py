import json
import os
import subprocess
import sys

import pytest

from audioforge.cli import DEFAULT_CONFIG, ForgeUserError, dispatch, load_config
from audioforge.manifest import read_manifest


@pytest.fixture
def tiny_config_file(tmp_path, tiny_cfg):
    model = dict(tiny_cfg.to_dict(), context=256, max_mel_frames=512)
    cfg = {"model": model,
           "train": {"steps": 2, "batch_size": 2, "cache_features": True}}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_load_config_defaults_and_overrides(tmp_path):
    cfg = load_config(None)
    assert cfg["clients"]["tts"] == "mock"
    cfg = load_config(None, ["train.lr=0.01", "eval.wer_unit=char"])
    assert cfg["train"]["lr"] == 0.01 and cfg["eval"]["wer_unit"] == "char"


def test_load_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"trian": {}}')
    with pytest.raises(ForgeUserError, match="trian"):
        load_config(str(bad))
    with pytest.raises(ForgeUserError):
        load_config(None, ["train.momentum=0.9"])
    with pytest.raises(ForgeUserError):
        load_config(None, ["no_equals_sign"])


def test_client_mode_env_override(tmp_path, monkeypatch):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"clients": {"tts": "http://example.org/tts"}}))
    assert load_config(str(f))["clients"]["tts"] == "http://example.org/tts"
    monkeypatch.setenv("FORGE_CLIENT_MODE", "mock")
    assert load_config(str(f))["clients"]["tts"] == "mock"


def test_unknown_subcommand_exits_1(capsys):
    assert dispatch(["frobnicate"]) == 1


def test_missing_required_arg_exits_1():
    assert dispatch(["synth-corpus", "--n", "4"]) == 1  # no --out


def test_eval_requires_model_or_endpoint(tmp_path):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("")
    assert dispatch(["eval", "--task", "asr", "--manifest", str(manifest)]) == 1


def test_speechif_flag_validation(tmp_path):
    assert dispatch(["speechif", "--type", "1", "--out", str(tmp_path / "o")]) == 1
    assert dispatch(["speechif", "--type", "2", "--out", str(tmp_path / "o")]) == 1


def test_missing_manifest_is_user_error(tmp_path):
    rc = dispatch(["qa-gen", "--manifest", str(tmp_path / "nope.jsonl"),
                   "--out", str(tmp_path / "o.jsonl")])
    assert rc == 1


def test_synth_and_mix_and_qa_flow(tmp_path, capsys):
    corpus = str(tmp_path / "corpus")
    assert dispatch(["synth-corpus", "--seed", "4", "--n", "10",
                     "--out", corpus]) == 0
    manifest = os.path.join(corpus, "synth.jsonl")
    n = len(read_manifest(manifest))

    spec = {"seed": 1, "sources": [{"manifest_path": manifest, "take": n,
                                    "prompt_lang_ratio": {"en": 0.9, "th": 0.1}}]}
    spec_path = str(tmp_path / "spec.json")
    with open(spec_path, "w") as f:
        json.dump(spec, f)
    mixed = str(tmp_path / "mixed.jsonl")
    assert dispatch(["mix", "--spec", spec_path, "--out", mixed]) == 0
    assert len(read_manifest(mixed)) == n
    assert os.path.exists(mixed + ".report.json")

    out_qa = str(tmp_path / "qa.jsonl")
    assert dispatch(["qa-gen", "--manifest", mixed, "--out", out_qa]) == 0
    assert all(e.task == "qa" for e in read_manifest(out_qa))


def test_features_command(tmp_path):
    from audioforge.checkpoint import load_checkpoint
    from conftest import tone_wav_bytes

    wav = tmp_path / "t.wav"
    wav.write_bytes(tone_wav_bytes(500.0, 0.2))
    out = str(tmp_path / "feat.ckpt")
    assert dispatch(["features", str(wav), "--out", out]) == 0
    feats = load_checkpoint(out).tensors["features"]
    assert feats.shape[1] == 80


def test_train_generate_eval_flow(tmp_path, tiny_config_file):
    corpus = str(tmp_path / "corpus")
    assert dispatch(["synth-corpus", "--seed", "2", "--n", "6", "--out", corpus,
                     "--tasks", "asr"]) == 0
    manifest = os.path.join(corpus, "synth.jsonl")

    pre_dir = str(tmp_path / "pre")
    assert dispatch(["--config", tiny_config_file, "pretrain",
                     "--manifest", manifest, "--out", pre_dir]) == 0
    pre_ckpt = os.path.join(pre_dir, "pretrain_final.ckpt")
    assert os.path.exists(pre_ckpt)

    sft_dir = str(tmp_path / "sft")
    assert dispatch(["--config", tiny_config_file, "sft", "--manifest", manifest,
                     "--init", pre_ckpt, "--out", sft_dir]) == 0
    sft_ckpt = os.path.join(sft_dir, "sft_final.ckpt")

    wav = read_manifest(manifest)[0].audio_path
    assert dispatch(["--config", tiny_config_file, "generate",
                     "--model", sft_ckpt, "--wav", wav,
                     "--prompt", "Transcribe this audio", "--max-new", "8"]) == 0

    eval_dir = str(tmp_path / "eval")
    assert dispatch(["--config", tiny_config_file, "eval", "--task", "asr",
                     "--manifest", manifest, "--model", sft_ckpt,
                     "--out", eval_dir]) == 0
    report = json.load(open(os.path.join(eval_dir, "eval_asr_summary.json")))
    assert report["metric"] == "WER" and report["n"] + report["failures"] == 6


def test_console_script_installed():
    out = subprocess.run(["forge", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "pipeline" in out.stdout and "pretrain" in out.stdout


def test_internal_error_exits_2(tmp_path, monkeypatch):
    import audioforge.cli as cli

    def boom(args, cfg):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "features", boom)
    wav = tmp_path / "t.wav"
    wav.write_bytes(b"RIFF")
    assert dispatch(["features", str(wav), "--out", "x"]) == 2
