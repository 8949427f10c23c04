"""CLI behaviour: subcommands, exit codes, determinism, config precedence."""

import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from sumkit.cli import main

SMALL = ["--embed-dim", "16", "--window-len", "32", "--epochs", "1",
         "--batch-size", "4", "--lr", "0.001"]


@pytest.fixture()
def runner():
    return CliRunner()


def gen(runner, out_dir, seed=3, extra=()):
    args = ["gen-synthetic", "--out", str(out_dir), "--seed", str(seed),
            "--videos", "3", "--frames", "48", "--dim", "16",
            "--shot-len", "8", "--captions", "3", *extra]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return json.loads(result.output)


def train_small(runner, manifest, ckpt, seed="5"):
    result = runner.invoke(main, ["train", "--manifest", manifest, "--out", str(ckpt),
                                  "--seed", seed, *SMALL])
    assert result.exit_code == 0, result.output
    return json.loads(result.output)


def test_help_exits_zero(runner):
    assert runner.invoke(main, ["--help"]).exit_code == 0
    assert runner.invoke(main, ["train", "--help"]).exit_code == 0


def test_invalid_flag_exits_two(runner):
    assert runner.invoke(main, ["train", "--no-such-flag"]).exit_code == 2


def test_gen_synthetic_missing_out_exits_two(runner):
    assert runner.invoke(main, ["gen-synthetic", "--seed", "7"]).exit_code == 2


def test_evaluate_unwritable_report_path_exits_two(runner, tmp_path):
    body = gen(runner, tmp_path)
    ckpt = tmp_path / "m.ckpt"
    train_small(runner, body["manifest"], ckpt)
    result = runner.invoke(main, ["evaluate", "--checkpoint", str(ckpt),
                                  "--manifest", body["manifest"], "--split", "test",
                                  "--out", str(tmp_path / "no" / "such" / "dir" / "r.json")])
    assert result.exit_code == 2


def test_show_config_prints_builtin_defaults(runner):
    result = runner.invoke(main, ["--show-config"])
    assert result.exit_code == 0
    cfg = json.loads(result.output)
    assert cfg["lga_heads"] == 4
    assert cfg["tf_enc_layers"] == 6 and cfg["tf_dec_layers"] == 6
    assert cfg["window_len"] == 256 and cfg["m_fixed"] == 7
    assert cfg["lr"] == 1e-4 and cfg["weight_decay"] == 0.001
    assert cfg["epochs"] == 20 and cfg["batch_size"] == 100
    assert (cfg["alpha"], cfg["beta"], cfg["lambda"]) == (0.5, 0.3, 0.2)


def test_gen_synthetic_deterministic(runner, tmp_path):
    gen(runner, tmp_path / "a", seed=7)
    gen(runner, tmp_path / "b", seed=7)
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_synthetic_env_seed_fallback(runner, tmp_path, monkeypatch):
    args = ["--videos", "1", "--frames", "16", "--dim", "8",
            "--shot-len", "4", "--captions", "2"]
    monkeypatch.setenv("SUMKIT_SEED", "7")
    via_env = runner.invoke(main, ["gen-synthetic", "--out", str(tmp_path / "env"), *args])
    assert via_env.exit_code == 0, via_env.output
    monkeypatch.delenv("SUMKIT_SEED")
    via_flag = runner.invoke(main, ["gen-synthetic", "--out", str(tmp_path / "flag"),
                                    "--seed", "7", *args])
    assert via_flag.exit_code == 0, via_flag.output
    a = (tmp_path / "env" / "synth000.frames.sumfeat").read_bytes()
    b = (tmp_path / "flag" / "synth000.frames.sumfeat").read_bytes()
    assert a == b


def test_train_deterministic_checkpoints(runner, tmp_path):
    body = gen(runner, tmp_path)
    c1, c2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    train_small(runner, body["manifest"], c1)
    train_small(runner, body["manifest"], c2)
    assert hashlib.sha256(c1.read_bytes()).digest() == hashlib.sha256(c2.read_bytes()).digest()


def test_unsupervised_train_on_labeled_manifest_succeeds(runner, tmp_path):
    body = gen(runner, tmp_path)
    result = runner.invoke(main, ["train", "--manifest", body["manifest"],
                                  "--out", str(tmp_path / "u.ckpt"),
                                  "--mode", "unsupervised", "--seed", "5", *SMALL])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["history"][0]["l_c"] is None


def test_supervised_train_on_unlabeled_manifest_exits_two(runner, tmp_path):
    body = gen(runner, tmp_path)
    manifest_path = Path(body["manifest"])
    doc = json.loads(manifest_path.read_text())
    for entry in doc["entries"]:
        entry.pop("ground_truth", None)
    stripped = manifest_path.parent / "unlabeled.json"
    stripped.write_text(json.dumps(doc))
    result = runner.invoke(main, ["train", "--manifest", str(stripped),
                                  "--out", str(tmp_path / "x.ckpt"), "--seed", "5", *SMALL])
    assert result.exit_code == 2
    assert "ground truth" in result.output


def test_score_summarize_evaluate_pipeline(runner, tmp_path):
    body = gen(runner, tmp_path)
    ckpt = tmp_path / "m.ckpt"
    train_small(runner, body["manifest"], ckpt)
    data = tmp_path

    result = runner.invoke(main, ["score", "--checkpoint", str(ckpt),
                                  "--frames", str(data / "synth000.frames.sumfeat"),
                                  "--text", str(data / "synth000.captions.sumfeat")])
    assert result.exit_code == 0, result.output
    assert len(json.loads(result.output)["scores"]) == 48

    out = tmp_path / "summary.json"
    result = runner.invoke(main, ["summarize", "--checkpoint", str(ckpt),
                                  "--frames", str(data / "synth000.frames.sumfeat"),
                                  "--text", str(data / "synth000.captions.sumfeat"),
                                  "--ground-truth", str(data / "synth000.gt.json"),
                                  "--budget", "1.0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads(out.read_text())
    assert summary["total_selected_frames"] == 48  # full budget keeps everything

    csv_path = tmp_path / "report.csv"
    result = runner.invoke(main, ["evaluate", "--checkpoint", str(ckpt),
                                  "--manifest", body["manifest"], "--split", "test",
                                  "--csv", str(csv_path)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert "mean_f1" in report and report["videos"]
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "video_id,precision,recall,f1,tau,rho"
    assert len(lines) == 1 + len(report["videos"])


def test_summarize_routes_query_files_to_query_mode(runner, tmp_path):
    args = ["gen-synthetic", "--out", str(tmp_path), "--seed", "4", "--videos", "2",
            "--frames", "48", "--dim", "16", "--shot-len", "8", "--text-kind", "query",
            "--test-fraction", "0"]
    assert runner.invoke(main, args).exit_code == 0
    ckpt = tmp_path / "q.ckpt"
    train_small(runner, str(tmp_path / "manifest.json"), ckpt)
    result = runner.invoke(main, ["summarize", "--checkpoint", str(ckpt),
                                  "--frames", str(tmp_path / "synth000.frames.sumfeat"),
                                  "--text", str(tmp_path / "synth000.query.sumfeat")])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["n_frames"] == 48


def test_summarize_without_boundaries_uses_uniform_shots(runner, tmp_path):
    body = gen(runner, tmp_path)
    ckpt = tmp_path / "m.ckpt"
    train_small(runner, body["manifest"], ckpt)
    result = runner.invoke(main, ["summarize", "--checkpoint", str(ckpt),
                                  "--frames", str(tmp_path / "synth000.frames.sumfeat"),
                                  "--text", str(tmp_path / "synth000.captions.sumfeat")])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    # fps=2 -> uniform 10-frame shots; selected shots respect those boundaries
    for shot in body["selected_shots"]:
        assert shot["start"] % 10 == 0


def test_inspect_features_valid_and_invalid(runner, tmp_path):
    body = gen(runner, tmp_path)
    good = runner.invoke(main, ["inspect-features", str(tmp_path / "synth000.frames.sumfeat")])
    assert good.exit_code == 0
    assert json.loads(good.output)["rows"] == 48

    bad_path = tmp_path / "junk.sumfeat"
    bad_path.write_bytes(b"JUNKJUNK" + b"\x00" * 8)
    bad = runner.invoke(main, ["inspect-features", str(bad_path)])
    assert bad.exit_code == 1


def test_missing_manifest_exits_one(runner, tmp_path):
    result = runner.invoke(main, ["evaluate", "--checkpoint", str(tmp_path / "no.ckpt"),
                                  "--manifest", str(tmp_path / "no.json")])
    assert result.exit_code == 1


def test_config_file_precedence(runner, tmp_path):
    body = gen(runner, tmp_path)
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"embed_dim": 16, "window_len": 32, "epochs": 3,
                                    "batch_size": 4, "lr": 1e-3, "seed": 9,
                                    "tf_enc_layers": 1, "tf_dec_layers": 1,
                                    "tf_heads": 2, "lga_heads": 2, "m_fixed": 3}))
    # flag --epochs 1 beats the file's 3
    result = runner.invoke(main, ["train", "--manifest", body["manifest"],
                                  "--out", str(tmp_path / "c.ckpt"),
                                  "--config", str(cfg_file), "--epochs", "1"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["epochs"] == 1
