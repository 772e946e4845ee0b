import csv
import json
from pathlib import Path

import numpy as np
import pytest

from spectradiff.cli import main


CFG = {
    "seed": 5,
    "dataset": {"n_samples": 6, "n_steps": 40, "horizon": 10.0,
                "n_channels": 2, "name": "sines-tiny"},
    "missingness": {"mechanism": "mcar", "rate": 0.3},
    "grid": {},
    "model": {"encoder": {"d_model": 8, "n_heads": 2, "depth": 1},
              "denoiser": {"width": 8, "n_heads": 2, "n_layers": 1,
                           "step_emb_dim": 16, "time_emb_dim": 16}},
    "train": {"epochs": 1, "batch_size": 4, "n_steps": 4},
    "eval": {"n_draws": 2, "run_id": "t"},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return p


def run(*args):
    return main([str(a) for a in args])


def test_gen_and_mask_pipeline(cfg_path, tmp_path):
    out = tmp_path / "out"
    assert run("gen-sines", "--config", cfg_path, "--out-dir", out) == 0
    data = json.loads((out / "dataset.json").read_text())
    assert np.asarray(data["values"]).shape == (6, 2, 40)
    assert (out / "dataset.freqs.json").exists()
    manifest = json.loads((out / "manifest_gen-sines.json").read_text())
    assert manifest["seed"] == 5 and "config_hash" in manifest

    assert run("mask", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "dataset.json") == 0
    split = json.loads((out / "eval_split.json").read_text())
    cond = np.asarray(split["cond_mask"])
    targ = np.asarray(split["target_mask"])
    assert np.all(cond * targ == 0)
    orig = np.asarray(data["obs_mask"])
    assert np.array_equal(cond + targ, orig)


def test_psd_and_compare(cfg_path, tmp_path):
    out = tmp_path / "out"
    run("gen-sines", "--config", cfg_path, "--out-dir", out)
    assert run("psd", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "dataset.json") == 0
    rows = list(csv.DictReader(open(out / "psd.csv")))
    assert set(rows[0]) == {"sample", "channel", "omega", "power", "fap"}
    assert len(rows) == 6 * 2 * 20  # J = L // 2

    assert run("compare-spectra", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "dataset.json",
               "--freqs", out / "dataset.freqs.json") == 0
    assert (out / "leading_freq.csv").exists()
    curve = list(csv.DictReader(open(out / "psd_diff.csv")))
    assert set(curve[0]) == {"omega", "mean_diff", "std_diff"}


def test_baseline_impute_eval_report(cfg_path, tmp_path):
    out = tmp_path / "out"
    run("gen-sines", "--config", cfg_path, "--out-dir", out)
    run("mask", "--config", cfg_path, "--out-dir", out,
        "--dataset", out / "dataset.json")
    for method in ("mean", "lerp"):
        assert run("impute", "--config", cfg_path, "--out-dir", out,
                   "--dataset", out / "masked.json",
                   "--split", out / "eval_split.json",
                   "--method", method) == 0
        assert run("eval", "--config", cfg_path, "--out-dir", out,
                   "--truth", out / "dataset.json",
                   "--pred", out / f"pred_{method}.json",
                   "--split", out / "eval_split.json") == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    methods = {r["method"] for r in rows}
    metrics = {r["metric"] for r in rows}
    assert methods == {"mean", "lerp"}
    assert metrics == {"MAE", "RMSE", "S-MAE", "LFE"}
    assert run("report", "--results", out / "results.csv",
               "--out-dir", out) == 0
    table = list(csv.DictReader(open(out / "report.csv")))
    assert {"mean", "lerp"} <= set(table[0])


def test_eval_perfect_prediction_zero_row(cfg_path, tmp_path):
    out = tmp_path / "out"
    run("gen-sines", "--config", cfg_path, "--out-dir", out)
    run("mask", "--config", cfg_path, "--out-dir", out,
        "--dataset", out / "dataset.json")
    truth = json.loads((out / "dataset.json").read_text())
    pred_path = out / "pred_perfect.json"
    pred_path.write_text(json.dumps({"pred": truth["values"],
                                     "method": "perfect"}))
    assert run("eval", "--config", cfg_path, "--out-dir", out,
               "--truth", out / "dataset.json", "--pred", pred_path,
               "--split", out / "eval_split.json") == 0
    rep = json.loads((out / "eval_perfect.json").read_text())
    assert rep["mae"] == 0.0 and rep["s_mae"] == 0.0 and rep["lfe"] == 0.0


def test_train_finetune_model_impute(cfg_path, tmp_path):
    out = tmp_path / "out"
    run("gen-sines", "--config", cfg_path, "--out-dir", out)
    run("mask", "--config", cfg_path, "--out-dir", out,
        "--dataset", out / "dataset.json")
    assert run("train", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "masked.json") == 0
    assert (out / "ckpt.json").exists() and (out / "ckpt.bin").exists()
    assert (out / "loss_trace.jsonl").exists()
    assert run("finetune", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "masked.json",
               "--checkpoint", out / "ckpt") == 0
    assert run("impute", "--config", cfg_path, "--out-dir", out,
               "--dataset", out / "masked.json",
               "--split", out / "eval_split.json",
               "--method", "model", "--checkpoint", out / "ckpt") == 0
    pred = json.loads((out / "pred_model.json").read_text())
    assert np.all(np.isfinite(np.asarray(pred["pred"])))


def test_missing_file_gives_structured_error(cfg_path, tmp_path, capsys):
    rc = run("psd", "--config", cfg_path, "--out-dir", tmp_path,
             "--dataset", tmp_path / "nope.json")
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "FileNotFoundError"


def test_seed_override_changes_data(cfg_path, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run("gen-sines", "--config", cfg_path, "--out-dir", a)
    run("gen-sines", "--config", cfg_path, "--out-dir", b)
    run("gen-sines", "--config", cfg_path, "--out-dir", c,
        "--seed-override", "99")
    assert (a / "dataset.json").read_bytes() == (b / "dataset.json").read_bytes()
    assert (a / "dataset.json").read_bytes() != (c / "dataset.json").read_bytes()


def test_pipeline_determinism_byte_identical(cfg_path, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        run("gen-sines", "--config", cfg_path, "--out-dir", out)
        run("mask", "--config", cfg_path, "--out-dir", out,
            "--dataset", out / "dataset.json")
        run("psd", "--config", cfg_path, "--out-dir", out,
            "--dataset", out / "masked.json")
        run("impute", "--config", cfg_path, "--out-dir", out,
            "--dataset", out / "masked.json",
            "--split", out / "eval_split.json", "--method", "lerp")
        run("eval", "--config", cfg_path, "--out-dir", out,
            "--truth", out / "dataset.json",
            "--pred", out / "pred_lerp.json",
            "--split", out / "eval_split.json")
        outs.append(out)
    for fname in ("dataset.json", "masked.json", "psd.csv", "results.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
