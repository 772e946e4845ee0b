"""Config-driven experiment CLI.

Every subcommand reads a JSON config plus file paths, seeds all randomness
from the config, and writes static artifacts (JSON/CSV) plus a manifest
sufficient to re-run bit-identically. Plot-shaped outputs (histograms, PSD
difference curves) are emitted as CSV so any plotter can consume them.

Config schema:
  {"dataset": {...}, "missingness": {...}, "grid": {...},
   "model": {...}, "train": {...}, "eval": {...}, "seed": int}
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import impute_lerp, impute_mean
from .data import (ConditionalSplit, NormalizationStats, TimeSeriesBatch,
                   batch_from_json, batch_to_json, denormalize_values,
                   normalize)
from .diffusion import (DenoiserConfig, DiffusionImputer,
                        SpectralEncoderConfig, TrainConfig, finetune_spectral,
                        point_impute, train_main)
from .lombscargle import (FrequencyGrid, default_grid, false_alarm_probability,
                          fft_psd_with_fill, grid_from_spec, leading_frequency,
                          periodogram, periodogram_arrays)
from .metrics import evaluate
from .missingness import MissingnessSpec, apply_missingness
from .sines import (SineChannelSpec, default_channel_specs, dominant_gt_freq,
                    generate_sines, gt_freqs_from_json, gt_freqs_to_json)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def _write_manifest(out_dir: Path, command: str, config: dict,
                    inputs: dict[str, Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_hash": _sha256(_canonical(config).encode()),
        "config": config,
        "seed": config.get("seed", 0),
        "input_hashes": {str(p): _sha256(Path(p).read_bytes())
                         for p in inputs.values()},
        "outputs": outputs,
    }
    (out_dir / f"manifest_{command}.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2))


def _load_config(args) -> dict:
    config = json.loads(Path(args.config).read_text())
    if args.seed_override is not None:
        config["seed"] = args.seed_override
    return config


def _grid_for(config: dict, batch: TimeSeriesBatch) -> FrequencyGrid:
    spec = config.get("grid", {})
    return grid_from_spec(spec, batch.timestamps) if spec else \
        default_grid(batch.timestamps)


def _specs_from_config(ds_cfg: dict) -> list[SineChannelSpec]:
    if "channels" in ds_cfg:
        return [SineChannelSpec(tuple(c["mean_freqs"]), tuple(c["widths"]),
                                tuple(c["amplitudes"]),
                                c.get("noise_sigma", 0.1))
                for c in ds_cfg["channels"]]
    specs = default_channel_specs(ds_cfg.get("noise_sigma", 0.1))
    if "n_channels" in ds_cfg:
        specs = specs[:ds_cfg["n_channels"]]
    return specs


def _model_from_config(config: dict, n_channels: int,
                       grid: FrequencyGrid) -> DiffusionImputer:
    m = config.get("model", {})
    enc = SpectralEncoderConfig(**m.get("encoder", {}))
    den = DenoiserConfig(**m.get("denoiser", {}))
    tr = TrainConfig(seed=config.get("seed", 0), **config.get("train", {}))
    return DiffusionImputer(n_channels, grid, enc_cfg=enc, den_cfg=den,
                            train_cfg=tr, j_eff=m.get("j_eff"),
                            init_seed=config.get("seed", 0))


def _split_from_file(path: Path) -> ConditionalSplit:
    d = json.loads(path.read_text())
    return ConditionalSplit(cond_mask=np.asarray(d["cond_mask"], dtype=float),
                            target_mask=np.asarray(d["target_mask"],
                                                   dtype=float))


def _write_split(path: Path, split: ConditionalSplit) -> None:
    path.write_text(json.dumps({
        "cond_mask": split.cond_mask.astype(int).tolist(),
        "target_mask": split.target_mask.astype(int).tolist(),
    }))


def _fmt(x: float) -> str:
    return repr(float(x))


# -- subcommands -----------------------------------------------------------

def cmd_gen_sines(args) -> int:
    config = _load_config(args)
    ds = config.get("dataset", {})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = _specs_from_config(ds)
    batch, gt = generate_sines(
        n_samples=ds.get("n_samples", 2000),
        n_steps=ds.get("n_steps", 100),
        horizon=ds.get("horizon", 10.0),
        specs=specs,
        seed=config.get("seed", 0),
        initial_missing=ds.get("initial_missing", 0.1),
        jitter=ds.get("jitter", 0.0),
    )
    meta = {"generator": "sines", "seed": config.get("seed", 0),
            "n_channels": len(specs),
            "noise_sigma": [s.noise_sigma for s in specs]}
    data_path = out_dir / "dataset.json"
    data_path.write_text(batch_to_json(batch, meta=meta))
    freq_path = out_dir / "dataset.freqs.json"
    freq_path.write_text(gt_freqs_to_json(gt))
    _write_manifest(out_dir, "gen-sines", config, {},
                    [data_path.name, freq_path.name])
    print(f"wrote {data_path} ({batch.shape[0]} samples)")
    return 0


def cmd_mask(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, meta = batch_from_json(Path(args.dataset).read_text())
    spec = MissingnessSpec.from_dict(
        {**config.get("missingness", {}), "seed": config.get("seed", 0)})
    orig_mask = batch.obs_mask
    masked, achieved, info = apply_missingness(batch, spec)
    target = orig_mask - masked.obs_mask
    meta = {**meta, "missingness": info}
    data_path = out_dir / "masked.json"
    data_path.write_text(batch_to_json(masked, meta=meta))
    split_path = out_dir / "eval_split.json"
    _write_split(split_path, ConditionalSplit(cond_mask=masked.obs_mask,
                                              target_mask=target))
    _write_manifest(out_dir, "mask", config, {"dataset": Path(args.dataset)},
                    [data_path.name, split_path.name])
    print(f"achieved rate among observed: {achieved:.4f}; "
          f"overall missing: {info['overall_missing_rate']:.4f}")
    return 0


def cmd_psd(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, _ = batch_from_json(Path(args.dataset).read_text())
    grid = _grid_for(config, batch)
    p = periodogram(batch, grid, center=True)
    j_eff = config.get("model", {}).get("j_eff") or grid.size
    fap = false_alarm_probability(p, j_eff)
    out_path = out_dir / "psd.csv"
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "channel", "omega", "power", "fap"])
        b, k, j = p.power.shape
        for i in range(b):
            for c in range(k):
                for q in range(j):
                    w.writerow([i, c, _fmt(grid.omegas[q]),
                                _fmt(p.power[i, c, q]),
                                _fmt(fap.fap[i, c, q])])
    _write_manifest(out_dir, "psd", config, {"dataset": Path(args.dataset)},
                    [out_path.name])
    print(f"wrote {out_path}")
    return 0


def cmd_compare_spectra(args) -> int:
    """Leading-frequency recovery: masked Lomb-Scargle vs FFT with gap fill.

    Emits per-method leading-frequency histograms and the per-frequency PSD
    difference curve (mean and std across samples).
    """
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, _ = batch_from_json(Path(args.dataset).read_text())
    gt = gt_freqs_from_json(Path(args.freqs).read_text())
    ds = config.get("dataset", {})
    specs = _specs_from_config(ds)
    f_true = dominant_gt_freq(specs, gt)
    grid = _grid_for(config, batch)

    ls_pow = periodogram(batch, grid, center=True).power
    f_ls = leading_frequency(ls_pow, grid.freqs)
    fft_pow, fft_freqs = fft_psd_with_fill(batch, fill="linear-interp")
    f_fft = leading_frequency(fft_pow, fft_freqs)

    hist_path = out_dir / "leading_freq.csv"
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "channel", "f_true", "f_ls", "f_fft"])
        b, k = f_true.shape
        for i in range(b):
            for c in range(k):
                w.writerow([i, c, _fmt(f_true[i, c]), _fmt(f_ls[i, c]),
                            _fmt(f_fft[i, c])])

    # PSD difference curve between the fully-observed truth and the masked
    # estimate, per method, normalized to unit total power
    full_mask = np.ones_like(batch.obs_mask)
    ref_pow = periodogram_arrays(batch.values, batch.timestamps, full_mask,
                                 grid, center=True).power

    def norm(p):
        tot = p.sum(axis=2, keepdims=True)
        return p / np.where(tot > 0, tot, 1.0)

    diff = norm(ref_pow) - norm(ls_pow)
    curve_path = out_dir / "psd_diff.csv"
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "mean_diff", "std_diff"])
        flat = diff.reshape(-1, grid.size)
        for q in range(grid.size):
            w.writerow([_fmt(grid.omegas[q]), _fmt(flat[:, q].mean()),
                        _fmt(flat[:, q].std())])

    err_ls = np.abs(f_ls - f_true)
    err_fft = np.abs(f_fft - f_true)
    summary = {
        "ls_mean_lfe": float(err_ls.mean()),
        "fft_mean_lfe": float(err_fft.mean()),
        "ls_strictly_better_fraction": float((err_ls < err_fft).mean()),
    }
    (out_dir / "compare_summary.json").write_text(json.dumps(summary,
                                                             sort_keys=True))
    _write_manifest(out_dir, "compare-spectra", config,
                    {"dataset": Path(args.dataset), "freqs": Path(args.freqs)},
                    [hist_path.name, curve_path.name, "compare_summary.json"])
    print(json.dumps(summary))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, _ = batch_from_json(Path(args.dataset).read_text())
    normed, stats = normalize(batch)
    grid = _grid_for(config, batch)
    model = _model_from_config(config, batch.shape[1], grid)
    trace = train_main(model, normed, trace_path=out_dir / "loss_trace.jsonl")
    model.save(out_dir / "ckpt")
    np.save(out_dir / "norm_stats.npy",
            np.stack([stats.mean, stats.std]))
    _write_manifest(out_dir, "train", config, {"dataset": Path(args.dataset)},
                    ["ckpt.json", "ckpt.bin", "loss_trace.jsonl",
                     "norm_stats.npy"])
    print(f"final val loss: {trace[-1]['val_loss']:.4f}")
    return 0


def cmd_finetune(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, _ = batch_from_json(Path(args.dataset).read_text())
    normed, stats = normalize(batch)
    model = DiffusionImputer.load(Path(args.checkpoint))
    ft_cfg = config.get("finetune", {})
    trace = finetune_spectral(
        model, normed,
        lam1=ft_cfg.get("lam1"), lam2=ft_cfg.get("lam2"),
        trace_path=out_dir / "finetune_trace.jsonl",
        max_steps=ft_cfg.get("max_steps"))
    model.save(out_dir / "ckpt_finetuned")
    np.save(out_dir / "norm_stats.npy", np.stack([stats.mean, stats.std]))
    _write_manifest(out_dir, "finetune", config,
                    {"dataset": Path(args.dataset),
                     "checkpoint": Path(args.checkpoint).with_suffix(".json")},
                    ["ckpt_finetuned.json", "ckpt_finetuned.bin",
                     "finetune_trace.jsonl"])
    print(f"s_cons: {trace[-1]['s_cons']:.4f}")
    return 0


def cmd_impute(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch, _ = batch_from_json(Path(args.dataset).read_text())
    split = _split_from_file(Path(args.split))
    method = args.method
    ev = config.get("eval", {})
    if method == "mean":
        pred = impute_mean(batch, split)
    elif method == "lerp":
        pred = impute_lerp(batch, split)
    elif method == "model":
        model = DiffusionImputer.load(Path(args.checkpoint))
        stats_arr = np.load(Path(args.checkpoint).parent / "norm_stats.npy")
        stats = NormalizationStats(mean=stats_arr[0], std=stats_arr[1])
        normed = batch.with_values(
            (batch.values - stats.mean[None, :, None])
            / stats.std[None, :, None] * batch.obs_mask)
        rng = np.random.default_rng(config.get("seed", 0))
        pred_n = point_impute(model, normed, split,
                              n_draws=ev.get("n_draws", 20), rng=rng,
                              zero_noise=bool(ev.get("zero_noise", False)))
        pred = denormalize_values(pred_n, stats)
        pred = np.where(split.cond_mask > 0, batch.values, pred)
    else:
        raise ValueError(f"unknown method {method!r}")
    pred_path = out_dir / f"pred_{method}.json"
    pred_path.write_text(json.dumps({"pred": pred.tolist(),
                                     "method": method}))
    _write_manifest(out_dir, "impute", config,
                    {"dataset": Path(args.dataset), "split": Path(args.split)},
                    [pred_path.name])
    print(f"wrote {pred_path}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # truth carries the pre-masking observation mask for spectral metrics
    truth, _ = batch_from_json(Path(args.truth).read_text())
    split = _split_from_file(Path(args.split))
    pred_doc = json.loads(Path(args.pred).read_text())
    pred = np.asarray(pred_doc["pred"], dtype=np.float64)
    grid = _grid_for(config, truth)
    report = evaluate(truth, pred, split, grid)
    method = pred_doc.get("method", "unknown")
    report_path = out_dir / f"eval_{method}.json"
    report_path.write_text(report.to_json())
    results_path = out_dir / "results.csv"
    ev = config.get("eval", {})
    new = not results_path.exists()
    with open(results_path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(["run_id", "dataset", "mechanism", "rate", "method",
                        "metric", "value"])
        mech = config.get("missingness", {}).get("mechanism", "none")
        rate = config.get("missingness", {}).get("rate", 0.0)
        run_id = ev.get("run_id", "run0")
        ds_name = config.get("dataset", {}).get("name", "dataset")
        for metric, value in (("MAE", report.mae), ("RMSE", report.rmse),
                              ("S-MAE", report.s_mae), ("LFE", report.lfe)):
            w.writerow([run_id, ds_name, mech, _fmt(rate), method, metric,
                        _fmt(value)])
    _write_manifest(out_dir, f"eval-{method}", config,
                    {"truth": Path(args.truth), "pred": Path(args.pred),
                     "split": Path(args.split)},
                    [report_path.name, results_path.name])
    print(report.to_json())
    return 0


def cmd_report(args) -> int:
    """Pivot the results CSV into a mechanism x rate x metric table."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = list(csv.DictReader(open(args.results)))
    methods = sorted({r["method"] for r in rows})
    keys = sorted({(r["mechanism"], r["rate"], r["metric"]) for r in rows})
    table_path = out_dir / "report.csv"
    with open(table_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mechanism", "rate", "metric"] + methods)
        for mech, rate, metric in keys:
            vals = []
            for m in methods:
                found = [r["value"] for r in rows
                         if (r["mechanism"], r["rate"], r["metric"],
                             r["method"]) == (mech, rate, metric, m)]
                vals.append(found[-1] if found else "")
            w.writerow([mech, rate, metric] + vals)
    print(f"wrote {table_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectradiff",
        description="Spectrum-conditioned diffusion imputation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--threads", type=int, default=None,
                       help="accepted for config compatibility; modules "
                            "delegate parallelism internally")

    p = sub.add_parser("gen-sines", help="generate the synthetic sine dataset")
    common(p)
    p.set_defaults(fn=cmd_gen_sines)

    p = sub.add_parser("mask", help="apply a missingness mechanism")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("psd", help="write the masked periodogram as CSV")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_psd)

    p = sub.add_parser("compare-spectra",
                       help="leading-frequency recovery: LS vs FFT+interp")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--freqs", required=True)
    p.set_defaults(fn=cmd_compare_spectra)

    p = sub.add_parser("train", help="train the diffusion imputer")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="spectral-consistency fine-tuning")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("impute", help="run an imputer over an eval split")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--method", required=True,
                   choices=["mean", "lerp", "model"])
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(fn=cmd_impute)

    p = sub.add_parser("eval", help="score predictions against the truth")
    common(p)
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--split", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="pivot results.csv into a table")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, KeyError,
            FloatingPointError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
