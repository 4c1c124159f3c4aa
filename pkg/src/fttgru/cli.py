"""Command-line pipeline.

Subcommands mirror the experimental stages: ``prepare`` validates data and
writes the window cache, ``train`` fits per-seed models, ``evaluate`` scores
checkpoints on the test protocol, ``ablate`` compares the three variants,
``bench`` measures CPU latency, and ``report`` merges everything into
plot-ready CSVs. All artifacts are CSV with a schema-version comment line;
given identical configuration they are byte-identical except for timing
columns.
"""

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np

from fttgru import data as data_mod
from fttgru import evaluation, training
from fttgru.data import DataFormatError
from fttgru.model import (
    DISPLAY_NAMES,
    VARIANTS,
    ConfigError,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)
from fttgru.training import TrainConfig, TrainingError

DATA_DIR_ENV = "FTTGRU_DATA_DIR"
CSV_SCHEMA = "# fttgru-csv v1"


class AppError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


@dataclass
class AppConfig:
    data_dir: str = None
    out_dir: str = "runs"
    variant: str = "hybrid"
    seeds: tuple = (0, 1, 2)
    rul_cap: int = None
    synthetic: bool = False
    fnet_mode: bool = False
    synth_engines: int = 50
    synth_seed: int = 1234
    seq_len: int = 30
    n_features: int = 24
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    gru_units: int = 64
    ffn_width: int = 128
    overlap: float = 0.5
    epochs: int = 10
    batch_size: int = 32
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    min_delta: float = 1e-4
    val_fraction: float = 0.1
    bench_warmup: int = 100
    bench_iters: int = 1000

    def model_config(self, variant=None):
        return ModelConfig(
            variant=variant or self.variant,
            seq_len=self.seq_len,
            n_features=self.n_features,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            gru_units=self.gru_units,
            ffn_width=self.ffn_width,
            fnet_mode=self.fnet_mode,
        ).validate()

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_max=self.lr_max,
            lr_min=self.lr_min,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            patience=self.patience,
            min_delta=self.min_delta,
            seeds=tuple(self.seeds),
            rul_cap=self.rul_cap,
            val_fraction=self.val_fraction,
        ).validate()


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _coerce(key, kind, raw):
    raw = raw.strip()
    if kind in ("optstr", "optint") and raw.lower() in ("", "none"):
        return None
    try:
        if kind == "str" or kind == "optstr":
            return raw
        if kind == "int" or kind == "optint":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _BOOL_WORDS[raw.lower()]
        if kind == "seeds":
            return tuple(int(v) for v in raw.replace(",", " ").split())
    except (ValueError, KeyError):
        pass
    raise AppError(f"config key {key!r}: cannot parse {raw!r} as {kind}")


_FIELD_KINDS = {
    "data_dir": "optstr", "out_dir": "str", "variant": "str", "seeds": "seeds",
    "rul_cap": "optint", "synthetic": "bool", "fnet_mode": "bool",
    "synth_engines": "int", "synth_seed": "int", "seq_len": "int",
    "n_features": "int", "d_model": "int", "n_layers": "int", "n_heads": "int",
    "gru_units": "int", "ffn_width": "int", "overlap": "float", "epochs": "int",
    "batch_size": "int", "lr_max": "float", "lr_min": "float",
    "adam_beta1": "float", "adam_beta2": "float", "adam_eps": "float",
    "patience": "int", "min_delta": "float", "val_fraction": "float",
    "bench_warmup": "int", "bench_iters": "int",
}


def load_config_file(path):
    """Flat ``key = value`` file; unknown keys are rejected by name."""
    values = {}
    p = Path(path)
    if not p.exists():
        raise AppError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise AppError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in s.split("=", 1))
        if key not in _FIELD_KINDS:
            raise AppError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, _FIELD_KINDS[key], raw)
    return values


def resolve_config(args):
    """defaults < config file < command-line flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in dc_fields(AppConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            values[f.name] = tuple(flag_val) if f.name == "seeds" else flag_val
    cfg = AppConfig(**values)
    if cfg.data_dir is None:
        cfg.data_dir = os.environ.get(DATA_DIR_ENV) or None
    if cfg.variant not in VARIANTS:
        raise AppError(f"unknown variant {cfg.variant!r}; expected one of {VARIANTS}")
    return cfg


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Returns (header, rows-as-dicts), skipping comment lines."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [dict(zip(header, row)) for row in reader]


# ---------------------------------------------------------------------------
# data loading


def _load_engines(cfg):
    """Returns (train_engines, test_engines, test_rul, source_label)."""
    if cfg.synthetic:
        synth = data_mod.synth_generate(cfg.synth_engines, cfg.synth_seed)
        return synth.train, synth.test, synth.test_rul, f"synthetic(seed={cfg.synth_seed})"
    if not cfg.data_dir:
        raise AppError(
            f"no dataset: pass --data-dir, set {DATA_DIR_ENV}, or use --synthetic"
        )
    base = Path(cfg.data_dir)
    paths = [base / data_mod.TRAIN_FILE, base / data_mod.TEST_FILE, base / data_mod.RUL_FILE]
    for p in paths:
        if not p.exists():
            raise AppError(f"missing dataset file: {p}")
    train = data_mod.parse_cmapss(paths[0])
    test = data_mod.parse_cmapss(paths[1])
    rul = data_mod.read_rul_file(paths[2])
    return train, test, rul, str(base)


def _build_bundle(cfg):
    train, test, rul, source = _load_engines(cfg)
    bundle = data_mod.prepare_bundle(
        train, test, rul,
        window=cfg.seq_len, overlap=cfg.overlap,
        rul_cap=cfg.rul_cap, val_fraction=cfg.val_fraction,
    )
    return bundle, train, test, source


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(cfg):
    bundle, train_engines, test_engines, source = _build_bundle(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.write_window_cache(out / "window_cache_train.csv", bundle.train)
    data_mod.write_window_cache(out / "window_cache_val.csv", bundle.val)
    if bundle.test is not None:
        data_mod.write_window_cache(out / "window_cache_test.csv", bundle.test)
    labels = bundle.train.y
    rows = [
        ("source", source),
        ("train_engines", len(train_engines)),
        ("test_engines", len(test_engines) if test_engines else 0),
        ("train_windows", len(bundle.train)),
        ("val_windows", len(bundle.val)),
        ("test_windows", len(bundle.test) if bundle.test is not None else 0),
        ("window", cfg.seq_len),
        ("overlap", cfg.overlap),
        ("rul_cap", cfg.rul_cap),
        ("label_min", float(labels.min())),
        ("label_max", float(labels.max())),
        ("label_mean", float(labels.mean())),
    ]
    write_csv(out / "dataset_summary.csv", ["key", "value"], rows)
    print(f"prepared {len(bundle.train)} train / {len(bundle.val)} val windows "
          f"from {len(train_engines)} engines ({source})")
    return 0


def _ckpt_path(out, variant, run_idx, seed):
    return Path(out) / f"checkpoint_{variant}_run{run_idx}_seed{seed}.ckpt"


def _history_path(out, variant, run_idx, seed):
    return Path(out) / f"history_{variant}_run{run_idx}_seed{seed}.csv"


def _write_run_artifacts(cfg, variant, report):
    out = Path(cfg.out_dir)
    for i, res in enumerate(report.results):
        rows = [
            (e + 1, res.history.train_mse[e], res.history.val_mse[e],
             res.history.lr[e], res.history.seconds[e])
            for e in range(len(res.history.train_mse))
        ]
        write_csv(_history_path(out, variant, i, res.seed),
                  ["epoch", "train_mse", "val_mse", "lr", "seconds"], rows)
        save_checkpoint(res.state, _ckpt_path(out, variant, i, res.seed))
    write_csv(out / f"aggregate_{variant}.csv",
              ["epoch", "mean_train", "ci_lo", "ci_hi", "mean_val", "val_ci_lo", "val_ci_hi"],
              report.epoch_table())


def cmd_train(cfg):
    bundle, _, _, source = _build_bundle(cfg)
    report = training.multi_run(cfg.model_config(), cfg.train_config(), bundle)
    _write_run_artifacts(cfg, cfg.variant, report)
    summary = report.metric_summary()
    msg = f"trained {cfg.variant} on {source}, seeds {list(cfg.seeds)}"
    if summary:
        msg += f", test RMSE {summary['rmse'][0]:.2f} +/- {summary['rmse'][1]:.2f}"
    print(msg)
    return 0


def _metric_rows(variant, seed_reports):
    rows = []
    for seed, rep in seed_reports:
        ci = rep.ci or {}
        rmse_ci = ci.get("rmse", (None, None))
        mae_ci = ci.get("mae", (None, None))
        r2_ci = ci.get("r2", (None, None))
        rows.append((DISPLAY_NAMES[variant], variant, seed, rep.rmse, rep.mae, rep.r2,
                     rmse_ci[0], rmse_ci[1], mae_ci[0], mae_ci[1], r2_ci[0], r2_ci[1]))
    return rows


_METRICS_HEADER = ["model", "variant", "seed", "rmse", "mae", "r2",
                   "rmse_ci_lo", "rmse_ci_hi", "mae_ci_lo", "mae_ci_hi",
                   "r2_ci_lo", "r2_ci_hi"]


def _prediction_rows(test, per_seed_preds):
    """Per-engine truth, across-seed mean prediction, and a normal-approx CI
    over seeds (zero width for one seed)."""
    preds = np.stack(per_seed_preds)  # (k, B)
    mean = preds.mean(axis=0)
    k = preds.shape[0]
    if k > 1:
        half = 1.96 * preds.std(axis=0, ddof=1) / math.sqrt(k)
    else:
        half = np.zeros_like(mean)
    return [
        (test.engine_ids[i], float(test.y[i]), float(mean[i]),
         float(mean[i] - half[i]), float(mean[i] + half[i]))
        for i in range(len(test))
    ]


_PREDICTIONS_HEADER = ["engine", "truth", "pred", "ci_lo", "ci_hi"]


def _evaluate_checkpoints(cfg, variant, bundle):
    """Load every (run, seed) checkpoint for the variant and score it."""
    out = Path(cfg.out_dir)
    seed_reports, per_seed_preds = [], []
    for i, seed in enumerate(cfg.seeds):
        path = _ckpt_path(out, variant, i, seed)
        if not path.exists():
            raise AppError(f"missing checkpoint: {path} (run `fttgru train` first)")
        state = load_checkpoint(path)
        rep, pred = evaluation.evaluate_model(state, bundle.test)
        seed_reports.append((seed, rep))
        per_seed_preds.append(pred)
    return seed_reports, per_seed_preds


def cmd_evaluate(cfg):
    bundle, _, _, _ = _build_bundle(cfg)
    if bundle.test is None or len(bundle.test) == 0:
        raise AppError("evaluate needs a test split (dataset test files or --synthetic)")
    seed_reports, per_seed_preds = _evaluate_checkpoints(cfg, cfg.variant, bundle)
    out = Path(cfg.out_dir)
    write_csv(out / f"metrics_{cfg.variant}.csv", _METRICS_HEADER,
              _metric_rows(cfg.variant, seed_reports))
    write_csv(out / f"predictions_{cfg.variant}.csv", _PREDICTIONS_HEADER,
              _prediction_rows(bundle.test, per_seed_preds))
    mean_rmse = float(np.mean([rep.rmse for _, rep in seed_reports]))
    print(f"evaluated {cfg.variant}: mean RMSE {mean_rmse:.2f} over {len(seed_reports)} seed(s)")
    return 0


_LATENCY_HEADER = ["variant", "batch", "mean_ms", "median_ms", "throughput",
                   "warmup_iters", "measured_iters", "thread_count"]


def _latency_rows(variant, rep):
    per_batch_ms = rep.throughput_batch * 1000.0 / rep.batch32_throughput_per_s
    return [
        (variant, 1, rep.batch1_mean_ms, rep.batch1_median_ms,
         1000.0 / rep.batch1_mean_ms, rep.warmup_iters, rep.measured_iters,
         rep.thread_count),
        (variant, rep.throughput_batch, per_batch_ms, None,
         rep.batch32_throughput_per_s, rep.warmup_iters, rep.measured_iters,
         rep.thread_count),
    ]


def cmd_bench(cfg):
    path = _ckpt_path(cfg.out_dir, cfg.variant, 0, cfg.seeds[0])
    if not path.exists():
        raise AppError(f"missing checkpoint: {path} (run `fttgru train` first)")
    state = load_checkpoint(path)
    rep = evaluation.bench_latency(state, warmup=cfg.bench_warmup, iters=cfg.bench_iters)
    write_csv(Path(cfg.out_dir) / "latency.csv", _LATENCY_HEADER,
              _latency_rows(cfg.variant, rep))
    print(f"bench {cfg.variant}: batch=1 mean {rep.batch1_mean_ms:.3f} ms, "
          f"batch={rep.throughput_batch} throughput {rep.batch32_throughput_per_s:.0f}/s")
    return 0


_RESULTS_HEADER = ["model", "variant", "source", "seeds", "rmse", "rmse_sd",
                   "mae", "mae_sd", "r2", "r2_sd", "latency_ms"]


def _improvement_row(hybrid):
    """Percent improvement of the measured hybrid over the best published
    baseline, per column, from unrounded measured values."""
    best_rmse = min(b["rmse"] for b in evaluation.REFERENCE_BASELINES)
    best_mae = min(b["mae"] for b in evaluation.REFERENCE_BASELINES)
    best_r2 = max(b["r2"] for b in evaluation.REFERENCE_BASELINES)
    best_lat = min(b["latency_ms"] for b in evaluation.REFERENCE_BASELINES)
    row = ["% improvement vs best published baseline", "", "derived", "",
           100.0 * (best_rmse - hybrid["rmse"]) / best_rmse, None,
           100.0 * (best_mae - hybrid["mae"]) / best_mae, None,
           100.0 * (hybrid["r2"] - best_r2) / best_r2, None]
    if hybrid.get("latency_ms") is not None:
        row.append(100.0 * (best_lat - hybrid["latency_ms"]) / best_lat)
    else:
        row.append(None)
    return tuple(row)


def _results_rows(measured):
    """measured: {variant: {"seeds": ..., "rmse": ..., "rmse_sd": ...,
    "latency_ms": ...}} in variant order."""
    rows = []
    for variant in VARIANTS:
        if variant not in measured:
            continue
        m = measured[variant]
        rows.append((DISPLAY_NAMES[variant], variant, "measured", m["seeds"],
                     m["rmse"], m["rmse_sd"], m["mae"], m["mae_sd"],
                     m["r2"], m["r2_sd"], m.get("latency_ms")))
    for b in evaluation.REFERENCE_BASELINES:
        rows.append((b["model"], "", "published", "", b["rmse"], None,
                     b["mae"], None, b["r2"], None, b["latency_ms"]))
    if "hybrid" in measured:
        rows.append(_improvement_row(measured["hybrid"]))
    return rows


def cmd_ablate(cfg):
    """Train, evaluate, and bench all three variants under shared seeds."""
    bundle, _, _, _ = _build_bundle(cfg)
    if bundle.test is None or len(bundle.test) == 0:
        raise AppError("ablate needs a test split (dataset test files or --synthetic)")
    out = Path(cfg.out_dir)
    measured = {}
    for variant in VARIANTS:
        report = training.multi_run(cfg.model_config(variant), cfg.train_config(), bundle)
        _write_run_artifacts(cfg, variant, report)
        seed_reports = [(r.seed, r.metrics) for r in report.results]
        per_seed_preds = [r.predictions for r in report.results]
        write_csv(out / f"metrics_{variant}.csv", _METRICS_HEADER,
                  _metric_rows(variant, seed_reports))
        write_csv(out / f"predictions_{variant}.csv", _PREDICTIONS_HEADER,
                  _prediction_rows(bundle.test, per_seed_preds))
        lat = evaluation.bench_latency(
            report.results[0].state,
            warmup=min(cfg.bench_warmup, 20), iters=min(cfg.bench_iters, 200),
        )
        summary = report.metric_summary()
        measured[variant] = {
            "seeds": " ".join(str(s) for s in cfg.seeds),
            "rmse": summary["rmse"][0], "rmse_sd": summary["rmse"][1],
            "mae": summary["mae"][0], "mae_sd": summary["mae"][1],
            "r2": summary["r2"][0], "r2_sd": summary["r2"][1],
            "latency_ms": lat.batch1_mean_ms,
        }
        print(f"ablate {variant}: RMSE {summary['rmse'][0]:.2f}, "
              f"MAE {summary['mae'][0]:.2f}, R2 {summary['r2'][0]:.3f}, "
              f"latency {lat.batch1_mean_ms:.3f} ms")
    write_csv(out / "ablation.csv", _RESULTS_HEADER, _results_rows(measured))
    return 0


def cmd_report(cfg):
    """Merge per-variant CSVs into one results table and plot-ready files."""
    out = Path(cfg.out_dir)
    measured = {}
    latencies = {}
    lat_path = out / "latency.csv"
    if lat_path.exists():
        _, rows = read_csv(lat_path)
        for row in rows:
            if row["batch"] == "1":
                latencies[row["variant"]] = float(row["mean_ms"])
    abl_path = out / "ablation.csv"
    if abl_path.exists():
        _, rows = read_csv(abl_path)
        for row in rows:
            if row["source"] == "measured":
                latencies.setdefault(row["variant"], float(row["latency_ms"]))
    for variant in VARIANTS:
        mpath = out / f"metrics_{variant}.csv"
        if not mpath.exists():
            continue
        _, rows = read_csv(mpath)
        vals = {k: np.array([float(r[k]) for r in rows]) for k in ("rmse", "mae", "r2")}
        measured[variant] = {
            "seeds": " ".join(r["seed"] for r in rows),
            "rmse": float(vals["rmse"].mean()),
            "rmse_sd": float(vals["rmse"].std(ddof=1)) if len(rows) > 1 else 0.0,
            "mae": float(vals["mae"].mean()),
            "mae_sd": float(vals["mae"].std(ddof=1)) if len(rows) > 1 else 0.0,
            "r2": float(vals["r2"].mean()),
            "r2_sd": float(vals["r2"].std(ddof=1)) if len(rows) > 1 else 0.0,
            "latency_ms": latencies.get(variant),
        }
        agg = out / f"aggregate_{variant}.csv"
        if agg.exists():
            header, rows_a = read_csv(agg)
            write_csv(out / f"learning_curve_{variant}.csv", header,
                      [[r[h] for h in header] for r in rows_a])
        pred = out / f"predictions_{variant}.csv"
        if pred.exists():
            header, rows_p = read_csv(pred)
            write_csv(out / f"scatter_{variant}.csv", header,
                      [[r[h] for h in header] for r in rows_p])
    if not measured:
        raise AppError(f"nothing to report in {out} (run evaluate or ablate first)")
    write_csv(out / "results_table.csv", _RESULTS_HEADER, _results_rows(measured))
    print(f"report written to {out / 'results_table.csv'} "
          f"({', '.join(sorted(measured))})")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fttgru",
        description="RUL regression pipeline: Fourier-mixing encoder + GRU on CMAPSS FD001.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--data-dir", dest="data_dir",
                       help=f"dataset directory (default: ${DATA_DIR_ENV})")
        p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--seeds", nargs="+", type=int)
        p.add_argument("--rul-cap", dest="rul_cap", type=int)
        p.add_argument("--synthetic", action="store_true", default=None,
                       help="use the built-in synthetic fleet instead of dataset files")
        p.add_argument("--fnet-mode", dest="fnet_mode", action="store_true", default=None,
                       help="fix the mixing to Re(FFT) with no learnable filter")
        p.add_argument("--synth-engines", dest="synth_engines", type=int)
        p.add_argument("--synth-seed", dest="synth_seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr-max", dest="lr_max", type=float)
        p.add_argument("--lr-min", dest="lr_min", type=float)
        p.add_argument("--patience", type=int)
        p.add_argument("--val-fraction", dest="val_fraction", type=float)
        p.add_argument("--bench-warmup", dest="bench_warmup", type=int)
        p.add_argument("--bench-iters", dest="bench_iters", type=int)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except AppError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (DataFormatError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except TrainingError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
