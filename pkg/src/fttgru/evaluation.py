"""Regression metrics, test-set evaluation with bootstrap CIs, and the CPU
latency/throughput benchmark."""

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from fttgru.model import model_forward

# Published FD001 results for common deep baselines (fixed reference rows in
# comparison reports; not reproduced by this package).
REFERENCE_BASELINES = (
    {"model": "LSTM", "rmse": 34.25, "mae": 21.85, "r2": 0.39, "latency_ms": 1.30},
    {"model": "Bi-LSTM", "rmse": 32.67, "mae": 20.14, "r2": 0.41, "latency_ms": 1.91},
    {"model": "TCN-Attention", "rmse": 31.12, "mae": 19.76, "r2": 0.44, "latency_ms": 2.93},
)


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    r2: float  # NaN when undefined (constant truth or < 2 samples)
    per_engine_errors: np.ndarray
    ci: Optional[Dict[str, Tuple[float, float]]] = None
    note: str = ""


def compute_metrics(pred, truth):
    """RMSE / MAE / R^2 of predictions against ground truth."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"prediction/truth shapes mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    err = pred - truth
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    note = ""
    if truth.size < 2:
        r2 = math.nan
        note = "R2 undefined: needs at least 2 samples"
    else:
        ss_tot = float(np.sum((truth - truth.mean()) ** 2))
        if ss_tot == 0.0:
            r2 = math.nan
            note = "R2 undefined: constant truth vector"
        else:
            r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return MetricsReport(rmse, mae, r2, err, note=note)


def predict(state, batch, chunk=256):
    """Forward the whole batch in fixed-order chunks."""
    preds = []
    for i in range(0, len(batch), chunk):
        p, _ = model_forward(state, batch.x[i : i + chunk])
        preds.append(p)
    return np.concatenate(preds)


def _bootstrap_indices(n, n_resamples, seed):
    rng = np.random.default_rng([int(seed), 0xB00])
    return rng.integers(0, n, size=(n_resamples, n))


def evaluate_model(state, test, n_resamples=1000, ci_seed=0):
    """Evaluate on the one-window-per-engine test batch.

    Metric CIs come from a percentile bootstrap over the per-engine errors
    (the few training seeds are aggregated elsewhere). Returns the report
    plus the raw predictions for the scatter artifact.
    """
    pred = predict(state, test)
    report = compute_metrics(pred, test.y)
    err = report.per_engine_errors
    idx = _bootstrap_indices(err.size, n_resamples, ci_seed)
    sq = (err * err)[idx].mean(axis=1)
    ab = np.abs(err)[idx].mean(axis=1)
    ci = {
        "rmse": (float(np.sqrt(np.percentile(sq, 2.5))), float(np.sqrt(np.percentile(sq, 97.5)))),
        "mae": (float(np.percentile(ab, 2.5)), float(np.percentile(ab, 97.5))),
    }
    truth = np.asarray(test.y, dtype=np.float64)
    if not math.isnan(report.r2):
        t_res = truth[idx]
        ss_tot = ((t_res - t_res.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
        ss_res = ((err * err)[idx]).sum(axis=1)
        valid = ss_tot > 0
        if valid.any():
            r2s = 1.0 - ss_res[valid] / ss_tot[valid]
            ci["r2"] = (float(np.percentile(r2s, 2.5)), float(np.percentile(r2s, 97.5)))
    report.ci = ci
    return report, pred


@dataclass
class LatencyReport:
    batch1_mean_ms: float
    batch1_median_ms: float
    batch32_throughput_per_s: float
    warmup_iters: int
    measured_iters: int
    thread_count: int
    throughput_batch: int = 32


def bench_latency(state, warmup=100, iters=1000, seed=0, throughput_batch=32,
                  throughput_iters=None):
    """Single-thread CPU latency of the forward pass.

    batch=1 wall time per window (mean and median over ``iters`` after
    ``warmup`` discarded iterations) plus steady-state batch throughput in
    samples/s. Timing wraps only the forward call.
    """
    if iters <= 0:
        raise ValueError("iters must be positive")
    cfg = state.config
    rng = np.random.default_rng([int(seed), 0xBE9C])
    x1 = rng.uniform(0.0, 1.0, (1, cfg.seq_len, cfg.n_features))
    xb = rng.uniform(0.0, 1.0, (throughput_batch, cfg.seq_len, cfg.n_features))
    t_iters = throughput_iters if throughput_iters is not None else max(1, iters // 8)
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            model_forward(state, x1)
        samples = []
        for _ in range(iters):
            t0 = time.perf_counter_ns()
            model_forward(state, x1)
            samples.append((time.perf_counter_ns() - t0) / 1e6)
        for _ in range(max(1, warmup // 10)):
            model_forward(state, xb)
        t0 = time.perf_counter_ns()
        for _ in range(t_iters):
            model_forward(state, xb)
        batch_seconds = (time.perf_counter_ns() - t0) / 1e9
    mean_ms = statistics.fmean(samples)
    median_ms = statistics.median(samples)
    if median_ms > mean_ms * 10:
        raise RuntimeError("latency sanity check failed: median > 10x mean")
    return LatencyReport(
        batch1_mean_ms=mean_ms,
        batch1_median_ms=median_ms,
        batch32_throughput_per_s=throughput_batch * t_iters / batch_seconds,
        warmup_iters=warmup,
        measured_iters=iters,
        thread_count=1,
        throughput_batch=throughput_batch,
    )
