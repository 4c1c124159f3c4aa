"""Adam optimization with cosine decay, early stopping, and multi-seed runs.

A run is fully deterministic given (seed, config, data): parameter init and
epoch shuffles draw from per-seed RNG streams, and summation orders are
fixed. Aggregation across seeds reports mean and a normal-approximation 95%
CI per epoch (zero width for a single run).
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fttgru import evaluation
from fttgru.model import build_model, model_backward, model_forward
from fttgru.nn import mse_loss
from fttgru.numerics import NumericsError


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    min_delta: float = 1e-4
    seeds: Tuple[int, ...] = (0, 1, 2)
    rul_cap: Optional[int] = None
    val_fraction: float = 0.1

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (0 < self.lr_min <= self.lr_max):
            raise ValueError("need 0 < lr_min <= lr_max")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        return self


class AdamState:
    """First/second moment buffers, aligned with a parameter list."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {p.name} at step {t}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.zero_grad()


def cosine_lr(step, total_steps, lr_max, lr_min):
    """lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi step / total_steps))."""
    if total_steps == 0:
        raise ValueError("total_steps must be positive")
    if not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def early_stop_check(val_history, patience, min_delta):
    """True once the trailing run of epochs without an improvement of at
    least ``min_delta`` reaches ``patience``. Sub-threshold improvements do
    not reset the streak (and do not move the best)."""
    if not val_history:
        raise ValueError("need at least one validation value")
    best = val_history[0]
    streak = 0
    for v in val_history[1:]:
        if best - v >= min_delta:
            best = v
            streak = 0
        else:
            streak += 1
    return streak >= patience


@dataclass
class RunHistory:
    train_mse: List[float] = field(default_factory=list)
    val_mse: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based index of the best validation epoch
    stopped_early: bool = False


def dataset_mse(state, batch, chunk=256):
    """MSE of the model over a window batch, evaluated in fixed-order chunks."""
    total = 0.0
    for i in range(0, len(batch), chunk):
        pred, _ = model_forward(state, batch.x[i : i + chunk])
        diff = pred - batch.y[i : i + chunk]
        total += float(diff @ diff)
    return total / len(batch)


def train_run(model_cfg, train_cfg, bundle, seed):
    """Train one model on the bundle; deterministic for (seed, config, data).

    The head's output scale is calibrated to the training label maximum so
    the optimizer works on O(1) activations; the stored config carries the
    calibrated value.
    """
    train_cfg.validate()
    if len(bundle.train) == 0:
        raise TrainingError("empty training split")
    if len(bundle.val) == 0:
        raise TrainingError("empty validation split (val_fraction too small?)")
    scale = max(1.0, float(np.max(bundle.train.y)))
    state = build_model(replace(model_cfg, output_scale=scale), seed)
    params = state.parameters()
    adam = AdamState(params)
    shuffle_rng = np.random.default_rng([int(seed), 1])

    n = len(bundle.train)
    steps_per_epoch = (n + train_cfg.batch_size - 1) // train_cfg.batch_size
    total_steps = train_cfg.epochs * steps_per_epoch
    history = RunHistory()
    best_val = math.inf
    best_snapshot = None
    global_step = 0

    for epoch in range(1, train_cfg.epochs + 1):
        t_start = time.perf_counter()
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        lr = train_cfg.lr_max
        for lo in range(0, n, train_cfg.batch_size):
            idx = order[lo : lo + train_cfg.batch_size]
            try:
                pred, caches = model_forward(state, bundle.train.x[idx])
                loss, dpred = mse_loss(pred, bundle.train.y[idx])
                model_backward(state, dpred, caches)
                lr = cosine_lr(global_step, total_steps, train_cfg.lr_max, train_cfg.lr_min)
                adam_step(params, adam, lr, train_cfg.adam_beta1,
                          train_cfg.adam_beta2, train_cfg.adam_eps)
            except (NumericsError, TrainingError) as err:
                raise TrainingError(
                    f"seed {seed}: aborted at epoch {epoch}, step {global_step + 1}: {err}"
                ) from err
            global_step += 1
            loss_sum += loss * len(idx)
        val = dataset_mse(state, bundle.val)
        history.train_mse.append(loss_sum / n)
        history.val_mse.append(val)
        history.lr.append(lr)
        history.seconds.append(time.perf_counter() - t_start)
        if val < best_val:
            best_val = val
            history.best_epoch = epoch
            best_snapshot = [p.value.copy() for p in params]
        if early_stop_check(history.val_mse, train_cfg.patience, train_cfg.min_delta):
            history.stopped_early = True
            for p, snap in zip(params, best_snapshot):
                p.value = snap
            break
    return state, history


@dataclass
class SeedResult:
    seed: int
    state: object
    history: RunHistory
    metrics: Optional[evaluation.MetricsReport] = None
    predictions: Optional[np.ndarray] = None


@dataclass
class AggregateReport:
    results: List[SeedResult]

    def epoch_table(self):
        """Rows (epoch, mean_train, ci_lo, ci_hi, mean_val, val_ci_lo,
        val_ci_hi) aggregated over the runs that reached each epoch."""
        rows = []
        max_epochs = max(len(r.history.train_mse) for r in self.results)
        for e in range(max_epochs):
            tr = [r.history.train_mse[e] for r in self.results if len(r.history.train_mse) > e]
            va = [r.history.val_mse[e] for r in self.results if len(r.history.val_mse) > e]
            mt, ht = _mean_ci_halfwidth(tr)
            mv, hv = _mean_ci_halfwidth(va)
            rows.append((e + 1, mt, mt - ht, mt + ht, mv, mv - hv, mv + hv))
        return rows

    def metric_summary(self):
        """Across-seed mean and SD for each test metric (empty when the
        bundle had no test split)."""
        reports = [r.metrics for r in self.results if r.metrics is not None]
        if not reports:
            return {}
        out = {}
        for name in ("rmse", "mae", "r2"):
            vals = np.array([getattr(m, name) for m in reports])
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            out[name] = (float(np.mean(vals)), sd)
        return out


def _mean_ci_halfwidth(values):
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    return mean, 1.96 * float(np.std(values, ddof=1)) / math.sqrt(len(values))


def multi_run(model_cfg, train_cfg, bundle):
    """Train one model per seed; evaluate on the test split when present."""
    train_cfg.validate()
    results = []
    for seed in train_cfg.seeds:
        try:
            state, history = train_run(model_cfg, train_cfg, bundle, seed)
        except TrainingError:
            raise
        except Exception as err:  # annotate which seed blew up
            raise TrainingError(f"seed {seed} failed: {err}") from err
        metrics = None
        preds = None
        if bundle.test is not None and len(bundle.test):
            metrics, preds = evaluation.evaluate_model(state, bundle.test)
        results.append(SeedResult(seed, state, history, metrics, preds))
    return AggregateReport(results)


def bootstrap_ci(values, n_resamples=1000, level=0.95, seed=0):
    """Percentile bootstrap interval for the mean; deterministic under seed."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    stats = values[idx].mean(axis=1)
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [alpha, 100.0 - alpha])
    return float(lo), float(hi)
