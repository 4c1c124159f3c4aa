"""Turbofan degradation data handling.

Covers parsing the 26-column CMAPSS text format, per-cycle RUL labeling,
train-set min-max normalization, sliding-window construction for the train
and test protocols, and a synthetic degradation generator so the pipeline is
testable without the real dataset (which users supply themselves).
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

N_SETTINGS = 3
N_SENSORS = 21
N_FEATURES = N_SETTINGS + N_SENSORS
N_COLUMNS = 2 + N_FEATURES

TRAIN_FILE = "train_FD001.txt"
TEST_FILE = "test_FD001.txt"
RUL_FILE = "RUL_FD001.txt"


class DataFormatError(ValueError):
    pass


@dataclass
class EngineSeries:
    """One engine's multivariate record, cycles 1..L."""

    unit_id: int
    cycles: np.ndarray
    settings: np.ndarray
    sensors: np.ndarray

    def __post_init__(self):
        self.cycles = np.asarray(self.cycles, dtype=np.int64)
        self.settings = np.ascontiguousarray(self.settings, dtype=np.float64)
        self.sensors = np.ascontiguousarray(self.sensors, dtype=np.float64)
        n = len(self.cycles)
        if n == 0:
            raise DataFormatError(f"engine {self.unit_id}: empty series")
        if self.settings.shape != (n, N_SETTINGS) or self.sensors.shape != (n, N_SENSORS):
            raise DataFormatError(f"engine {self.unit_id}: ragged settings/sensors")
        if self.cycles[0] != 1 or np.any(np.diff(self.cycles) != 1):
            raise DataFormatError(f"engine {self.unit_id}: cycles not contiguous from 1")

    def __len__(self):
        return len(self.cycles)

    def features(self):
        """(L, 24) matrix: 3 operational settings then 21 sensors."""
        return np.hstack([self.settings, self.sensors])


def parse_cmapss(path):
    """Parse a whitespace-separated CMAPSS file into per-engine series,
    ordered by unit id."""
    rows = {}
    order = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_COLUMNS:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {N_COLUMNS} columns, got {len(fields)}"
                )
            try:
                values = [float(f) for f in fields]
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field ({err})") from None
            unit, cycle = int(values[0]), int(values[1])
            bucket = rows.setdefault(unit, [])
            expected = 1 if not bucket else bucket[-1][0] + 1
            if cycle != expected:
                raise DataFormatError(
                    f"{path}:{lineno}: unit {unit} cycle {cycle}, expected {expected}"
                )
            bucket.append((cycle, values[2 : 2 + N_SETTINGS], values[2 + N_SETTINGS :]))
            order.setdefault(unit, lineno)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    engines = []
    for unit in sorted(rows):
        recs = rows[unit]
        engines.append(EngineSeries(
            unit_id=unit,
            cycles=np.array([r[0] for r in recs]),
            settings=np.array([r[1] for r in recs]),
            sensors=np.array([r[2] for r in recs]),
        ))
    return engines


def write_cmapss(path, engines):
    """Write engines back to the 26-column text format (synthetic data and
    round-trip tests)."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in engines:
            feats = e.features()
            for i, cyc in enumerate(e.cycles):
                cols = [str(e.unit_id), str(int(cyc))] + [f"{v:.10g}" for v in feats[i]]
                fh.write(" ".join(cols) + "\n")


def read_rul_file(path):
    """One ground-truth RUL integer per engine, in unit order."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(float(s)))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric RUL value {s!r}") from None
    if not out:
        raise DataFormatError(f"{path}: no RUL values")
    return out


def label_rul(engine, cap=None):
    """Per-cycle remaining life: last_cycle - t, optionally clamped at ``cap``."""
    rul = (engine.cycles[-1] - engine.cycles).astype(np.float64)
    if cap is not None:
        rul = np.minimum(rul, float(cap))
    return rul


@dataclass
class Normalizer:
    """Per-feature min-max scaling fitted on the training split only."""

    feat_min: Optional[np.ndarray] = None
    feat_max: Optional[np.ndarray] = None

    @classmethod
    def fit(cls, engines):
        stacked = np.vstack([e.features() for e in engines])
        return cls(stacked.min(axis=0), stacked.max(axis=0))

    def transform(self, rows):
        """x' = (x - min) / (max - min); constant features map to 0.
        Values outside the fitted range are not clipped."""
        if self.feat_min is None or self.feat_max is None:
            raise DataFormatError("normalizer used before fitting")
        span = self.feat_max - self.feat_min
        safe = np.where(span > 0, span, 1.0)
        out = (rows - self.feat_min) / safe
        return np.where(span > 0, out, 0.0)


@dataclass
class WindowBatch:
    x: np.ndarray  # (B, window, 24)
    y: np.ndarray  # (B,)
    engine_ids: List[int]
    starts: List[int]

    def __len__(self):
        return len(self.y)


def _window_starts(length, window, stride):
    if length <= window:
        return [0]
    starts = list(range(0, length - window + 1, stride))
    if (length - window) % stride:
        starts.append(length - window)
    return starts


def _slice_window(feats, start, window):
    length = len(feats)
    if length >= window:
        return feats[start : start + window]
    pad = np.repeat(feats[:1], window - length, axis=0)
    return np.vstack([pad, feats])


def make_train_windows(engines, normalizer, window=30, overlap=0.5, rul_cap=None):
    """Stride-15 windows (for the default 50% overlap) plus a terminal window
    flush with the series end; each labeled with the RUL at its last row.
    Engines shorter than the window get one window left-padded with their
    first row."""
    if window <= 0:
        raise DataFormatError("window must be positive")
    if not (0 <= overlap < 1):
        raise DataFormatError("overlap must lie in [0, 1)")
    stride = max(1, int(round(window * (1.0 - overlap))))
    xs, ys, ids, starts_out = [], [], [], []
    for e in engines:
        feats = normalizer.transform(e.features())
        rul = label_rul(e, rul_cap)
        for start in _window_starts(len(e), window, stride):
            xs.append(_slice_window(feats, start, window))
            ys.append(rul[min(start + window, len(e)) - 1])
            ids.append(e.unit_id)
            starts_out.append(start)
    return WindowBatch(np.stack(xs), np.array(ys), ids, starts_out)


def make_test_windows(engines, true_rul, normalizer, window=30):
    """One end-aligned window per engine, labeled from the ground-truth file."""
    if len(true_rul) != len(engines):
        raise DataFormatError(
            f"RUL count mismatch: {len(engines)} engines vs {len(true_rul)} labels"
        )
    xs, ids, starts = [], [], []
    for e in engines:
        feats = normalizer.transform(e.features())
        start = max(0, len(e) - window)
        xs.append(_slice_window(feats[start:], 0, window))
        ids.append(e.unit_id)
        starts.append(start)
    return WindowBatch(np.stack(xs), np.asarray(true_rul, dtype=np.float64), ids, starts)


def split_train_val(engines, val_fraction):
    """Hold out the last ``val_fraction`` of engines by unit id."""
    if not (0 <= val_fraction < 1):
        raise DataFormatError("val_fraction must lie in [0, 1)")
    ordered = sorted(engines, key=lambda e: e.unit_id)
    n_val = max(1, int(round(len(ordered) * val_fraction))) if val_fraction > 0 else 0
    if n_val == 0:
        return ordered, []
    return ordered[:-n_val], ordered[-n_val:]


@dataclass
class DataBundle:
    train: WindowBatch
    val: WindowBatch
    test: Optional[WindowBatch]
    normalizer: Normalizer


def prepare_bundle(train_engines, test_engines=None, test_rul=None, *,
                   window=30, overlap=0.5, rul_cap=None, val_fraction=0.1):
    """Fit the normalizer on the full training split, hold out validation
    engines, and build all window batches."""
    normalizer = Normalizer.fit(train_engines)
    fit_part, val_part = split_train_val(train_engines, val_fraction)
    train_wb = make_train_windows(fit_part, normalizer, window, overlap, rul_cap)
    val_wb = (make_train_windows(val_part, normalizer, window, overlap, rul_cap)
              if val_part else WindowBatch(np.zeros((0, window, N_FEATURES)), np.zeros(0), [], []))
    test_wb = None
    if test_engines is not None:
        test_wb = make_test_windows(test_engines, test_rul, normalizer, window)
    return DataBundle(train_wb, val_wb, test_wb, normalizer)


# ---------------------------------------------------------------------------
# synthetic degradation generator


@dataclass
class SynthData:
    train: List[EngineSeries]
    test: List[EngineSeries]
    test_rul: List[int]


def synth_generate(n_engines, seed):
    """Deterministic synthetic fleet: per-sensor monotone power-law drift plus
    Gaussian noise, lifetimes uniform in [150, 300]. Test engines are
    truncated mid-life with the remaining cycles as ground truth."""
    if n_engines < 1:
        raise DataFormatError("n_engines must be >= 1")
    rng = np.random.default_rng([int(seed), 0xDA7A])
    base = rng.uniform(20.0, 60.0, N_SENSORS)
    drift = rng.uniform(0.5, 3.0, N_SENSORS) * rng.choice([-1.0, 1.0], N_SENSORS)
    power = rng.uniform(0.7, 2.0, N_SENSORS)
    noise_sd = 0.05 * np.abs(drift)

    def one_engine(unit_id, life):
        t = np.arange(1, life + 1, dtype=np.float64)
        frac = (t / life)[:, None]
        sensors = base + drift * frac ** power + rng.normal(0.0, noise_sd, (life, N_SENSORS))
        settings = np.column_stack([
            rng.normal(0.0, 1e-3, life),
            rng.normal(0.0, 1e-3, life),
            np.full(life, 100.0),  # constant, like FD001's third setting
        ])
        return EngineSeries(unit_id, np.arange(1, life + 1), settings, sensors)

    train = [one_engine(i + 1, int(rng.integers(150, 301))) for i in range(n_engines)]
    test, test_rul = [], []
    for i in range(n_engines):
        life = int(rng.integers(150, 301))
        full = one_engine(i + 1, life)
        cut = int(rng.integers(30, life - 4))
        test.append(EngineSeries(i + 1, full.cycles[:cut], full.settings[:cut], full.sensors[:cut]))
        test_rul.append(life - cut)
    return SynthData(train, test, test_rul)


# ---------------------------------------------------------------------------
# prepared-window cache

_CACHE_SCHEMA = "# fttgru-window-cache v1"


def write_window_cache(path, batch):
    """One (engine, start, label) reference row per window."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_CACHE_SCHEMA + "\n")
        fh.write("engine,start,label\n")
        for eid, start, label in zip(batch.engine_ids, batch.starts, batch.y):
            fh.write(f"{eid},{start},{float(label)!r}\n")


def read_window_cache(path):
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != _CACHE_SCHEMA:
            raise DataFormatError(f"{path}: unknown cache schema {first!r}")
        header = fh.readline().rstrip("\n")
        if header != "engine,start,label":
            raise DataFormatError(f"{path}: unexpected cache header {header!r}")
        out = []
        for line in fh:
            if not line.strip():
                continue
            eid, start, label = line.strip().split(",")
            out.append((int(eid), int(start), float(label)))
    return out
