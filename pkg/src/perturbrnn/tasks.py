"""Benchmark datasets: Mackey-Glass prediction, copying memory and hourly weather.

Every task produces a :class:`SequenceDataset`, a list of ``(T_i, dim)``
input arrays with matching target arrays plus a ``meta`` dict that carries
the normalization constants and, where the task defines one, the default
train/test boundary.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataError

BLANK = "blank"
CUE = "cue"


@dataclass
class SequenceDataset:
    inputs: list
    targets: list
    meta: dict = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise DataError("inputs and targets hold different numbers of sequences")
        for i, (u, y) in enumerate(zip(self.inputs, self.targets)):
            if len(u) != len(y):
                raise DataError(f"sequence {i}: {len(u)} inputs but {len(y)} targets")
            if not (np.isfinite(u).all() and np.isfinite(y).all()):
                raise DataError(f"sequence {i} contains NaN or Inf")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_size(self) -> int:
        return self.inputs[0].shape[-1]

    @property
    def output_size(self) -> int:
        return self.targets[0].shape[-1]

    @property
    def lengths(self) -> list[int]:
        return [len(u) for u in self.inputs]

    def subset(self, index) -> SequenceDataset:
        return SequenceDataset([self.inputs[i] for i in index], [self.targets[i] for i in index],
                               dict(self.meta), self.mask)


def _zscore(values, mean=None, std=None):
    mean = values.mean(axis=0) if mean is None else mean
    std = values.std(axis=0) if std is None else std
    std = np.where(std > 0, std, 1.0)
    return (values - mean) / std, mean, std


def denormalize(values, meta: dict, role: str = "target"):
    """Undo the z-scoring recorded in ``meta`` for ``role`` in {"target", "input"}."""
    mean = np.asarray(meta[f"{role}_mean"])
    std = np.asarray(meta[f"{role}_std"])
    return np.asarray(values) * std + mean


def normalize(values, meta: dict, role: str = "target"):
    mean = np.asarray(meta[f"{role}_mean"])
    std = np.asarray(meta[f"{role}_std"])
    return (np.asarray(values) - mean) / std


# ---------------------------------------------------------------------------
# Mackey-Glass


@dataclass
class MackeyGlassConfig:
    tau_mg: float = 17.0
    horizon: int = 15
    length: int = 5000
    dt: float = 1.0
    beta_mg: float = 0.2
    gamma_mg: float = 0.1
    n_mg: float = 10.0
    warmup: int = 1000
    initial: float = 1.2
    history_noise: float = 0.0
    normalize: bool = True

    def validate(self) -> MackeyGlassConfig:
        if self.tau_mg < 1 or self.horizon < 1 or self.length <= self.horizon:
            raise ConfigurationError(
                f"need tau_mg >= 1, horizon >= 1 and length > horizon, got {self.tau_mg}, "
                f"{self.horizon}, {self.length}")
        if self.dt <= 0 or self.warmup < 0:
            raise ConfigurationError("dt must be positive and warmup non-negative")
        delay = self.tau_mg / self.dt
        if abs(delay - round(delay)) > 1e-9:
            raise ConfigurationError("tau_mg must be an integer multiple of dt")
        return self


def mackey_glass_series(cfg: MackeyGlassConfig, seed=None) -> np.ndarray:
    """Integrate ``dx/dt = beta x(t-tau) / (1 + x(t-tau)^n) - gamma x(t)`` with fixed-step RK4.

    The delayed value at half steps is the midpoint of its neighbours on the
    grid. Returns ``warmup + length + horizon`` samples after the history.
    """
    cfg.validate()
    d = int(round(cfg.tau_mg / cfg.dt))
    total = cfg.warmup + cfg.length + cfg.horizon
    x = np.empty(d + total)
    x[: d + 1] = cfg.initial
    if cfg.history_noise:
        rng = np.random.default_rng(seed)
        x[: d + 1] += cfg.history_noise * rng.standard_normal(d + 1)
    b, g, n, h = cfg.beta_mg, cfg.gamma_mg, cfg.n_mg, cfg.dt

    def f(xt, xd):
        return b * xd / (1.0 + xd ** n) - g * xt

    for i in range(d, d + total - 1):
        xd0, xd1 = x[i - d], x[i + 1 - d]
        xdm = 0.5 * (xd0 + xd1)
        xi = x[i]
        k1 = f(xi, xd0)
        k2 = f(xi + 0.5 * h * k1, xdm)
        k3 = f(xi + 0.5 * h * k2, xdm)
        k4 = f(xi + h * k3, xd1)
        x[i + 1] = xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x[d:]


def mackey_glass_generate(cfg: MackeyGlassConfig | None = None, seed=None) -> SequenceDataset:
    """One sequence of ``length`` steps: input ``x(t)``, target ``x(t + horizon)``."""
    cfg = (cfg or MackeyGlassConfig()).validate()
    series = mackey_glass_series(cfg, seed)[cfg.warmup:]
    meta = {"task": "mackey-glass", "horizon": cfg.horizon, "feature_names": ["x"],
            "config": asdict(cfg)}
    if cfg.normalize:
        _, mean, std = _zscore(series[: cfg.length])
        mean, std = float(mean), float(std)
        scaled = (series - mean) / std
    else:
        scaled, mean, std = series, 0.0, 1.0
    meta.update(input_mean=[mean], input_std=[std], target_mean=[mean], target_std=[std])
    u = scaled[: cfg.length, None]
    y = scaled[cfg.horizon: cfg.horizon + cfg.length, None]
    return SequenceDataset([u.copy()], [y.copy()], meta)


# ---------------------------------------------------------------------------
# copying memory


@dataclass
class CopyingConfig:
    num_symbols: int = 8
    seq_len: int = 100
    delay: int = 10
    loss_mask: str = "full"

    def validate(self) -> CopyingConfig:
        if self.num_symbols < 2 or self.seq_len < 1 or self.delay < 0:
            raise ConfigurationError(
                f"need num_symbols >= 2, seq_len >= 1, delay >= 0; got {self.num_symbols}, "
                f"{self.seq_len}, {self.delay}")
        if self.loss_mask not in ("full", "recall"):
            raise ConfigurationError(f"loss_mask must be 'full' or 'recall', got {self.loss_mask!r}")
        return self

    @property
    def channels(self) -> int:
        return self.num_symbols + 2

    @property
    def prefix(self) -> int:
        """Steps before recall starts: symbols, blanks and the cue."""
        return self.seq_len + max(self.delay, 1)

    @property
    def total_length(self) -> int:
        return self.prefix + self.seq_len


def copying_generate(cfg: CopyingConfig | None = None, num_sequences: int = 100, seed=None
                     ) -> SequenceDataset:
    """One-hot copying samples over ``num_symbols + 2`` channels.

    Channel ``num_symbols`` is the blank marker and ``num_symbols + 1`` the
    cue. With ``delay == 0`` the cue still takes one step right after the
    symbol block.
    """
    cfg = (cfg or CopyingConfig()).validate()
    if num_sequences < 1:
        raise ConfigurationError("num_sequences must be >= 1")
    rng = np.random.default_rng(seed)
    K, L, P = cfg.num_symbols, cfg.seq_len, cfg.prefix
    blank, cue = K, K + 1
    eye = np.eye(cfg.channels)
    inputs, targets = [], []
    for _ in range(num_sequences):
        symbols = rng.integers(0, K, size=L)
        u_idx = np.full(cfg.total_length, blank)
        u_idx[:L] = symbols
        u_idx[P - 1] = cue
        y_idx = np.full(cfg.total_length, blank)
        y_idx[P:] = symbols
        inputs.append(eye[u_idx])
        targets.append(eye[y_idx])
    mask = None
    if cfg.loss_mask == "recall":
        mask = np.zeros(cfg.total_length)
        mask[P:] = 1.0
    C = cfg.channels
    meta = {"task": "copying", "config": asdict(cfg),
            "feature_names": [f"s{k}" for k in range(K)] + [BLANK, CUE],
            "input_mean": [0.0] * C, "input_std": [1.0] * C,
            "target_mean": [0.0] * C, "target_std": [1.0] * C}
    return SequenceDataset(inputs, targets, meta, mask)


# ---------------------------------------------------------------------------
# weather


@dataclass
class WeatherConfig:
    horizon: int = 1
    date_column: str = "date"
    target_column: str | None = None
    columns: list | None = None
    drop_metric_duplicates: bool = True
    train_months: int | None = 28
    test_months: int = 2
    normalize: bool = True

    def validate(self) -> WeatherConfig:
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.train_months is not None and (self.train_months < 1 or self.test_months < 1):
            raise ConfigurationError("train_months and test_months must be >= 1")
        return self


def _is_fahrenheit(name: str) -> bool:
    low = name.lower()
    return "fahrenheit" in low or "farenheit" in low


def _stem(name: str) -> str:
    low = name.lower()
    for unit in ("fahrenheit", "farenheit", "celsius"):
        low = low.replace(unit, "")
    return low.strip(" _")


def _find_target(columns, requested):
    if requested is not None:
        if requested not in columns:
            raise DataError(f"target column {requested!r} not in file")
        return requested
    candidates = [c for c in columns
                  if "drybulb" in c.lower().replace(" ", "").replace("_", "").replace("-", "")]
    if not candidates:
        raise DataError("no Dry-bulb column found in header")
    fahrenheit = [c for c in candidates if _is_fahrenheit(c)]
    return (fahrenheit or candidates)[0]


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def weather_load(path, cfg: WeatherConfig | None = None) -> SequenceDataset:
    """Read an hourly climatological CSV and build the Dry-bulb forecasting task.

    Celsius columns that duplicate a Fahrenheit column are dropped. With the
    default month split the dataset holds two sequences, train then test,
    each with its last ``horizon`` rows removed (no target available).
    Features and target are z-scored with training statistics only.
    """
    cfg = (cfg or WeatherConfig()).validate()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"weather file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    header = list(frame.columns)
    if not header or any(_looks_numeric(c) for c in header) or cfg.date_column not in header:
        raise DataError(f"{path}: missing header row or date column {cfg.date_column!r}")

    target = _find_target(header, cfg.target_column)
    features = [c for c in header if c != cfg.date_column]
    if cfg.columns is not None:
        missing = [c for c in cfg.columns if c not in header]
        if missing:
            raise DataError(f"requested columns not in file: {missing}")
        features = [c for c in cfg.columns if c != cfg.date_column]
        if target not in features:
            features.append(target)
    if cfg.drop_metric_duplicates:
        kept_stems = {_stem(c) for c in features if _is_fahrenheit(c)}
        features = [c for c in features
                    if not ("celsius" in c.lower() and _stem(c) in kept_stems)]

    dates = pd.to_datetime(frame[cfg.date_column], errors="coerce")
    numeric = frame[features].apply(pd.to_numeric, errors="coerce")
    bad = dates.isna() | numeric.isna().any(axis=1)
    if bad.any():
        rows = (np.flatnonzero(bad.to_numpy()) + 2).tolist()
        shown = ", ".join(map(str, rows[:20])) + (" ..." if len(rows) > 20 else "")
        raise DataError(f"{path}: unparseable values on line(s) {shown}")
    if len(dates) < 2 or not (np.diff(dates.to_numpy().astype("datetime64[ns]").astype(np.int64)) > 0).all():
        raise DataError(f"{path}: timestamps are not strictly increasing")

    X = numeric.to_numpy(dtype=float)
    dry = numeric[target].to_numpy(dtype=float)
    h = cfg.horizon
    meta = {"task": "weather", "horizon": h, "feature_names": features, "target_name": target,
            "config": asdict(cfg)}

    if cfg.train_months is None:
        pieces = [slice(0, len(X))]
        meta["split_boundary"] = None
    else:
        start = dates.iloc[0]
        boundary = start + pd.DateOffset(months=cfg.train_months)
        end = boundary + pd.DateOffset(months=cfg.test_months)
        n_train = int((dates < boundary).sum())
        n_test = int(((dates >= boundary) & (dates < end)).sum())
        if n_train <= h or n_test <= h:
            raise DataError(f"{path}: split leaves {n_train} train / {n_test} test rows for horizon {h}")
        pieces = [slice(0, n_train), slice(n_train, n_train + n_test)]
        meta.update(split_boundary=1, split_date=str(boundary), test_end_date=str(end))

    train_rows = X[pieces[0]][:-h]
    if cfg.normalize:
        _, f_mean, f_std = _zscore(train_rows)
        _, t_mean, t_std = _zscore(dry[pieces[0]][h:])
    else:
        f_mean, f_std = np.zeros(X.shape[1]), np.ones(X.shape[1])
        t_mean, t_std = np.float64(0.0), np.float64(1.0)
    meta.update(input_mean=f_mean.tolist(), input_std=f_std.tolist(),
                target_mean=[float(t_mean)], target_std=[float(t_std)])

    inputs, targets = [], []
    for sl in pieces:
        rows = X[sl]
        tgt = dry[sl]
        if len(rows) <= h:
            raise DataError(f"{path}: only {len(rows)} rows, horizon {h}")
        inputs.append((rows[:-h] - f_mean) / f_std)
        targets.append(((tgt[h:] - t_mean) / t_std)[:, None])
    meta["split_sizes"] = [len(u) for u in inputs]
    return SequenceDataset(inputs, targets, meta)


def synthetic_weather_csv(path, months: int = 30, seed: int = 0, start: str = "2010-01-01",
                          hours: int | None = None) -> Path:
    """Write a deterministic hourly weather file with the usual station columns.

    Temperatures follow seasonal and daily cycles plus AR(1) weather noise;
    the other variables are coupled to them. Used as an offline stand-in for
    the real station data.
    """
    rng = np.random.default_rng(seed)
    t0 = pd.Timestamp(start)
    if hours is None:
        hours = int((t0 + pd.DateOffset(months=months) - t0) / pd.Timedelta(hours=1))
    stamps = pd.date_range(t0, periods=hours, freq="h")
    doy = stamps.dayofyear.to_numpy()
    hod = stamps.hour.to_numpy()

    def ar1(phi, scale):
        e = rng.normal(scale=scale, size=hours)
        out = np.empty(hours)
        acc = 0.0
        for i in range(hours):
            acc = phi * acc + e[i]
            out[i] = acc
        return out

    dry = (55 + 20 * np.sin(2 * np.pi * (doy - 110) / 365.25)
           + 8 * np.sin(2 * np.pi * (hod - 9) / 24) + ar1(0.97, 1.2))
    spread = np.abs(8 + 3 * np.sin(2 * np.pi * (hod - 15) / 24) + ar1(0.95, 0.8))
    dew = dry - spread
    wet = dry - spread / 3
    rh = np.clip(100 - 5 * spread + rng.normal(0, 2, hours), 5, 100)
    wind = np.abs(8 + ar1(0.9, 1.5))
    wind_dir = np.mod(200 + np.cumsum(rng.normal(0, 8, hours)), 360)
    pressure = 29.9 + ar1(0.99, 0.02)
    visibility = np.clip(10 - 0.05 * np.maximum(rh - 80, 0) * 4 + rng.normal(0, 0.3, hours), 0, 10)

    def c(f):
        return (f - 32) * 5 / 9

    frame = pd.DataFrame({
        "date": stamps.strftime("%Y-%m-%d %H:%M:%S"),
        "Visibility": visibility.round(2),
        "DryBulbFarenheit": dry.round(1),
        "DryBulbCelsius": c(dry).round(1),
        "WetBulbFarenheit": wet.round(1),
        "DewPointFarenheit": dew.round(1),
        "DewPointCelsius": c(dew).round(1),
        "RelativeHumidity": rh.round(0),
        "WindSpeed": wind.round(1),
        "WindDirection": wind_dir.round(0),
        "StationPressure": pressure.round(2),
        "Altimeter": (pressure + 0.05).round(2),
        "WetBulbCelsius": c(wet).round(1),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


# ---------------------------------------------------------------------------
# splitting, windowing, export


def train_test_split(dataset: SequenceDataset, fraction: float | None = None,
                     boundary: int | None = None):
    """Chronological split of a single stream, or sample-level split of many sequences.

    With neither ``fraction`` nor ``boundary`` the boundary recorded in
    ``meta["split_boundary"]`` is used.
    """
    if len(dataset) == 0:
        raise ConfigurationError("cannot split an empty dataset")
    if boundary is None and fraction is None:
        boundary = dataset.meta.get("split_boundary")
        if boundary is None:
            raise ConfigurationError("no split fraction, boundary or recorded split")
    single = len(dataset) == 1
    size = dataset.lengths[0] if single else len(dataset)
    if boundary is None:
        if not 0.0 <= fraction <= 1.0:
            raise ConfigurationError(f"fraction must lie in [0, 1], got {fraction}")
        boundary = int(round(fraction * size))
    if not 0 < boundary < size:
        raise ConfigurationError(f"split at {boundary} of {size} leaves one side empty")
    if single:
        u, y = dataset.inputs[0], dataset.targets[0]
        mask = dataset.mask
        tr = SequenceDataset([u[:boundary]], [y[:boundary]], dict(dataset.meta),
                             None if mask is None else mask[:boundary])
        te = SequenceDataset([u[boundary:]], [y[boundary:]], dict(dataset.meta),
                             None if mask is None else mask[boundary:])
        return tr, te
    return dataset.subset(range(boundary)), dataset.subset(range(boundary, size))


def make_windows(dataset: SequenceDataset, window: int | None) -> SequenceDataset:
    """Cut every sequence into non-overlapping windows of ``window`` steps.

    A trailing remainder shorter than ``window`` is dropped. ``None`` (or a
    window at least as long as every sequence) returns the dataset unchanged.
    """
    if window is None or all(n <= window for n in dataset.lengths):
        return dataset
    if window < 1:
        raise ConfigurationError("window must be >= 1")
    inputs, targets = [], []
    for u, y in zip(dataset.inputs, dataset.targets):
        for start in range(0, len(u) - window + 1, window):
            inputs.append(u[start:start + window])
            targets.append(y[start:start + window])
    mask = None if dataset.mask is None else dataset.mask[:window]
    return SequenceDataset(inputs, targets, dict(dataset.meta), mask)


def _write_split(path, seqs):
    rows = []
    for i, s in enumerate(seqs):
        idx = np.column_stack([np.full(len(s), i), np.arange(len(s))])
        rows.append(np.column_stack([idx, s]))
    data = np.vstack(rows)
    cols = ["seq", "t"] + [f"c{k}" for k in range(seqs[0].shape[1])]
    fmt = ["%d", "%d"] + ["%.17g"] * seqs[0].shape[1]
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt=fmt)


def _read_split(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    seq = data[:, 0].astype(int)
    return [data[seq == i, 2:] for i in range(seq.max() + 1)]


def save_dataset(out_dir, train: SequenceDataset, test: SequenceDataset) -> Path:
    """Write ``{train,test}_{inputs,targets}.csv`` and ``meta.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", train), ("test", test)):
        _write_split(out / f"{name}_inputs.csv", ds.inputs)
        _write_split(out / f"{name}_targets.csv", ds.targets)
    meta = {"meta": train.meta,
            "train_mask": None if train.mask is None else train.mask.tolist(),
            "test_mask": None if test.mask is None else test.mask.tolist(),
            "sizes": {"train": len(train), "test": len(test)}}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_dataset(out_dir):
    out = Path(out_dir)
    meta = json.loads((out / "meta.json").read_text())
    result = []
    for name in ("train", "test"):
        mask = meta[f"{name}_mask"]
        result.append(SequenceDataset(_read_split(out / f"{name}_inputs.csv"),
                                      _read_split(out / f"{name}_targets.csv"),
                                      meta["meta"], None if mask is None else np.asarray(mask)))
    return tuple(result)
