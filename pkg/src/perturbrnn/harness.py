"""Training loop, multi-seed aggregation, scaling sweeps and metric files.

A run is fully determined by its :class:`ExperimentConfig` and seed: the
seed is split into independent streams for initialization, noise, batch
order and RFLO feedback, so runs are bit-reproducible and may execute in
separate processes.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import json
import math
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DegenerateNoiseError, InstabilityError
from .learning_rules import (
    DELTA_LOSS,
    JOINT,
    PER_LAYER,
    RAW_LOSS,
    AdamState,
    RfloState,
    adam_step,
    anp_update,
    bptt_gradients,
    decorrelation_update,
    np_global_update,
    np_local_update,
    rflo_update,
    wp_global_update,
    wp_local_update,
)
from .metrics import NAN, WEIGHT_EXPLOSION, RunStatus, decorrelation_loss, detect_instability, sequence_loss
from .rnn_core import (
    NODE,
    WEIGHT,
    RnnParams,
    apply_updates,
    forward_clean,
    forward_node_noisy,
    forward_weight_noisy,
    init_params,
    sample_noise,
)
from .tasks import (
    CopyingConfig,
    MackeyGlassConfig,
    WeatherConfig,
    copying_generate,
    mackey_glass_generate,
    make_windows,
    synthetic_weather_csv,
    train_test_split,
    weather_load,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("mackey-glass", "copying", "weather")
PRESETS = ("reference", "desk")
METRICS_HEADER = ["epoch", "split", "metric", "value", "seed"]
FINAL_WINDOW = 50


class LearnerSpec(NamedTuple):
    rule: str
    decorrelated: bool
    noise: str | None


LEARNERS = {
    "BP": LearnerSpec("bp", False, None),
    "DBP": LearnerSpec("bp", True, None),
    "NP": LearnerSpec("np_local", False, NODE),
    "DNP": LearnerSpec("np_local", True, NODE),
    "WP": LearnerSpec("wp_local", False, WEIGHT),
    "DWP": LearnerSpec("wp_local", True, WEIGHT),
    "ANP": LearnerSpec("anp", False, NODE),
    "DANP": LearnerSpec("anp", True, NODE),
    "NP_GLOBAL": LearnerSpec("np_global", False, NODE),
    "WP_GLOBAL": LearnerSpec("wp_global", False, WEIGHT),
    "RFLO": LearnerSpec("rflo", False, None),
}
NOISELESS = {name for name, spec in LEARNERS.items() if spec.noise is None}

_TASK_ALIASES = {"mg": "mackey-glass", "mackey_glass": "mackey-glass", "mackeyglass": "mackey-glass",
                 "copy": "copying", "copying-memory": "copying", "wth": "weather"}


def canonical_task(name: str) -> str:
    key = str(name).strip().lower()
    key = _TASK_ALIASES.get(key, key)
    if key not in TASKS:
        raise ConfigurationError(f"unknown task {name!r}; choose from {', '.join(TASKS)}")
    return key


def canonical_learner(name: str) -> str:
    key = str(name).strip().upper().replace("-", "_")
    if key not in LEARNERS:
        raise ConfigurationError(f"unknown learner {name!r}; choose from {', '.join(LEARNERS)}")
    return key


@functools.lru_cache(maxsize=None)
def preset_table(preset: str) -> dict:
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("perturbrnn").joinpath("configs").joinpath(f"{preset}.toml").read_text()
    return tomllib.loads(text)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run, apart from the seed.

    ``eta`` and ``epsilon`` left as ``None`` take the preset's value for the
    learner, so one config can be re-targeted at another learner.
    """

    task: str
    learner: str
    preset: str = "reference"
    hidden_size: int = 100
    batch_size: int = 10
    epochs: int = 500
    sigma2: float = 1e-2
    eta: float | None = None
    epsilon: float | None = None
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    anp_reward: str = DELTA_LOSS
    anp_n: int | None = None
    anp_norm: str = PER_LAYER
    rflo_tau: float = 10.0
    init_scheme: str = "uniform"
    dtype: str = "float64"
    norm_threshold: float = 1e6
    shuffle: bool | None = None
    data_seed: int = 0
    data: dict = field(default_factory=dict)
    out_dir: str | None = None

    def __post_init__(self):
        self.task = canonical_task(self.task)
        self.learner = canonical_learner(self.learner)
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}")
        for name in ("hidden_size", "batch_size", "epochs"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        for name in ("eta", "epsilon"):
            value = getattr(self, name)
            if value is not None and not (value >= 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be a finite non-negative number, got {value}")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.anp_reward not in (DELTA_LOSS, RAW_LOSS):
            raise ConfigurationError(f"anp_reward must be {DELTA_LOSS!r} or {RAW_LOSS!r}")
        if self.anp_norm not in (PER_LAYER, JOINT):
            raise ConfigurationError(f"anp_norm must be {PER_LAYER!r} or {JOINT!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"dtype must be 'float64' or 'float32', got {self.dtype!r}")
        if self.rflo_tau < 1:
            raise ConfigurationError("rflo_tau must be >= 1")
        self.data = dict(self.data)

    @property
    def spec(self) -> LearnerSpec:
        return LEARNERS[self.learner]

    def resolved_eta(self) -> float:
        if self.eta is not None:
            return float(self.eta)
        return float(preset_table(self.preset)[self.task]["eta"][self.learner])

    def resolved_epsilon(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        if not self.spec.decorrelated:
            return 0.0
        return float(preset_table(self.preset)[self.task]["epsilon"][self.learner])

    def shuffled(self) -> bool:
        return self.task == "copying" if self.shuffle is None else bool(self.shuffle)

    def with_learner(self, learner: str, **changes) -> ExperimentConfig:
        """Same settings for another learner; preset rates apply unless given in ``changes``."""
        changes.setdefault("eta", None)
        changes.setdefault("epsilon", None)
        changes.setdefault("seeds", list(self.seeds))
        changes.setdefault("data", dict(self.data))
        return dataclasses.replace(self, learner=learner, **changes)

    def to_dict(self, resolved: bool = True) -> dict:
        out = dataclasses.asdict(self)
        if resolved:
            out["eta"] = self.resolved_eta()
            out["epsilon"] = self.resolved_epsilon()
        return out

    def config_hash(self) -> str:
        """SHA-256 of the resolved config as canonical JSON, ignoring the output location."""
        payload = self.to_dict()
        payload.pop("out_dir", None)
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def make_config(task: str, learner: str, preset: str = "reference", **overrides) -> ExperimentConfig:
    """Build a config from the preset's task defaults, then apply ``overrides``.

    ``data`` overrides are merged key by key into the preset's task data.
    """
    task = canonical_task(task)
    learner = canonical_learner(learner)
    table = preset_table(preset)[task]
    unknown = set(overrides) - _FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "sigma2" in overrides and learner in NOISELESS:
        warnings.warn(f"sigma2 is ignored by the {learner} learner", stacklevel=2)
    base = {k: v for k, v in table.items() if k not in ("data", "eta", "epsilon")}
    data = dict(table.get("data", {}))
    data.update(overrides.pop("data", None) or {})
    base.update({k: v for k, v in overrides.items() if v is not None or k in ("eta", "epsilon")})
    return ExperimentConfig(task=task, learner=learner, preset=preset, data=data, **base)


def read_config_file(path) -> dict:
    """Load a flat TOML or JSON mapping of config keys."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            values = json.loads(text)
        else:
            values = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigurationError(f"config file {path} must hold a mapping")
    return values


def load_config(path=None, **flags) -> ExperimentConfig:
    """Resolve flags over file values over the preset defaults.

    Flags set to ``None`` count as absent.
    """
    values = read_config_file(path) if path is not None else {}
    data = dict(values.pop("data", None) or {})
    data.update(flags.pop("data", None) or {})
    values.update({k: v for k, v in flags.items() if v is not None})
    task = values.pop("task", None)
    learner = values.pop("learner", None)
    if task is None or learner is None:
        raise ConfigurationError("both task and learner must be given")
    preset = values.pop("preset", "reference")
    return make_config(task, learner, preset, data=data, **values)


# ---------------------------------------------------------------------------
# data


def _fields_of(cls, data):
    names = {f.name for f in dataclasses.fields(cls)}
    return {k: v for k, v in data.items() if k in names}


_DATA_KEYS = {
    "copying": {f.name for f in dataclasses.fields(CopyingConfig)} | {"num_train", "num_test"},
    "mackey-glass": {f.name for f in dataclasses.fields(MackeyGlassConfig)}
    | {"train_fraction", "window", "test_window"},
    "weather": {f.name for f in dataclasses.fields(WeatherConfig)}
    | {"path", "window", "test_window", "synthetic_months", "synthetic_seed"},
}


def split_data(task: str, data: dict, data_seed: int = 0):
    """Generate or load a task's data and split it into train and test (unwindowed)."""
    task = canonical_task(task)
    unknown = set(data) - _DATA_KEYS[task]
    if unknown:
        raise ConfigurationError(f"unknown {task} data keys: {sorted(unknown)}")
    if task == "copying":
        cfg = CopyingConfig(**_fields_of(CopyingConfig, data))
        n_train, n_test = int(data.get("num_train", 100)), int(data.get("num_test", 100))
        ds = copying_generate(cfg, n_train + n_test, seed=data_seed)
        return train_test_split(ds, boundary=n_train)
    if task == "mackey-glass":
        cfg = MackeyGlassConfig(**_fields_of(MackeyGlassConfig, data))
        ds = mackey_glass_generate(cfg, seed=data_seed)
        return train_test_split(ds, fraction=float(data.get("train_fraction", 0.8)))
    cfg = WeatherConfig(**_fields_of(WeatherConfig, data))
    path = data.get("path")
    if path is None:
        with tempfile.TemporaryDirectory() as tmp:
            csv_path = synthetic_weather_csv(Path(tmp) / "weather.csv",
                                             months=int(data.get("synthetic_months", 30)),
                                             seed=int(data.get("synthetic_seed", 0)))
            ds = weather_load(csv_path, cfg)
    else:
        ds = weather_load(path, cfg)
    if ds.meta.get("split_boundary") is None:
        return train_test_split(ds, fraction=float(data.get("train_fraction", 0.9)))
    return train_test_split(ds)


@functools.lru_cache(maxsize=16)
def _prepare_cached(task: str, data_json: str, data_seed: int):
    data = json.loads(data_json)
    train, test = split_data(task, data, data_seed)
    return make_windows(train, data.get("window")), make_windows(test, data.get("test_window"))


def prepare_data(config: ExperimentConfig):
    """Train and test datasets for ``config`` (cached per process; treat as read-only)."""
    data_json = json.dumps(config.data, sort_keys=True)
    return _prepare_cached(config.task, data_json, config.data_seed)


def _stack(dataset):
    lengths = set(dataset.lengths)
    if len(lengths) != 1:
        raise ConfigurationError(f"sequences differ in length {sorted(lengths)}; set a window")
    U = np.stack(dataset.inputs, axis=1)
    Y = np.stack(dataset.targets, axis=1)
    return U, Y


# ---------------------------------------------------------------------------
# training


@dataclass
class RunRecord:
    task: str
    learner: str
    seed: int
    config_hash: str
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    decorrelation_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    status: RunStatus = field(default_factory=RunStatus)
    params: RnnParams | None = field(default=None, repr=False, compare=False)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def final(self, split: str = "train", window: int = FINAL_WINDOW) -> float:
        """Mean of the last ``window`` epochs of a loss series (NaN when empty)."""
        series = self.train_loss if split == "train" else self.test_loss
        if not series:
            return math.nan
        return float(np.mean(series[-window:]))

    def series(self) -> dict:
        return {("train", "loss"): self.train_loss, ("test", "loss"): self.test_loss,
                ("test", "decorrelation"): self.decorrelation_loss}


def build_model(config: ExperimentConfig, seed: int, dims):
    """Initial parameters and the per-run random streams for ``seed``."""
    init_ss, noise_ss, order_ss, feedback_ss = np.random.SeedSequence(seed).spawn(4)
    spec = config.spec
    leak = config.rflo_tau if spec.rule == "rflo" else None
    params = init_params(dims, seed=init_ss, scheme=config.init_scheme,
                         decorrelation=spec.decorrelated, leak=leak, dtype=np.dtype(config.dtype))
    streams = {"noise": np.random.default_rng(noise_ss), "order": np.random.default_rng(order_ss),
               "feedback": feedback_ss}
    return params, streams


class _Stepper:
    """One learner's update for a batch; keeps optimizer and RFLO state."""

    def __init__(self, config: ExperimentConfig, params: RnnParams, streams):
        self.config = config
        self.spec = config.spec
        self.eta = config.resolved_eta()
        self.epsilon = config.resolved_epsilon()
        self.noise_rng = streams["noise"]
        self.adam = AdamState() if self.spec.rule == "bp" else None
        self.rflo = (RfloState.create(params, tau=config.rflo_tau, seed=streams["feedback"])
                     if self.spec.rule == "rflo" else None)

    def __call__(self, params: RnnParams, u, y, mask):
        cfg, rule = self.config, self.spec.rule
        clean = forward_clean(params, u)
        losses = sequence_loss(clean, y, mask, per_sequence=True)
        if rule == "bp":
            grads = bptt_gradients(params, clean, u, y, mask)
            updates, self.adam = adam_step(self.adam, grads, self.eta)
            eta = 1.0
        elif rule == "rflo":
            updates = rflo_update(params, clean, u, y, self.rflo, mask)
            eta = self.eta
        else:
            T, n = u.shape[0], u.shape[1]
            noise = sample_noise(self.spec.noise, params.dims, T, cfg.sigma2, self.noise_rng,
                                 batch=n, dtype=params.dtype)
            if self.spec.noise == NODE:
                noisy = forward_node_noisy(params, u, noise)
            else:
                noisy = forward_weight_noisy(params, u, noise)
            if rule == "np_local":
                updates = np_local_update(clean, noisy, noise, u, y, cfg.sigma2, mask)
            elif rule == "np_global":
                updates = np_global_update(clean, noisy, noise, u, y, cfg.sigma2, mask)
            elif rule == "wp_local":
                updates = wp_local_update(clean, noisy, noise, u, y, cfg.sigma2, mask)
            elif rule == "wp_global":
                updates = wp_global_update(clean, noisy, noise, u, y, cfg.sigma2, mask)
            else:
                updates = anp_update(clean, noisy, u, y, N=cfg.anp_n, reward=cfg.anp_reward, mask=mask,
                                     norm=cfg.anp_norm)
            eta = self.eta
        if params.decorrelated:
            updates.dD = decorrelation_update(clean.x_star, params.D)
        return apply_updates(params, updates, eta, self.epsilon), losses


def run_training(config: ExperimentConfig, seed: int) -> RunRecord:
    """Train one network; instability ends the run early with an Unstable status."""
    train, test = prepare_data(config)
    U, Y = _stack(train)
    Ut, Yt = _stack(test)
    mask_train, mask_test = train.mask, test.mask
    dims = (train.input_size, config.hidden_size, train.output_size)
    params, streams = build_model(config, seed, dims)
    stepper = _Stepper(config, params, streams)
    record = RunRecord(config.task, config.learner, int(seed), config.config_hash())

    M = U.shape[1]
    bs = min(config.batch_size, M)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        for epoch in range(1, config.epochs + 1):
            start_time = time.perf_counter()
            order = streams["order"].permutation(M) if config.shuffled() else np.arange(M)
            losses = np.empty(M)
            status = None
            for start in range(0, M, bs):
                idx = np.sort(order[start:start + bs])
                try:
                    params, batch_losses = stepper(params, U[:, idx], Y[:, idx], mask_train)
                except InstabilityError:
                    status = RunStatus.unstable(epoch, NAN)
                    break
                except DegenerateNoiseError:
                    # pre-activations so large that the injected noise rounds away
                    status = RunStatus.unstable(epoch, WEIGHT_EXPLOSION)
                    break
                losses[idx] = batch_losses
                if not (np.isfinite(batch_losses).all() and params.all_finite()):
                    status = RunStatus.unstable(epoch, NAN)
                    break
            if status is None:
                train_loss = float(np.mean(losses))
                status = detect_instability(params, train_loss, config.norm_threshold, epoch)
            if not status.stable:
                record.status = status
                break
            trace = forward_clean(params, Ut)
            test_loss = sequence_loss(trace, Yt, mask_test)
            if not math.isfinite(test_loss):
                record.status = RunStatus.unstable(epoch, NAN)
                break
            record.train_loss.append(train_loss)
            record.test_loss.append(test_loss)
            record.decorrelation_loss.append(decorrelation_loss(trace.states))
            record.seconds.append(time.perf_counter() - start_time)
    record.params = params
    return record


# ---------------------------------------------------------------------------
# metric files


def run_directory(out_dir, task: str, learner: str, seed: int) -> Path:
    return Path(out_dir) / task / learner / f"seed{seed}"


def _fmt(value: float) -> str:
    return repr(float(value))


def write_metrics(record: RunRecord, path) -> Path:
    """Write ``metrics.csv``, ``timing.csv`` and ``summary.json`` into directory ``path``.

    ``metrics.csv`` holds only seed-determined values, so it is byte-identical
    across repeated runs; wall-clock seconds go to ``timing.csv``.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for i in range(record.epochs):
            for (split, metric), series in record.series().items():
                if i < len(series):
                    writer.writerow([i + 1, split, metric, _fmt(series[i]), record.seed])
    with open(out / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "seconds"])
        for i, s in enumerate(record.seconds):
            writer.writerow([i + 1, f"{s:.6f}"])
    summary = {
        "config_hash": record.config_hash,
        "task": record.task,
        "learner": record.learner,
        "seed": record.seed,
        "epochs_completed": record.epochs,
        "final_performance": {"train": _json_number(record.final("train")),
                              "test": _json_number(record.final("test"))},
        "status": {"stable": record.status.stable, "epoch": record.status.epoch,
                   "cause": record.status.cause},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out


def _json_number(value):
    return None if value is None or not math.isfinite(value) else float(value)


def read_metrics(path) -> dict:
    """Parse a ``metrics.csv`` back into ``{(split, metric): [values by epoch]}``."""
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.csv"
    series: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ConfigurationError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            series.setdefault((row["split"], row["metric"]), []).append(float(row["value"]))
    return series


def schema_path(name: str):
    """Location of a shipped JSON schema (``summary`` or ``sweep_row``)."""
    return resources.files("perturbrnn").joinpath("schemas").joinpath(f"{name}.schema.json")


# ---------------------------------------------------------------------------
# multi-seed runs


@dataclass
class MultiSeedSummary:
    config: ExperimentConfig
    records: list

    @property
    def stable_records(self) -> list:
        return [r for r in self.records if r.status.stable]

    @property
    def n_unstable(self) -> int:
        return len(self.records) - len(self.stable_records)

    def aggregate(self) -> dict:
        """Per-epoch mean, min and max over stable runs for every (split, metric)."""
        out = {}
        stable = self.stable_records
        keys = [("train", "loss"), ("test", "loss"), ("test", "decorrelation")]
        for key in keys:
            if not stable:
                out[key] = {"mean": [], "min": [], "max": []}
                continue
            arr = np.array([r.series()[key] for r in stable], dtype=float)
            out[key] = {"mean": arr.mean(axis=0).tolist(), "min": arr.min(axis=0).tolist(),
                        "max": arr.max(axis=0).tolist()}
        return out

    def final(self, split: str = "train") -> dict:
        values = [r.final(split) for r in self.stable_records]
        if not values:
            return {"mean": math.nan, "min": math.nan, "max": math.nan}
        return {"mean": float(np.mean(values)), "min": float(np.min(values)),
                "max": float(np.max(values))}

    def write(self, out_dir) -> Path:
        base = Path(out_dir) / self.config.task / self.config.learner
        for r in self.records:
            write_metrics(r, base / f"seed{r.seed}")
        base.mkdir(parents=True, exist_ok=True)
        with open(base / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "split", "metric", "mean", "min", "max"])
            for (split, metric), stats in self.aggregate().items():
                for i, mean in enumerate(stats["mean"]):
                    writer.writerow([i + 1, split, metric, _fmt(mean), _fmt(stats["min"][i]),
                                     _fmt(stats["max"][i])])
        info = {"config_hash": self.config.config_hash(), "config": self.config.to_dict(),
                "seeds": [r.seed for r in self.records],
                "unstable_runs": self.n_unstable,
                "final_performance": {s: {k: _json_number(v) for k, v in self.final(s).items()}
                                      for s in ("train", "test")},
                "status": {str(r.seed): r.status.label() for r in self.records}}
        (base / "aggregate.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
        return base


def _run_one(args):
    config, seed = args
    record = run_training(config, seed)
    record.params = None
    return record


def run_multi_seed(config: ExperimentConfig, jobs: int = 1, keep_params: bool = False
                   ) -> MultiSeedSummary:
    """Train every seed in ``config.seeds``; writes files when ``config.out_dir`` is set.

    With ``jobs > 1`` seeds run in worker processes; results are identical.
    """
    if jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    tasks = [(config, s) for s in config.seeds]
    if jobs == 1 or len(tasks) == 1:
        records = [run_training(config, s) for s in config.seeds]
        if not keep_params:
            for r in records:
                r.params = None
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            records = list(pool.map(_run_one, tasks))
    summary = MultiSeedSummary(config, records)
    if config.out_dir is not None:
        summary.write(config.out_dir)
    return summary


# ---------------------------------------------------------------------------
# sweeps and comparisons

RESULT_HEADER = ["task", "learner", "hidden_size", "seeds", "stable_runs", "unstable_runs",
                 "stability_fraction", "final_train_mean", "final_train_min", "final_train_max",
                 "final_test_mean", "final_test_min", "final_test_max"]
SWEEP_HEADER = ["task", "learner", "hidden_size", "seed", "status", "stable", "epochs_completed",
                "final_train", "final_test"]


def _result_row(summary: MultiSeedSummary) -> dict:
    cfg = summary.config
    n = len(summary.records)
    row = {"task": cfg.task, "learner": cfg.learner, "hidden_size": cfg.hidden_size, "seeds": n,
           "stable_runs": n - summary.n_unstable, "unstable_runs": summary.n_unstable,
           "stability_fraction": (n - summary.n_unstable) / n}
    for split in ("train", "test"):
        for stat, value in summary.final(split).items():
            row[f"final_{split}_{stat}"] = _json_number(value)
    return row


def _run_rows(summary: MultiSeedSummary) -> list[dict]:
    cfg = summary.config
    return [{"task": cfg.task, "learner": cfg.learner, "hidden_size": cfg.hidden_size, "seed": r.seed,
             "status": r.status.label(), "stable": r.status.stable, "epochs_completed": r.epochs,
             "final_train": _json_number(r.final("train")), "final_test": _json_number(r.final("test"))}
            for r in summary.records]


def _write_rows(path: Path, rows: list, header: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if row[k] is None else
                             (_fmt(row[k]) if isinstance(row[k], float) else row[k]) for k in header])
    return path


def read_result_rows(path) -> list[dict]:
    """Parse a sweep or comparison CSV into typed dicts (empty cells become ``None``)."""
    ints = {"hidden_size", "seeds", "stable_runs", "unstable_runs", "seed", "epochs_completed"}
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in ("task", "learner", "status"):
                    row[k] = v
                elif k == "stable":
                    row[k] = v == "True"
                elif v == "":
                    row[k] = None
                elif k in ints:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


@dataclass
class SweepRecord:
    """``rows`` aggregates each (size, learner) pair; ``runs`` has one row per seed."""

    rows: list
    runs: list = field(default_factory=list)
    summaries: list = field(default_factory=list, repr=False)


def run_scaling_sweep(config: ExperimentConfig, sizes, learners=None, jobs: int = 1) -> SweepRecord:
    """Multi-seed runs for every (hidden size, learner) pair.

    With ``config.out_dir`` set, writes ``<out>/<task>/sweep.csv`` (one row per
    run) and ``sweep_summary.csv`` (one row per size and learner).
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigurationError("the size list is empty")
    if any(s < 1 for s in sizes):
        raise ConfigurationError("hidden sizes must be positive")
    learners = [config.learner] if not learners else [canonical_learner(n) for n in learners]
    rows, runs, summaries = [], [], []
    base = dataclasses.replace(config, out_dir=None)
    for size in sizes:
        for name in learners:
            cfg = base if name == config.learner else base.with_learner(name)
            cfg = dataclasses.replace(cfg, hidden_size=size)
            summary = run_multi_seed(cfg, jobs=jobs)
            summaries.append(summary)
            rows.append(_result_row(summary))
            runs.extend(_run_rows(summary))
    if config.out_dir is not None:
        out = Path(config.out_dir) / config.task
        _write_rows(out / "sweep.csv", runs, SWEEP_HEADER)
        _write_rows(out / "sweep_summary.csv", rows, RESULT_HEADER)
    return SweepRecord(rows, runs, summaries)


def run_comparison(config: ExperimentConfig, learners, jobs: int = 1) -> list[dict]:
    """Run each learner on identical task, data and seeds; one row per learner."""
    names = [canonical_learner(n) for n in learners]
    if len(names) < 2:
        raise ConfigurationError("a comparison needs at least two learners")
    base = dataclasses.replace(config, out_dir=None)
    rows = []
    for name in names:
        cfg = base if name == config.learner else base.with_learner(name)
        rows.append(_result_row(run_multi_seed(cfg, jobs=jobs)))
    if config.out_dir is not None:
        out = Path(config.out_dir) / config.task
        _write_rows(out / "compare.csv", rows, RESULT_HEADER)
        (out / "compare.txt").write_text(format_table(rows))
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned text table of final performance per learner."""
    cols = ["learner", "hidden_size", "stable_runs", "final_train_mean", "final_test_mean"]
    titles = ["learner", "N", "stable", "final train", "final test"]

    def cell(row, key):
        value = row[key]
        if value is None:
            return "-"
        return f"{value:.6g}" if isinstance(value, float) else str(value)

    body = [[cell(r, c) for c in cols] for r in rows]
    widths = [max(len(t), *(len(b[i]) for b in body)) for i, t in enumerate(titles)]
    lines = ["  ".join(t.ljust(w) for t, w in zip(titles, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"
