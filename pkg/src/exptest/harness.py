"""Experiment runner: bounds, single runs, multi-seed sweeps and result files.

A run is described by an :class:`ExperimentConfig`. Dataset presets fix the
model family, loss, batch size, epoch budget and evaluation protocol of the
two benchmark tasks; the config can override the architecture, batch size
and budget but not the protocol.

Outputs per run directory:

* ``trace_seed<k>.csv`` with columns ``iteration,epoch,raw_loss,lr,event``
  (``event`` is blank except where the controller logged a decision),
* ``smoothed_seed<k>.csv`` with a trailing one-epoch moving average of the
  raw loss, for plotting only,
* ``validation_seed<k>.csv`` with per-epoch validation loss when the preset
  has a validation split,
* ``summary.json`` echoing the config with per-seed metrics and their mean
  and standard deviation.
"""

from __future__ import annotations

import csv
import functools
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import verify
from .data_io import DataError, default_data_dir, fit_stats, load_csv_housing, load_mnist, normalize, split
from .lr_control import BoundSpec, ControllerConfig, ExpTestController, TaskKind, default_max_window, eta_max
from .nn_engine import Architecture, OptimizerSpec, accuracy, initialize, mse, train
from .numstats import covariance_operator, max_eigenvalue

logger = logging.getLogger(__name__)

NOT_APPLICABLE = "not-applicable"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (a usage error)."""


@dataclass(frozen=True)
class Preset:
    task: str  # "classification" or "regression"
    loss: str
    output: str
    hidden: Tuple[int, ...]
    batch_size: Optional[int]  # None: full batch
    epochs: int
    protocol: str  # "final" or "best-validation"
    metric: str
    fractions: Optional[Tuple[float, float, float]] = None
    normalize_targets: bool = False


PRESETS: Dict[str, Preset] = {
    # multinomial logistic regression, accuracy of the model after the last epoch
    "mnist": Preset(
        task="classification",
        loss="cross-entropy",
        output="softmax",
        hidden=(),
        batch_size=32,
        epochs=5,
        protocol="final",
        metric="test_accuracy_pct",
    ),
    # relu MLP, full batch, test MSE of the best-validation checkpoint
    "housing": Preset(
        task="regression",
        loss="mse-halved",
        output="identity",
        hidden=(32, 32),
        batch_size=None,
        epochs=10_000,
        protocol="best-validation",
        metric="test_mse",
        fractions=(0.6, 0.2, 0.2),
    ),
}

CONTROLLER_OPTIMIZERS = ("exptest", "exptest-momentum")
LR_FREE_OPTIMIZERS = CONTROLLER_OPTIMIZERS + ("adadelta",)


def default_data_path(dataset: str) -> Path:
    base = default_data_dir()
    if dataset == "mnist":
        return base / "mnist"
    if dataset == "housing":
        return base / "housing" / "california_housing.csv"
    raise ConfigError(f"unknown dataset {dataset!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    data_path: Optional[str] = None
    hidden: Optional[Tuple[int, ...]] = None  # None: preset architecture
    optimizer: str = "exptest"
    lr_multiplier: Optional[float] = None  # None is the not-applicable sentinel
    batch_size: Optional[int] = None  # None: preset; 0: full batch
    epochs: Optional[int] = None
    seeds: Tuple[int, ...] = (0,)
    alpha: float = 0.05
    beta: float = 0.33
    output_dir: str = "runs"
    split_seed: int = 0
    train_subset: Optional[int] = None  # first k training samples, for quick runs
    patience: Optional[int] = None  # early stop on validation loss (validation presets only)

    def __post_init__(self):
        if self.dataset not in PRESETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; choose from {', '.join(PRESETS)}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        try:
            spec = OptimizerSpec(self.optimizer)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if spec.uses_controller and self.lr_multiplier is not None:
            raise ConfigError(f"{self.optimizer} chooses its own learning rate; lr_multiplier must be {NOT_APPLICABLE}")
        if not spec.lr_free and self.lr_multiplier is None:
            raise ConfigError(f"{self.optimizer} needs an lr_multiplier")
        if self.lr_multiplier is not None and not self.lr_multiplier > 0:
            raise ConfigError("lr_multiplier must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size is not None and self.batch_size < 0:
            raise ConfigError("batch_size must be non-negative")

    @property
    def preset(self) -> Preset:
        return PRESETS[self.dataset]

    @property
    def resolved_epochs(self) -> int:
        return self.preset.epochs if self.epochs is None else self.epochs

    @property
    def resolved_hidden(self) -> Tuple[int, ...]:
        return self.preset.hidden if self.hidden is None else tuple(self.hidden)

    @property
    def resolved_data_path(self) -> Path:
        return Path(self.data_path) if self.data_path else default_data_path(self.dataset)

    def resolved_batch(self) -> Optional[int]:
        if self.batch_size is None:
            return self.preset.batch_size
        return None if self.batch_size == 0 else self.batch_size


@dataclass
class RunRecord:
    seed: int
    losses: np.ndarray
    lrs: np.ndarray
    epochs: np.ndarray
    events: list
    val_losses: List[float]
    metric: float
    diverged: bool
    wall_time: float
    best_epoch: int = -1
    iterations_per_epoch: int = 1

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "metric": None if not math.isfinite(self.metric) else self.metric,
            "diverged": self.diverged,
            "iterations": int(len(self.losses)),
            "best_epoch": self.best_epoch if self.best_epoch >= 0 else None,
            "wall_time": round(self.wall_time, 3),
        }


# --------------------------------------------------------------------------
# Data preparation
# --------------------------------------------------------------------------


@dataclass
class Prepared:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    test_labels: Optional[np.ndarray]
    val: Optional[Tuple[np.ndarray, np.ndarray]]
    lambda_max: float


@functools.lru_cache(maxsize=4)
def prepare(dataset: str, data_path: str, split_seed: int = 0, train_subset: Optional[int] = None) -> Prepared:
    """Load, split and standardize a preset dataset; also returns ``lambda_max``
    of the standardized training-input covariance."""
    preset = PRESETS[dataset]
    path = Path(data_path)
    if not path.exists():
        raise DataError(f"{path}: no such file or directory")
    if dataset == "mnist":
        train_ds, test_ds = load_mnist(path)
        if train_subset:
            train_ds = train_ds.subset(np.arange(min(train_subset, train_ds.s)))
        stats = fit_stats(train_ds.inputs)  # per-pixel, training set only
        train_x, test_x = stats.apply(train_ds.inputs), stats.apply(test_ds.inputs)
        prep = Prepared(train_x, train_ds.targets, test_x, test_ds.targets, test_ds.labels, None, 0.0)
    else:
        ds = load_csv_housing(path)
        sp = split(ds, preset.fractions, seed=split_seed)
        tr_idx = sp.train[:train_subset] if train_subset else sp.train
        ds = normalize(ds, tr_idx, normalize_targets=preset.normalize_targets)
        val = (ds.inputs[sp.validation], ds.targets[sp.validation])
        prep = Prepared(ds.inputs[tr_idx], ds.targets[tr_idx], ds.inputs[sp.test], ds.targets[sp.test], None, val, 0.0)
    if prep.train_x.shape[0] < 2:
        raise DataError("need at least two training samples")
    prep.lambda_max = max_eigenvalue(covariance_operator(prep.train_x), prep.train_x.shape[1])
    return prep


def bound_for(config: ExperimentConfig, prep: Prepared) -> BoundSpec:
    s, m = prep.train_y.shape
    if config.preset.task == "classification":
        kind = TaskKind.CLASSIFICATION
    elif config.resolved_batch() is None or config.resolved_batch() >= s:
        kind = TaskKind.REGRESSION_FULL_BATCH
    else:
        kind = TaskKind.REGRESSION_STOCHASTIC
    return BoundSpec(kind, m, s, prep.lambda_max)


def _prep_for(config: ExperimentConfig) -> Prepared:
    return prepare(config.dataset, str(config.resolved_data_path), config.split_seed, config.train_subset)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


def run_single(config: ExperimentConfig, seed: int) -> RunRecord:
    """Train one model from scratch and evaluate it under the preset protocol."""
    preset = config.preset
    prep = _prep_for(config)
    bound = bound_for(config, prep)
    s = prep.train_x.shape[0]
    batch = config.resolved_batch()
    per_epoch = 1 if batch is None or batch >= s else math.ceil(s / batch)

    arch = Architecture((prep.train_x.shape[1],) + config.resolved_hidden + (prep.train_y.shape[1],), output=preset.output)
    net = initialize(arch, seed)
    spec = OptimizerSpec(config.optimizer)
    controller = None
    eta = None
    if spec.uses_controller:
        cc = ControllerConfig(
            alpha=config.alpha,
            beta=config.beta,
            correction_enabled=per_epoch > 1,
            max_window=default_max_window(per_epoch),
        )
        controller = ExpTestController(bound, cc)
    elif not spec.lr_free:
        eta = config.lr_multiplier * eta_max(bound)

    use_val = preset.protocol == "best-validation"
    t0 = time.perf_counter()
    res = train(
        net,
        prep.train_x,
        prep.train_y,
        spec,
        preset.loss,
        epochs=config.resolved_epochs,
        batch_size=batch,
        eta=eta,
        controller=controller,
        seed=seed,
        validation=prep.val if use_val else None,
        keep_best=use_val,
        patience=config.patience if use_val else None,
    )
    if use_val and res.best_params is not None:
        net.set_params(res.best_params)
    if res.diverged and not use_val:
        metric = math.nan
    elif preset.metric == "test_accuracy_pct":
        metric = 100.0 * accuracy(net, prep.test_x, prep.test_labels)
    else:
        metric = mse(net, prep.test_x, prep.test_y)
    return RunRecord(
        seed=seed,
        losses=res.losses,
        lrs=res.lrs,
        epochs=res.epochs,
        events=res.events,
        val_losses=res.val_losses,
        metric=metric,
        diverged=res.diverged,
        wall_time=time.perf_counter() - t0,
        best_epoch=res.best_epoch,
        iterations_per_epoch=per_epoch,
    )


def moving_average(trace, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` values (fewer at the start)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    a = np.asarray(trace, dtype=float)
    if a.size == 0:
        return a.copy()
    idx = np.arange(1, a.size + 1)
    lo = np.maximum(idx - window, 0)

    def window_sum(v):
        c = np.cumsum(np.insert(v, 0, 0.0))
        return c[idx] - c[lo]

    # non-finite losses are counted apart so they only affect windows that hold them
    finite = np.isfinite(a)
    out = window_sum(np.where(finite, a, 0.0)) / (idx - lo)
    pos = window_sum(a == np.inf) > 0
    neg = window_sum(a == -np.inf) > 0
    nan = window_sum(np.isnan(a)) > 0
    out[pos] = np.inf
    out[neg] = -np.inf
    out[nan | (pos & neg)] = np.nan
    return out


def aggregate(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and population standard deviation of the finite values."""
    v = np.array([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std())


def write_run(record: RunRecord, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    events: Dict[int, List[str]] = {}
    for ev in record.events:
        events.setdefault(ev.iteration, []).append(ev.event)
    with open(outdir / f"trace_seed{record.seed}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "epoch", "raw_loss", "lr", "event"])
        for i, (loss, lr, ep) in enumerate(zip(record.losses, record.lrs, record.epochs)):
            w.writerow([i, int(ep), repr(float(loss)), repr(float(lr)), ";".join(events.get(i, []))])
    smooth = moving_average(record.losses, record.iterations_per_epoch)
    with open(outdir / f"smoothed_seed{record.seed}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "smoothed_loss"])
        w.writerows([i, repr(float(v))] for i, v in enumerate(smooth))
    if record.val_losses:
        with open(outdir / f"validation_seed{record.seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "val_loss"])
            w.writerows([i, repr(float(v))] for i, v in enumerate(record.val_losses))


def _config_echo(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.resolved_hidden)
    d["seeds"] = list(config.seeds)
    d["epochs"] = config.resolved_epochs
    d["batch_size"] = config.resolved_batch()
    d["data_path"] = str(config.resolved_data_path)
    d["protocol"] = config.preset.protocol
    if d["lr_multiplier"] is None:
        d["lr_multiplier"] = NOT_APPLICABLE
    return d


def summarize(config: ExperimentConfig, records: Sequence[RunRecord]) -> dict:
    prep = _prep_for(config)
    bound = bound_for(config, prep)
    mean, std = aggregate([r.metric for r in records])
    return {
        "config": _config_echo(config),
        "lambda_max": bound.lambda_max,
        "eta_max": eta_max(bound),
        "metric_name": config.preset.metric,
        "per_seed": [r.summary() for r in records],
        "mean": None if math.isnan(mean) else mean,
        "std": None if math.isnan(std) else std,
        "n_diverged": sum(r.diverged for r in records),
    }


def _run_task(args):
    config, seed = args
    return run_single(config, seed)


def _run_many(tasks: List[Tuple[ExperimentConfig, int]], workers: int) -> List[RunRecord]:
    # every task builds its own network, controller and RNG, so cells are independent
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_bound(dataset: str, data_path: Optional[str] = None, batch_size: Optional[int] = None) -> dict:
    """``lambda_max``, task kind, c-factor and ``eta_max`` for a preset dataset."""
    config = ExperimentConfig(dataset=dataset, data_path=data_path, batch_size=batch_size)
    prep = _prep_for(config)
    bound = bound_for(config, prep)
    return {
        "dataset": dataset,
        "task_kind": bound.task_kind.value,
        "lambda_max": bound.lambda_max,
        "c_factor": bound.c_factor,
        "eta_max": eta_max(bound),
        "m": bound.m,
        "s": bound.s,
    }


def cmd_train(config: ExperimentConfig, workers: int = 1) -> dict:
    """One run per seed; writes per-seed CSV traces and ``summary.json``."""
    outdir = Path(config.output_dir)
    records = _run_many([(config, s) for s in config.seeds], workers)
    for r in records:
        write_run(r, outdir)
    summary = summarize(config, records)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


@dataclass(frozen=True)
class SweepGrid:
    optimizers: Tuple[str, ...] = ("exptest",)
    lr_multipliers: Tuple[Optional[float], ...] = (None,)
    alphas: Tuple[float, ...] = (0.05,)
    betas: Tuple[float, ...] = (0.33,)
    widths: Tuple[Optional[int], ...] = (None,)
    depths: Tuple[Optional[int], ...] = (None,)

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ConfigError(f"sweep grid {f.name} is empty")
        if (self.widths == (None,)) != (self.depths == (None,)):
            raise ConfigError("widths and depths must be given together")

    AXES = ("optimizer", "lr_multiplier", "alpha", "beta", "width", "depth")

    def cells(self):
        yield from itertools.product(self.optimizers, self.lr_multipliers, self.alphas, self.betas, self.widths, self.depths)


def _cell_config(base: ExperimentConfig, cell) -> Tuple[ExperimentConfig, tuple]:
    """Config that actually runs for a grid cell, plus its dedup key.

    Controller-driven and lr-free optimizers ignore the lr column, and only
    controller-driven ones read alpha/beta, so those axes collapse.
    """
    opt, lr, a, b, width, depth = cell
    spec = OptimizerSpec(opt)
    lr_eff = None if spec.lr_free else lr
    if not spec.uses_controller:
        a, b = base.alpha, base.beta
    hidden = base.hidden if width is None else (int(width),) * int(depth)
    cfg = replace(base, optimizer=opt, lr_multiplier=lr_eff, alpha=a, beta=b, hidden=hidden)
    return cfg, (opt, lr_eff, a if spec.uses_controller else None, b if spec.uses_controller else None, width, depth)


def cmd_sweep(base: ExperimentConfig, grid: SweepGrid, workers: int = 1) -> List[dict]:
    """Cartesian sweep over the grid and seeds; writes ``sweep.csv``, ``table.csv``
    and ``sweep.json``. Returns one row per grid cell."""
    cells = list(grid.cells())
    unique: Dict[tuple, ExperimentConfig] = {}
    keys = []
    for cell in cells:
        cfg, key = _cell_config(base, cell)
        unique.setdefault(key, cfg)
        keys.append(key)
    tasks = [(key, seed) for key in unique for seed in base.seeds]
    records = _run_many([(unique[key], seed) for key, seed in tasks], workers)
    by_key: Dict[tuple, List[RunRecord]] = {k: [] for k in unique}
    for (key, _), rec in zip(tasks, records):
        by_key[key].append(rec)

    rows = []
    for cell, key in zip(cells, keys):
        recs = by_key[key]
        mean, std = aggregate([r.metric for r in recs])
        rows.append(
            {
                **dict(zip(SweepGrid.AXES, cell)),
                "n_seeds": len(recs),
                "mean": mean,
                "std": std,
                "n_diverged": sum(r.diverged for r in recs),
                "per_seed": [r.metric for r in recs],
            }
        )
    outdir = Path(base.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_sweep_csv(rows, outdir / "sweep.csv")
    _write_table_csv(rows, grid, outdir / "table.csv")
    with open(outdir / "sweep.json", "w") as fh:
        json.dump(
            {
                "config": _config_echo(base),
                "grid": {k: [_fmt(v) for v in vals] for k, vals in asdict(grid).items()},
                "metric_name": base.preset.metric,
                "cells": [{**r, "lr_multiplier": _fmt(r["lr_multiplier"])} for r in rows],
            },
            fh,
            indent=2,
        )
    return rows


def _fmt(v) -> str:
    if v is None:
        return NOT_APPLICABLE
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


def _write_sweep_csv(rows: List[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(SweepGrid.AXES) + ["n_seeds", "mean", "std", "n_diverged", "per_seed"])
        for r in rows:
            w.writerow(
                [_fmt(r[a]) for a in SweepGrid.AXES]
                + [r["n_seeds"], repr(r["mean"]), repr(r["std"]), r["n_diverged"], ";".join(repr(v) for v in r["per_seed"])]
            )


def _write_table_csv(rows: List[dict], grid: SweepGrid, path: Path) -> None:
    """Pivot to the published layout: one column per value of the first varying
    axis among lr multiplier, beta and width; remaining varying axes label rows."""
    varying = {
        "optimizer": len(grid.optimizers) > 1,
        "lr_multiplier": len(grid.lr_multipliers) > 1,
        "alpha": len(grid.alphas) > 1,
        "beta": len(grid.betas) > 1,
        "width": len(grid.widths) > 1,
        "depth": len(grid.depths) > 1,
    }
    col_axis = next((a for a in ("lr_multiplier", "beta", "width") if varying[a]), "lr_multiplier")
    row_axes = [a for a in SweepGrid.AXES if a != col_axis and (varying[a] or a == "optimizer")]
    col_vals: List = []
    table: Dict[tuple, Dict] = {}
    for r in rows:
        if r[col_axis] not in col_vals:
            col_vals.append(r[col_axis])
        cell = "" if math.isnan(r["mean"]) else f"{r['mean']:.4f} ± {r['std']:.4f}"
        table.setdefault(tuple(r[a] for a in row_axes), {})[r[col_axis]] = cell
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(row_axes + [f"{col_axis}={_fmt(v)}" for v in col_vals])
        for rk, cols in table.items():
            w.writerow([_fmt(v) for v in rk] + [cols.get(v, "") for v in col_vals])


def cmd_verify_linear(
    properties: Optional[Sequence[str]] = None,
    seeds: Optional[int] = None,
    eta_multiplier: Optional[float] = None,
) -> Dict[str, verify.PropertyReport]:
    """Run the linear-theory property suite (all properties by default)."""
    if properties is None:
        properties = ("iterate-equivalence", "bound-dichotomy", "expectation-mc", "curvature-peak")
    if not properties:
        raise ConfigError("no properties requested")
    try:
        return verify.run_suite(properties, seeds=seeds, eta_multiplier=eta_multiplier)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------

SCALAR_KEYS = {
    "dataset": str,
    "data_path": str,
    "optimizer": str,
    "lr_multiplier": float,
    "batch_size": int,
    "epochs": int,
    "alpha": float,
    "beta": float,
    "output_dir": str,
    "split_seed": int,
    "train_subset": int,
    "patience": int,
}
LIST_KEYS = {
    "seeds": int,
    "hidden": int,
    "optimizers": str,
    "lr_multipliers": float,
    "alphas": float,
    "betas": float,
    "widths": int,
    "depths": int,
}


def parse_config_text(text: str) -> Dict[str, str]:
    """``key = value`` per line; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCALAR_KEYS and key not in LIST_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def read_config_file(path) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _convert(key: str, value: str):
    na = value.strip().lower() in (NOT_APPLICABLE, "n/a", "none", "")
    try:
        if key in LIST_KEYS:
            typ = LIST_KEYS[key]
            items = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(None if v.lower() in (NOT_APPLICABLE, "n/a", "none") else typ(v) for v in items)
        if na and key in ("lr_multiplier", "batch_size", "epochs", "train_subset", "patience", "data_path"):
            return None
        if key == "batch_size" and value.strip().lower() == "full":
            return 0
        return SCALAR_KEYS[key](value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def build_config(values: Dict[str, str]) -> Tuple[ExperimentConfig, SweepGrid]:
    """Experiment config and sweep grid from string key-value pairs."""
    conv = {k: _convert(k, v) for k, v in values.items()}
    grid_keys = {"optimizers", "lr_multipliers", "alphas", "betas", "widths", "depths"}
    base_kwargs = {k: v for k, v in conv.items() if k not in grid_keys}
    grid_kwargs = {k: v for k, v in conv.items() if k in grid_keys}
    opt = base_kwargs.get("optimizer", grid_kwargs.get("optimizers", ("exptest",))[0])
    base_kwargs.setdefault("optimizer", opt)
    if "lr_multiplier" not in base_kwargs and not OptimizerSpec(opt).lr_free:
        lrs = [v for v in grid_kwargs.get("lr_multipliers", ()) if v is not None]
        base_kwargs["lr_multiplier"] = lrs[0] if lrs else 1.0
    base = ExperimentConfig(**base_kwargs)
    grid_defaults = {
        "optimizers": (base.optimizer,),
        "lr_multipliers": (base.lr_multiplier,),
        "alphas": (base.alpha,),
        "betas": (base.beta,),
    }
    grid = SweepGrid(**{**grid_defaults, **grid_kwargs})
    return base, grid
