"""Dataset loading, normalization, splitting and synthetic linear problems.

Arrays here are row-major in the usual numpy sense: ``inputs`` is
``(s, n)`` and ``targets`` is ``(s, m)``, one sample per row. Use
:meth:`Dataset.columns` for the column-per-sample view the linear oracle
expects.
"""

from __future__ import annotations

import csv
import logging
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SCALE_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray  # scale actually applied (1 for constant features)

    def apply(self, a: np.ndarray) -> np.ndarray:
        return (a - self.mean) / self.std

    def invert(self, a: np.ndarray) -> np.ndarray:
        return a * self.std + self.mean


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    provenance: str = ""
    feature_stats: Optional[FeatureStats] = None
    target_stats: Optional[FeatureStats] = None
    labels: Optional[np.ndarray] = None
    degenerate: bool = False

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DataError("inputs and targets disagree on sample count")

    @property
    def s(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.targets.shape[1]

    def columns(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` with one sample per column."""
        return self.inputs.T, self.targets.T

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            inputs=self.inputs[idx],
            targets=self.targets[idx],
            labels=None if self.labels is None else self.labels[idx],
        )


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int = 0


# --------------------------------------------------------------------------
# IDX
# --------------------------------------------------------------------------


def _read_exact(path: Path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _idx_header(buf: bytes, path, magic: int, ndims: int) -> Tuple[int, ...]:
    if len(buf) < 4:
        raise DataError(f"{path}: header truncated (expected at least 4 bytes, got {len(buf)})")
    (got,) = struct.unpack_from(">I", buf, 0)
    if got != magic:
        raise DataError(f"{path}: bad magic 0x{got:08x} at offset 0 (expected 0x{magic:08x})")
    need = 4 + 4 * ndims
    if len(buf) < need:
        raise DataError(f"{path}: header truncated (expected {need} bytes, got {len(buf)})")
    dims = struct.unpack_from(">" + "I" * ndims, buf, 4)
    expected = need + int(np.prod(dims))
    if len(buf) != expected:
        raise DataError(f"{path}: expected {expected} bytes from header dims {dims}, got {len(buf)}")
    return dims


def read_idx_images(path) -> np.ndarray:
    """Raw ``uint8`` images of shape ``(count, rows, cols)``."""
    buf = _read_exact(path)
    count, rows, cols = _idx_header(buf, path, IDX_IMAGES_MAGIC, 3)
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_exact(path)
    (count,) = _idx_header(buf, path, IDX_LABELS_MAGIC, 1)
    return np.frombuffer(buf, dtype=np.uint8, offset=8)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


def one_hot(labels: np.ndarray, classes: int = 10) -> np.ndarray:
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def load_idx(image_file, label_file, classes: int = 10) -> Dataset:
    """Images scaled to [0, 1] and flattened; labels one-hot encoded."""
    images = read_idx_images(image_file)
    labels = read_idx_labels(label_file)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{image_file} has {images.shape[0]} images but {label_file} has {labels.shape[0]} labels")
    if labels.size and labels.max() >= classes:
        raise DataError(f"{label_file}: label {labels.max()} outside {classes} classes")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(inputs=x, targets=one_hot(labels, classes), labels=labels.astype(np.int64), provenance=f"idx:{image_file}")


def load_mnist(directory) -> Tuple[Dataset, Dataset]:
    """Train and test sets from the four canonical uncompressed IDX files."""
    d = Path(directory)
    train = load_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte")
    test = load_idx(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte")
    return train, test


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def load_csv_housing(path, n_features: int = 8) -> Dataset:
    """Comma-separated file: header row, ``n_features`` feature columns, then the target."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (no header)") from None
        if len(header) != n_features + 1:
            raise DataError(f"{path}: expected {n_features + 1} columns, header has {len(header)}")
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_features + 1:
                raise DataError(f"{path}: row {r} has {len(row)} columns")
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: zero samples")
    a = np.array(rows, dtype=np.float64)
    ds = Dataset(inputs=a[:, :n_features], targets=a[:, n_features:], provenance=f"csv:{path}")
    if ds.s < 2:
        logger.warning("%s: only %d sample; normalization is degenerate", path, ds.s)
        ds = replace(ds, degenerate=True)
    return ds


# --------------------------------------------------------------------------
# Normalization / splitting
# --------------------------------------------------------------------------


def fit_stats(a: np.ndarray) -> FeatureStats:
    mean = a.mean(axis=0)
    std = a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros(a.shape[1])
    scale = np.where(std < SCALE_FLOOR, 1.0, std)
    return FeatureStats(mean=mean, std=scale)


def normalize(
    dataset: Dataset,
    train_idx: Optional[np.ndarray] = None,
    normalize_targets: bool = False,
) -> Dataset:
    """Standardize features with statistics from the training rows only.

    Constant features (std below 1e-8) are centered but not scaled.
    """
    rows = slice(None) if train_idx is None else np.asarray(train_idx)
    stats = fit_stats(dataset.inputs[rows])
    out = replace(dataset, inputs=stats.apply(dataset.inputs), feature_stats=stats)
    if normalize_targets:
        tstats = fit_stats(dataset.targets[rows])
        out = replace(out, targets=tstats.apply(dataset.targets), target_stats=tstats)
    return out


def split(dataset_or_size, fractions: Sequence[float], seed: int = 0) -> Split:
    """Seeded shuffle followed by contiguous cuts into train/validation/test."""
    s = dataset_or_size if isinstance(dataset_or_size, (int, np.integer)) else dataset_or_size.s
    fr = list(fractions)
    if len(fr) == 2:
        fr = [fr[0], 0.0, fr[1]]
    if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9 or min(fr) < 0:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    perm = np.random.default_rng(seed).permutation(s)
    n_train = int(round(fr[0] * s))
    n_val = int(round(fr[1] * s))
    return Split(
        train=perm[:n_train],
        validation=perm[n_train:n_train + n_val],
        test=perm[n_train + n_val:],
        seed=seed,
    )


# --------------------------------------------------------------------------
# Synthetic linear problems
# --------------------------------------------------------------------------


def synthetic_linear(n: int, m: int, s: int, noise: float = 0.0, seed: int = 0) -> Tuple[Dataset, np.ndarray]:
    """Gaussian inputs (then normalized) with ``Y = T* X + noise``.

    Returns the dataset and the ``m x n`` ground-truth weights ``T*``.
    """
    if s <= n:
        raise ValueError("need more samples than input dimensions")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((s, n))
    x = fit_stats(x).apply(x)
    T_star = rng.standard_normal((m, n))
    y = x @ T_star.T + noise * rng.standard_normal((s, m))
    return Dataset(inputs=x, targets=y, provenance=f"synthetic-linear:seed={seed}"), T_star


def default_data_dir() -> Path:
    """``$EXPTEST_DATA_DIR`` if set, else ``./data``."""
    return Path(os.environ.get("EXPTEST_DATA_DIR", "data"))
