"""Datasets: CSV ingestion, normalization, AR(p) windowing and synthetic generators."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, IngestionError
from .kernels import KernelSpec

NORMALIZE_MODES = ("minmax", "zscore", "none")
AR_PRESETS = (5, 10)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,)
    name: str = "dataset"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ConfigurationError(f"features {X.shape} and labels {y.shape} disagree on row count")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise IngestionError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _to_float(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError(cell)
    return v


def load_csv(path, label_column: Union[str, int, None] = None, header: bool = True,
             name: Optional[str] = None) -> Dataset:
    """Read a numeric CSV; every non-label column becomes a feature, in file order.

    ``label_column`` is a header name, or a 0-based index (negative counts
    from the end). The default is the last column. Rows with a missing or
    non-numeric cell are dropped and counted.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path} is empty")

    names = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(names) if names else len(rows[0]) if rows else 0
    if width < 2:
        raise IngestionError(f"{path} needs at least one feature column and one label column")

    if label_column is None:
        label_idx = width - 1
    elif isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if names is None or label_column not in names:
            raise IngestionError(f"label column {label_column!r} not found in {path}")
        label_idx = names.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise IngestionError(f"label column index {label_idx} out of range for {width} columns")
        label_idx %= width

    X, y = [], []
    dropped = 0
    label_seen_numeric = False
    for row in rows:
        if len(row) != width:
            dropped += 1
            continue
        try:
            label = _to_float(row[label_idx])
            label_seen_numeric = True
            feats = [_to_float(c) for k, c in enumerate(row) if k != label_idx]
        except ValueError:
            dropped += 1
            continue
        X.append(feats)
        y.append(label)

    if rows and not label_seen_numeric:
        raise IngestionError(f"label column {label_column!r} in {path} is not numeric")
    if not y:
        raise IngestionError(f"no usable rows in {path}")
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} row(s) with missing or non-numeric cells", stacklevel=2)
    feature_names = [n for k, n in enumerate(names) if k != label_idx] if names else None
    meta = {"source": str(path), "rows_dropped": dropped, "label_column": label_idx,
            "feature_names": feature_names, "normalization": "none"}
    return Dataset(np.array(X, dtype=float).reshape(len(y), width - 1), np.array(y), name or str(path), meta)


def _scale_columns(A: np.ndarray, mode: str, label: str):
    if mode == "minmax":
        lo = A.min(axis=0)
        span = A.max(axis=0) - lo
        const = span == 0
        if np.any(const):
            warnings.warn(f"{label}: {int(const.sum())} constant column(s) mapped to 0 under minmax", stacklevel=3)
        out = np.where(const, 0.0, (A - lo) / np.where(const, 1.0, span))
        return np.clip(out, 0.0, 1.0), {"min": lo.tolist(), "max": (lo + span).tolist()}
    mean = A.mean(axis=0)
    std = A.std(axis=0)
    const = std == 0
    if np.any(const):
        warnings.warn(f"{label}: {int(const.sum())} constant column(s) mapped to 0 under zscore", stacklevel=3)
    out = np.where(const, 0.0, (A - mean) / np.where(const, 1.0, std))
    return out, {"mean": mean.tolist(), "std": std.tolist()}


def normalize(ds: Dataset, mode: str = "minmax") -> Dataset:
    """Rescale every feature column and the label.

    ``minmax`` maps each column onto [0, 1]; ``zscore`` standardizes with the
    population std. The fitted parameters land in ``metadata``.
    """
    if mode not in NORMALIZE_MODES:
        raise ConfigurationError(f"unknown normalization {mode!r}; choose from {', '.join(NORMALIZE_MODES)}",
                                 key="normalize")
    if mode == "none":
        return replace(ds, metadata={**ds.metadata, "normalization": "none"})
    if mode == "zscore" and len(ds) < 2:
        raise ConfigurationError("zscore normalization needs at least 2 rows", key="normalize")
    X, xp = _scale_columns(ds.features, mode, f"{ds.name} features")
    y, yp = _scale_columns(ds.labels[:, None], mode, f"{ds.name} labels")
    meta = {**ds.metadata, "normalization": mode, "feature_params": xp, "label_params": yp}
    return Dataset(X, y[:, 0], ds.name, meta)


def ar_window(series: Sequence[float], p: int, name: str = "series") -> Dataset:
    """Row ``k``: features ``(s[k+p-1], ..., s[k])``, label ``s[k+p]``; newest lag first."""
    s = np.asarray(series, dtype=float).reshape(-1)
    if int(p) != p or p < 1:
        raise ConfigurationError(f"AR order must be >= 1, got {p!r}", key="ar_order")
    p = int(p)
    if s.shape[0] <= p:
        raise ConfigurationError(f"series of length {s.shape[0]} is too short for AR({p})", key="ar_order")
    n = s.shape[0] - p
    idx = np.arange(n)[:, None] + np.arange(p - 1, -1, -1)[None, :]
    return Dataset(s[idx], s[p:], name, {"ar_order": p, "normalization": "none"})


def load_series_csv(path, column: Union[str, int, None] = None, header: bool = True) -> np.ndarray:
    """One numeric column of a CSV as a 1-D array, bad cells dropped.

    ``column`` defaults to the last column.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if header and rows:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        names = None
    if not rows:
        raise IngestionError(f"{path} has no data rows")
    if column is None:
        idx = -1
    elif isinstance(column, str) and not column.lstrip("-").isdigit():
        if names is None or column not in names:
            raise IngestionError(f"column {column!r} not found in {path}")
        idx = names.index(column)
    else:
        idx = int(column)
    values, dropped = [], 0
    for row in rows:
        try:
            values.append(_to_float(row[idx]))
        except (ValueError, IndexError):
            dropped += 1
    if not values:
        raise IngestionError(f"column {column!r} in {path} has no numeric values")
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} non-numeric series value(s)", stacklevel=2)
    return np.array(values)


def synth_rkhs(d: int, N: int, kernel: KernelSpec, num_centers: int, noise_std: float, seed,
               alphas=None, centers=None, points=None, name: str = "synthetic") -> Dataset:
    """Labels ``y = sum_k alpha_k kappa(x, c_k) + noise`` with the exact kernel.

    Inputs and centers are uniform on ``[0, 1]^d`` and weights standard
    normal unless given explicitly. The expansion is recorded in
    ``metadata`` so a test can re-evaluate it.
    """
    if d < 1 or N < 1 or num_centers < 1:
        raise ConfigurationError("synthetic data needs d, N and num_centers >= 1")
    if noise_std < 0:
        raise ConfigurationError(f"noise_std must be >= 0, got {noise_std!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    C = rng.uniform(0.0, 1.0, (num_centers, d)) if centers is None else np.asarray(centers, dtype=float)
    a = rng.standard_normal(num_centers) if alphas is None else np.asarray(alphas, dtype=float)
    X = rng.uniform(0.0, 1.0, (N, d)) if points is None else np.asarray(points, dtype=float)
    if C.shape != (num_centers, d) or a.shape != (num_centers,) or X.shape != (N, d):
        raise ConfigurationError("explicit centers/alphas/points have the wrong shape")
    sq = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=-1)
    y = np.exp(-sq / (2.0 * kernel.variance)) @ a
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(N)
    meta = {"generator": "rkhs", "variance": kernel.variance, "centers": C.tolist(), "alphas": a.tolist(),
            "noise_std": noise_std, "normalization": "none"}
    return Dataset(X, y, name, meta)
