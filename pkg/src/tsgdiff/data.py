"""CSV ingestion, global min-max scaling to [-1, 1] and sliding windows."""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTable,
    MissingFile,
    NonFinite,
    ParseError,
    WindowTooLarge,
)

TARGET_RANGE = (-1.0, 1.0)


@dataclass
class TimeSeriesTable:
    values: np.ndarray
    feature_names: list[str]
    source_path: str = ""

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class NormalizationParams:
    per_feature_min: np.ndarray
    per_feature_max: np.ndarray
    target_range: tuple[float, float] = TARGET_RANGE

    @property
    def degenerate(self) -> np.ndarray:
        return self.per_feature_max == self.per_feature_min


@dataclass
class WindowBatch:
    windows: np.ndarray
    stride: int
    norm: NormalizationParams | None = None
    origin_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def window_size(self) -> int:
        return self.windows.shape[1]


def load_csv(path) -> TimeSeriesTable:
    """Read a header + numeric-rows CSV into a float64 table.

    Row numbers in errors are 1-based file lines (the header is line 1);
    column numbers are 1-based.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path} has no header") from None
        names = [h.strip() for h in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(names):
                raise ParseError(line_no, len(row), f"row {line_no} has {len(row)} cells, expected {len(names)}")
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(line_no, col) from None
                if not math.isfinite(v):
                    raise NonFinite(line_no, col)
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise EmptyTable(f"{path} has a header but no data rows")
    return TimeSeriesTable(np.asarray(rows, dtype=np.float64), names, path)


def write_csv(path, values: np.ndarray, feature_names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(feature_names)
        for row in np.asarray(values, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])


def fit_normalizer(table) -> NormalizationParams:
    values = table.values if isinstance(table, TimeSeriesTable) else np.asarray(table, dtype=np.float64)
    if values.size == 0:
        raise EmptyTable("cannot fit a normalizer on an empty table")
    return NormalizationParams(values.min(axis=0).copy(), values.max(axis=0).copy())


def _check_width(values: np.ndarray, norm: NormalizationParams) -> None:
    if values.shape[-1] != norm.per_feature_min.shape[0]:
        raise DimensionMismatch(
            f"data has {values.shape[-1]} features, normalizer has {norm.per_feature_min.shape[0]}"
        )


def normalize(table, norm: NormalizationParams) -> np.ndarray:
    """Scale each feature to [-1, 1]; constant features map to 0."""
    values = table.values if isinstance(table, TimeSeriesTable) else np.asarray(table, dtype=np.float64)
    _check_width(values, norm)
    lo, hi = norm.per_feature_min, norm.per_feature_max
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (values - lo) / safe - 1.0
    return np.where(span > 0, out, 0.0)


def denormalize(matrix, norm: NormalizationParams) -> np.ndarray:
    """Inverse of :func:`normalize`. Out-of-range inputs are clamped with a warning."""
    x = np.asarray(matrix, dtype=np.float64)
    _check_width(x, norm)
    n_clamped = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    if n_clamped:
        warnings.warn(f"denormalize clamped {n_clamped} values outside [-1, 1]", RuntimeWarning, stacklevel=2)
        x = np.clip(x, -1.0, 1.0)
    lo, hi = norm.per_feature_min, norm.per_feature_max
    out = (x + 1.0) * 0.5 * (hi - lo) + lo
    return np.where(hi > lo, out, lo)


def slide_windows(matrix, w: int, stride: int = 1, norm: NormalizationParams | None = None) -> WindowBatch:
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if w < 1 or w > T:
        raise WindowTooLarge(f"window size {w} does not fit a series of length {T}")
    origins = np.arange(0, T - w + 1, stride, dtype=np.int64)
    idx = origins[:, None] + np.arange(w)[None, :]
    return WindowBatch(x[idx].copy(), stride, norm, origins)


def prepare_windows(table: TimeSeriesTable, w: int, stride: int = 1,
                    norm: NormalizationParams | None = None) -> WindowBatch:
    """Fit (or reuse) a global normalizer, scale, then slice."""
    if norm is None:
        norm = fit_normalizer(table)
    return slide_windows(normalize(table, norm), w, stride, norm)
