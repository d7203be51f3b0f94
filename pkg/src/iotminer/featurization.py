"""Temporal feature derivation and normalization.

Builds a numeric FeatureMatrix from a SensorFrame: base channels,
binary movement indicators (differential coding), first/second
derivatives with respect to real timestamp spacing, and trailing-window
aggregations, then a fitted column-wise normalization (standard, minmax
or robust).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ColumnCountMismatch,
    ConfigError,
    EmptySeries,
    NonPositiveDt,
    SeriesTooShort,
    UnrepairedMissing,
)
from .ingestion import SensorFrame, format_float, format_timestamp

WINDOW_STATS = ("mean", "std", "min", "max")
NORMALIZATION_KINDS = ("standard", "minmax", "robust")


@dataclass(frozen=True)
class FeatureSpec:
    base_channels: tuple
    add_differential_coding: bool = False
    diff_epsilon: float = 0.0
    derivative_orders: tuple = ()
    window: int = 1
    window_stats: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "base_channels", tuple(self.base_channels))
        object.__setattr__(self, "derivative_orders", tuple(self.derivative_orders))
        object.__setattr__(self, "window_stats", tuple(self.window_stats))
        if not self.base_channels:
            raise ConfigError("base_channels must be non-empty")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.diff_epsilon < 0:
            raise ConfigError("diff_epsilon must be non-negative")
        bad = set(self.derivative_orders) - {1, 2}
        if bad:
            raise ConfigError(f"derivative_orders must be a subset of {{1, 2}}, got {bad}")
        bad = set(self.window_stats) - set(WINDOW_STATS)
        if bad:
            raise ConfigError(f"window_stats must be a subset of {WINDOW_STATS}, got {bad}")


@dataclass
class NormalizationMethod:
    kind: str
    fitted_params: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in NORMALIZATION_KINDS and self.kind != "none":
            raise ConfigError(f"unknown normalization kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    row_timestamps: np.ndarray
    column_names: tuple
    normalization: Optional[NormalizationMethod] = None

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise ConfigError("rows must be a 2-d matrix")
        if self.rows.shape[1] != len(self.column_names):
            raise ConfigError("column_names must match matrix width")
        if len(self.row_timestamps) != self.rows.shape[0]:
            raise ConfigError("row_timestamps must match matrix height")


# --- per-series operations -------------------------------------------------

def differential_code(series: Sequence[float], epsilon: float) -> np.ndarray:
    """Binary movement indicator: 1 where |x[i] - x[i-1]| > epsilon."""
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 2:
        raise SeriesTooShort(f"differential coding needs >= 2 samples, got {len(x)}")
    out = np.zeros(len(x), dtype=np.float64)
    out[1:] = (np.abs(np.diff(x)) > epsilon).astype(np.float64)
    return out


def derivative(series: Sequence[float], dt: Sequence[float], order: int) -> np.ndarray:
    """Rate of change over per-step durations; ``order`` 2 differences the
    first-order result again on its valid region. Warm-up positions are 0.

    ``dt[i]`` is the duration of the step ending at ``series[i + 1]``, so
    ``len(dt) == len(series) - 1``.
    """
    x = np.asarray(series, dtype=np.float64)
    steps = np.asarray(dt, dtype=np.float64)
    if order not in (1, 2):
        raise ConfigError(f"order must be 1 or 2, got {order}")
    if len(x) < order + 1:
        raise SeriesTooShort(f"order-{order} derivative needs >= {order + 1} samples, got {len(x)}")
    if len(steps) != len(x) - 1:
        raise ConfigError(f"dt must have {len(x) - 1} entries, got {len(steps)}")
    if np.any(steps <= 0):
        idx = int(np.argmax(steps <= 0))
        raise NonPositiveDt(f"dt[{idx}] = {steps[idx]} is not positive")
    d1 = np.diff(x) / steps  # d1[i] is the slope into sample i+1
    if order == 1:
        out = np.zeros(len(x), dtype=np.float64)
        out[1:] = d1
        return out
    d2 = np.diff(d1) / steps[1:]
    out = np.zeros(len(x), dtype=np.float64)
    out[2:] = d2
    return out


def sliding_aggregate(series: Sequence[float], window: int, stat: str) -> np.ndarray:
    """Trailing-window statistic; prefix positions use the samples seen so
    far. std is the population standard deviation."""
    x = np.asarray(series, dtype=np.float64)
    if len(x) == 0:
        raise EmptySeries("cannot aggregate an empty series")
    if window < 1:
        raise ConfigError("window must be >= 1")
    if window > len(x):
        raise ConfigError(f"window {window} exceeds series length {len(x)}")
    if stat not in WINDOW_STATS:
        raise ConfigError(f"unknown stat {stat!r}")
    out = np.empty(len(x), dtype=np.float64)
    fn = {"mean": np.mean, "std": np.std, "min": np.min, "max": np.max}[stat]
    for i in range(len(x)):
        lo = max(0, i - window + 1)
        out[i] = fn(x[lo : i + 1])
    return out


# --- normalization ---------------------------------------------------------

def fit_normalizer(matrix: np.ndarray, kind: str) -> NormalizationMethod:
    """Fit per-column statistics: mean/population-std, min/max, or
    median/quartiles (linear-interpolation quantiles)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ConfigError("matrix must be 2-d")
    if m.shape[0] < 2:
        raise ConfigError(f"fitting needs >= 2 rows, got {m.shape[0]}")
    if kind == "standard":
        params = {"mean": np.mean(m, axis=0), "std": np.std(m, axis=0)}
    elif kind == "minmax":
        params = {"min": np.min(m, axis=0), "max": np.max(m, axis=0)}
    elif kind == "robust":
        q1, med, q3 = np.quantile(m, [0.25, 0.5, 0.75], axis=0)
        params = {"median": med, "q1": q1, "q3": q3}
    else:
        raise ConfigError(f"unknown normalization kind {kind!r}")
    return NormalizationMethod(kind=kind, fitted_params=params)


def _center_scale(normalizer: NormalizationMethod):
    p = normalizer.fitted_params
    if normalizer.kind == "standard":
        return p["mean"], p["std"]
    if normalizer.kind == "minmax":
        return p["min"], p["max"] - p["min"]
    return p["median"], p["q3"] - p["q1"]


def apply_normalizer(matrix: np.ndarray, normalizer: NormalizationMethod) -> np.ndarray:
    """(x - center) / scale per column; zero-scale columns map to zeros."""
    m = np.asarray(matrix, dtype=np.float64)
    if normalizer.kind == "none":
        return m.copy()
    if normalizer.fitted_params is None:
        raise ConfigError("normalizer is not fitted")
    center, scale = _center_scale(normalizer)
    if m.ndim != 2 or m.shape[1] != len(center):
        got = m.shape[1] if m.ndim == 2 else None
        raise ColumnCountMismatch(f"normalizer fitted for {len(center)} columns, got {got}")
    scale = np.asarray(scale, dtype=np.float64)
    safe = np.where(scale == 0.0, 1.0, scale)
    out = (m - center) / safe
    out[:, scale == 0.0] = 0.0
    return out


# --- composition -----------------------------------------------------------

def timestamp_deltas_seconds(timestamps: np.ndarray) -> np.ndarray:
    """Per-step durations in seconds between consecutive timestamps."""
    micros = np.diff(timestamps.astype("datetime64[us]").astype(np.int64))
    return micros.astype(np.float64) / 1e6


def build_feature_matrix(frame: SensorFrame, spec: FeatureSpec) -> FeatureMatrix:
    """Assemble the raw (unnormalized) feature matrix.

    Column order: base channels, differential codes, order-1 then order-2
    derivatives, then window stats (mean, std, min, max) — each family in
    base_channels order. Missing values in the base channels are fatal:
    repair them first.
    """
    missing = [c for c in spec.base_channels if c not in frame.channels]
    if missing:
        raise ConfigError(f"channels not in frame: {missing}")
    n = len(frame)
    series = {}
    for name in spec.base_channels:
        if frame.channel_meta[name].kind == "text":
            raise ConfigError(f"channel {name!r} is text, not numeric")
        values = frame.channels[name]
        if np.isnan(values).any():
            idx = int(np.argmax(np.isnan(values)))
            raise UnrepairedMissing(f"channel {name!r} has a missing value at row {idx}")
        series[name] = values.astype(np.float64)

    dt = timestamp_deltas_seconds(frame.timestamps) if spec.derivative_orders else None

    columns = []
    names = []
    for name in spec.base_channels:
        columns.append(series[name])
        names.append(name)
    if spec.add_differential_coding:
        for name in spec.base_channels:
            columns.append(differential_code(series[name], spec.diff_epsilon))
            names.append(f"{name}__diff")
    for order in (1, 2):
        if order in spec.derivative_orders:
            for name in spec.base_channels:
                columns.append(derivative(series[name], dt, order))
                names.append(f"{name}__d{order}")
    if spec.window > 1:
        for stat in WINDOW_STATS:
            if stat in spec.window_stats:
                for name in spec.base_channels:
                    columns.append(sliding_aggregate(series[name], spec.window, stat))
                    names.append(f"{name}__w{spec.window}_{stat}")

    rows = np.column_stack(columns) if columns else np.empty((n, 0))
    return FeatureMatrix(
        rows=rows,
        row_timestamps=frame.timestamps,
        column_names=tuple(names),
        normalization=None,
    )


def normalize_matrix(matrix: FeatureMatrix, kind: str) -> FeatureMatrix:
    """Fit on the matrix's own rows and apply; records the method used."""
    if kind == "none":
        return matrix
    normalizer = fit_normalizer(matrix.rows, kind)
    return FeatureMatrix(
        rows=apply_normalizer(matrix.rows, normalizer),
        row_timestamps=matrix.row_timestamps,
        column_names=matrix.column_names,
        normalization=normalizer,
    )


# --- persistence -----------------------------------------------------------

def write_feature_matrix(matrix: FeatureMatrix, csv_path: Union[str, Path]) -> None:
    """Write rows as CSV plus a .meta.json sidecar with column names and
    the fitted normalization."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(",".join(["timestamp"] + list(matrix.column_names)) + "\n")
        for i in range(matrix.rows.shape[0]):
            fields = [format_timestamp(matrix.row_timestamps[i])]
            fields.extend(format_float(v) for v in matrix.rows[i])
            f.write(",".join(fields) + "\n")
    meta = {
        "column_names": list(matrix.column_names),
        "normalization": None,
    }
    if matrix.normalization is not None:
        meta["normalization"] = {
            "kind": matrix.normalization.kind,
            "fitted_params": {
                k: [float(x) for x in v] for k, v in matrix.normalization.fitted_params.items()
            },
        }
    sidecar = csv_path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def read_feature_matrix(csv_path: Union[str, Path]) -> FeatureMatrix:
    csv_path = Path(csv_path)
    with open(csv_path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split(",")
        names = header[1:]
        timestamps = []
        rows = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split(",")
            try:
                timestamps.append(np.datetime64(fields[0], "us"))
                rows.append([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise ConfigError(
                    f"{csv_path}:{lineno}: not a feature-matrix row: {exc}"
                ) from exc
    normalization = None
    sidecar = csv_path.with_suffix(".meta.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        if meta.get("normalization"):
            normalization = NormalizationMethod(
                kind=meta["normalization"]["kind"],
                fitted_params={
                    k: np.asarray(v, dtype=np.float64)
                    for k, v in meta["normalization"]["fitted_params"].items()
                },
            )
    return FeatureMatrix(
        rows=np.asarray(rows, dtype=np.float64) if rows else np.empty((0, len(names))),
        row_timestamps=np.asarray(timestamps, dtype="datetime64[us]"),
        column_names=tuple(names),
        normalization=normalization,
    )
