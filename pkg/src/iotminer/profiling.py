"""Per-cluster statistical profiles and PCA projection.

Profiles are computed on the ORIGINAL sensor values (pre-normalization)
so downstream activity labeling sees physical units. The projection runs
on whatever matrix it is handed — the pipeline passes the normalized
features that were clustered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .clustering import NOISE, ClusterAssignment
from .errors import ConfigError
from .featurization import FeatureMatrix
from .ingestion import SensorFrame, format_float

STAT_KEYS = ("min", "max", "mean", "median", "std", "q1", "q3")


@dataclass(frozen=True)
class ClusterProfile:
    cluster_id: int
    size: int
    share: float
    stats: dict  # sensor name -> {min, max, mean, median, std, q1, q3}


@dataclass(frozen=True)
class Projection:
    method: str
    coordinates: np.ndarray
    explained_variance_ratio: tuple
    component_loadings: np.ndarray


def _channel_stats(values: np.ndarray) -> dict:
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "mean": float(np.mean(values)),
        "median": float(median),
        "std": float(np.std(values)),
        "q1": float(q1),
        "q3": float(q3),
    }


def cluster_profiles(
    frame: SensorFrame,
    channels: Sequence[str],
    assignment: ClusterAssignment,
) -> list:
    """One profile per cluster, in original sensor units.

    Real clusters come first in ID order; if noise rows exist they are
    appended last as a pseudo-cluster with cluster_id -1. Quantiles use
    linear interpolation; std is the population value.
    """
    if len(assignment.labels) != len(frame):
        raise ConfigError(
            f"assignment covers {len(assignment.labels)} rows, frame has {len(frame)}"
        )
    missing = [c for c in channels if c not in frame.channels]
    if missing:
        raise ConfigError(f"channels not in frame: {missing}")
    n = len(frame)
    cluster_ids = list(range(assignment.k))
    if bool(np.any(assignment.labels == NOISE)):
        cluster_ids.append(NOISE)
    profiles = []
    for cid in cluster_ids:
        mask = assignment.labels == cid
        size = int(mask.sum())
        assert size > 0, f"cluster {cid} is empty after canonicalization"
        stats = {}
        for name in channels:
            stats[name] = _channel_stats(frame.channels[name][mask])
        profiles.append(
            ClusterProfile(cluster_id=cid, size=size, share=size / n, stats=stats)
        )
    return profiles


def profiles_to_json(profiles: Sequence[ClusterProfile]) -> str:
    """The exact JSON document later embedded into prompts."""
    return json.dumps(
        [
            {
                "cluster_id": p.cluster_id,
                "size": p.size,
                "share": p.share,
                "stats": p.stats,
            }
            for p in profiles
        ],
        indent=2,
    )


def profiles_from_json(text: str) -> list:
    """Inverse of :func:`profiles_to_json`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profiles document is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise ConfigError("profiles document must be a JSON array")
    profiles = []
    for entry in doc:
        try:
            profiles.append(
                ClusterProfile(
                    cluster_id=int(entry["cluster_id"]),
                    size=int(entry["size"]),
                    share=float(entry["share"]),
                    stats={
                        name: {k: float(v) for k, v in stats.items()}
                        for name, stats in entry["stats"].items()
                    },
                )
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed profile entry: {entry!r}") from exc
    return profiles


def pca_project(matrix: Union[FeatureMatrix, np.ndarray], dims: int = 2) -> Projection:
    """Project onto the top principal components via eigendecomposition
    of the column covariance.

    Sign convention: each component's largest-magnitude loading is
    positive (first index wins ties). Components beyond the data's rank
    get zero coordinates, zero loadings, and zero variance ratio.
    """
    X = matrix.rows if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, dtype=np.float64)
    if dims not in (2, 3):
        raise ConfigError(f"dims must be 2 or 3, got {dims}")
    n, d = X.shape
    if n < dims or d < dims:
        raise ConfigError(f"need n >= {dims} rows and d >= {dims} columns, got {n}x{d}")
    centered = X - X.mean(axis=0)
    cov = (centered.T @ centered) / n
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:dims]
    eigenvalues = eigenvalues[order]
    components = eigenvectors[:, order].T  # dims x d
    total = float(np.trace(cov))
    # Two zero-eigenvalue tests: relative to the spectrum, and an absolute
    # floor at the square of the data's rounding noise — centering an
    # exactly-constant column leaves residue of order eps * |x| that must
    # not masquerade as variance.
    noise = (np.finfo(np.float64).eps * max(1.0, float(np.abs(X).max()))) ** 2 * n
    cutoff = max(max(eigenvalues[0], 0.0) * 1e-12, noise)
    loadings = np.zeros((dims, d), dtype=np.float64)
    ratios = []
    for i in range(dims):
        if eigenvalues[i] <= cutoff or eigenvalues[i] <= 0.0:
            ratios.append(0.0)  # rank-deficient: pad with zeros
            continue
        component = components[i]
        pivot = int(np.argmax(np.abs(component)))
        if component[pivot] < 0:
            component = -component
        loadings[i] = component
        ratios.append(float(eigenvalues[i] / total) if total > 0 else 0.0)
    coordinates = centered @ loadings.T
    return Projection(
        method="pca",
        coordinates=coordinates,
        explained_variance_ratio=tuple(ratios),
        component_loadings=loadings,
    )


def write_projection(
    projection: Projection,
    assignment: ClusterAssignment,
    path: Union[str, Path],
) -> None:
    """Delimited export for the UI scatter plot:
    row_id, x, y[, z], cluster_id."""
    coords = projection.coordinates
    dims = coords.shape[1]
    header = ["row_id", "x", "y"] + (["z"] if dims == 3 else []) + ["cluster_id"]
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for i in range(coords.shape[0]):
            fields = [str(i)]
            fields.extend(format_float(v) for v in coords[i])
            fields.append(str(int(assignment.labels[i])))
            f.write(",".join(fields) + "\n")
