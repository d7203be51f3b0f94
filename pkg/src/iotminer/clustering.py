"""Activity-pattern discovery: K-means, DBSCAN, validity indices, and a
ranked configuration grid search.

Both algorithms are implemented here (seeded k-means++ with Lloyd
iteration and empty-cluster reseeding; density clustering with inclusive
eps boundary and self-counting neighborhoods) so that label
canonicalization, determinism, and the index definitions stay under one
roof. Distance-heavy inner loops live in :mod:`iotminer.kernels`.

Validity indices: silhouette (config metric, exact up to a row budget,
seeded subsample above it), Davies-Bouldin and Calinski-Harabasz (both
euclidean by definition — centroid / squared-norm based). Noise rows
(-1) are excluded from all three.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import (
    AllConfigsDegenerate,
    ConfigError,
    KExceedsN,
    UndefinedIndex,
)
from .featurization import FeatureMatrix, FeatureSpec, build_feature_matrix, normalize_matrix
from .ingestion import SensorFrame

NORMALIZATIONS = ("standard", "minmax", "robust")
NOISE = -1

#: Exact-silhouette row budget; larger inputs use a seeded subsample.
SILHOUETTE_EXACT_MAX = 20_000

DEFAULT_K_GRID = tuple(range(2, 11))
DEFAULT_EPS_FACTORS = (0.1, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster IDs aligned to matrix rows; -1 marks noise (DBSCAN)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        ids = np.unique(labels[labels != NOISE])
        if self.k != len(ids):
            raise ConfigError(f"k={self.k} but {len(ids)} distinct non-noise IDs")
        if len(ids) and (ids[0] != 0 or ids[-1] != len(ids) - 1):
            raise ConfigError("cluster IDs must be contiguous 0..k-1")

    def non_noise_mask(self) -> np.ndarray:
        return self.labels != NOISE

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels != NOISE], minlength=self.k)


@dataclass(frozen=True)
class ClusteringConfig:
    algorithm: str
    normalization: str
    kmeans_k: Optional[int] = None
    dbscan_eps: Optional[float] = None
    dbscan_min_pts: Optional[int] = None
    distance_metric: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("kmeans", "dbscan"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.normalization not in NORMALIZATIONS and self.normalization != "none":
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.algorithm == "kmeans":
            if self.kmeans_k is None or self.kmeans_k < 1:
                raise ConfigError("kmeans requires kmeans_k >= 1")
            if self.dbscan_eps is not None or self.dbscan_min_pts is not None or self.distance_metric is not None:
                raise ConfigError("dbscan parameters set on a kmeans config")
        else:
            if self.kmeans_k is not None:
                raise ConfigError("kmeans_k set on a dbscan config")
            if self.dbscan_eps is None or self.dbscan_eps <= 0:
                raise ConfigError("dbscan requires dbscan_eps > 0")
            if self.dbscan_min_pts is None or self.dbscan_min_pts < 1:
                raise ConfigError("dbscan requires dbscan_min_pts >= 1")
            if self.distance_metric not in ("euclidean", "manhattan"):
                raise ConfigError("dbscan requires distance_metric euclidean or manhattan")

    def describe(self) -> dict:
        out = {"algorithm": self.algorithm, "normalization": self.normalization, "seed": self.seed}
        if self.algorithm == "kmeans":
            out["kmeans_k"] = self.kmeans_k
        else:
            out["dbscan_eps"] = self.dbscan_eps
            out["dbscan_min_pts"] = self.dbscan_min_pts
            out["distance_metric"] = self.distance_metric
        return out


@dataclass(frozen=True)
class ClusteringResult:
    config: ClusteringConfig
    assignment: ClusterAssignment
    silhouette: Optional[float]
    davies_bouldin: Optional[float]
    calinski_harabasz: Optional[float]
    centroids: Optional[np.ndarray]
    silhouette_subsampled: bool = False


def _matrix_rows(matrix: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(matrix, FeatureMatrix):
        return matrix.rows
    return np.asarray(matrix, dtype=np.float64)


def canonicalize_labels(labels: np.ndarray):
    """Renumber cluster IDs by first appearance over rows; noise (-1) is
    preserved. Returns (labels, k)."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full(len(labels), NOISE, dtype=np.int64)
    mapping = {}
    for i, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out, len(mapping)


# --- K-means ---------------------------------------------------------------

def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = X[idx]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans(
    matrix: Union[FeatureMatrix, np.ndarray],
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    sse_out: Optional[list] = None,
):
    """Seeded k-means++ / Lloyd iteration.

    Returns (ClusterAssignment, centroids) with labels canonicalized by
    first appearance (centroid rows permuted to match). Empty clusters
    are re-seeded with the point currently farthest from its centroid.
    If ``sse_out`` is a list, the SSE after each assignment step is
    appended to it.
    """
    X = _matrix_rows(matrix)
    n = X.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise KExceedsN(f"k={k} exceeds row count {n}")
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    if tol < 0:
        raise ConfigError("tol must be >= 0")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(X, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        labels, d2 = kernels.assign_to_centroids(X, centers)
        # Re-seed empty clusters with the globally farthest point.
        counts = np.bincount(labels, minlength=k)
        for empty in np.nonzero(counts == 0)[0]:
            far = int(np.argmax(d2))
            centers[empty] = X[far]
            labels[far] = empty
            d2[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        if sse_out is not None:
            sse_out.append(float(d2.sum()))
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, labels, X)
        # Degenerate data (all points coincident) can leave clusters empty
        # even after re-seeding; keep their previous centers.
        still_empty = counts == 0
        new_centers /= np.maximum(counts, 1)[:, None]
        new_centers[still_empty] = centers[still_empty]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    labels, _ = kernels.assign_to_centroids(X, centers)
    canonical, k_eff = canonicalize_labels(labels)
    # Permute centroid rows into canonical ID order. Clusters emptied by
    # the final assignment drop out (k_eff < k only in degenerate data).
    order = np.empty(k_eff, dtype=np.int64)
    seen = set()
    pos = 0
    for lab in labels:
        if lab not in seen:
            seen.add(lab)
            order[pos] = lab
            pos += 1
    centers = centers[order]
    return ClusterAssignment(labels=canonical, k=k_eff), centers


# --- DBSCAN ----------------------------------------------------------------

def dbscan(
    matrix: Union[FeatureMatrix, np.ndarray],
    eps: float,
    min_pts: int,
    metric: str = "euclidean",
) -> ClusterAssignment:
    """Density clustering. Core point: >= min_pts neighbors at distance
    <= eps, counting itself. Unreachable non-core points are noise (-1)."""
    X = _matrix_rows(matrix)
    if eps <= 0:
        raise ConfigError("eps must be > 0")
    if min_pts < 1:
        raise ConfigError("min_pts must be >= 1")
    labels = kernels.dbscan_labels(X, eps, min_pts, metric)
    canonical, k = canonicalize_labels(labels)
    return ClusterAssignment(labels=canonical, k=k)


# --- validity indices ------------------------------------------------------

def _filtered(X: np.ndarray, assignment: ClusterAssignment):
    mask = assignment.non_noise_mask()
    labels = assignment.labels[mask]
    if len(labels) == 0 or assignment.k < 2:
        raise UndefinedIndex(f"index undefined for k={assignment.k}")
    # Subsampling can silently drop small clusters; renumber defensively.
    labels, k = canonicalize_labels(labels)
    if k < 2:
        raise UndefinedIndex(f"index undefined for k={k}")
    return X[mask], labels, k


def silhouette_detail(
    matrix: Union[FeatureMatrix, np.ndarray],
    assignment: ClusterAssignment,
    metric: str = "euclidean",
    max_exact: int = SILHOUETTE_EXACT_MAX,
    seed: int = 0,
):
    """Silhouette plus a flag telling whether a row subsample was used."""
    X = _matrix_rows(matrix)
    X, labels, k = _filtered(X, assignment)
    n = X.shape[0]
    subsampled = n > max_exact
    if subsampled:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(n, size=max_exact, replace=False))
        X, labels = X[rows], labels[rows]
        labels, k = canonicalize_labels(labels)
        if k < 2:
            raise UndefinedIndex("subsample collapsed to fewer than 2 clusters")
        n = max_exact
    sums = kernels.silhouette_cluster_sums(X, labels, k, metric)
    sizes = np.bincount(labels, minlength=k)
    own = sums[np.arange(n), labels]
    s = np.zeros(n, dtype=np.float64)
    multi = sizes[labels] > 1
    a = np.zeros(n)
    a[multi] = own[multi] / (sizes[labels][multi] - 1)
    other = sums / np.maximum(sizes, 1)[None, :]
    other[np.arange(n), labels] = np.inf
    empty_cols = sizes == 0
    if empty_cols.any():
        other[:, empty_cols] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    ok = multi & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean()), subsampled


def silhouette_score(
    matrix: Union[FeatureMatrix, np.ndarray],
    assignment: ClusterAssignment,
    metric: str = "euclidean",
    max_exact: int = SILHOUETTE_EXACT_MAX,
    seed: int = 0,
) -> float:
    """Mean silhouette s_i = (b_i - a_i) / max(a_i, b_i) over non-noise
    rows; singleton-cluster rows contribute 0."""
    score, _ = silhouette_detail(matrix, assignment, metric, max_exact, seed)
    return score


def _cluster_centroids(X: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centroids = np.zeros((k, X.shape[1]), dtype=np.float64)
    np.add.at(centroids, labels, X)
    centroids /= np.bincount(labels, minlength=k)[:, None]
    return centroids


def davies_bouldin(
    matrix: Union[FeatureMatrix, np.ndarray],
    assignment: ClusterAssignment,
) -> float:
    """DB = (1/k) sum_i max_{j != i} (S_i + S_j) / M_ij, euclidean.
    Coincident centroids make the pair ratio +inf."""
    X = _matrix_rows(matrix)
    X, labels, k = _filtered(X, assignment)
    centroids = _cluster_centroids(X, labels, k)
    scatter = np.zeros(k)
    dist = np.sqrt(((X - centroids[labels]) ** 2).sum(axis=1))
    np.add.at(scatter, labels, dist)
    scatter /= np.bincount(labels, minlength=k)
    total = 0.0
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if j == i:
                continue
            m = float(np.sqrt(((centroids[i] - centroids[j]) ** 2).sum()))
            ratio = math.inf if m == 0.0 else (scatter[i] + scatter[j]) / m
            worst = max(worst, ratio)
        total += worst
    return total / k


def calinski_harabasz(
    matrix: Union[FeatureMatrix, np.ndarray],
    assignment: ClusterAssignment,
) -> float:
    """CH = [B/(k-1)] / [W/(n-k)]; zero within-scatter reports +inf."""
    X = _matrix_rows(matrix)
    X, labels, k = _filtered(X, assignment)
    n = X.shape[0]
    if n <= k:
        raise UndefinedIndex(f"CH needs n > k, got n={n}, k={k}")
    centroids = _cluster_centroids(X, labels, k)
    sizes = np.bincount(labels, minlength=k)
    grand = X.mean(axis=0)
    between = float((sizes * ((centroids - grand) ** 2).sum(axis=1)).sum())
    within = float(((X - centroids[labels]) ** 2).sum())
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


# --- grid search -----------------------------------------------------------

def evaluate_config(raw_matrix: FeatureMatrix, config: ClusteringConfig) -> ClusteringResult:
    """Normalize per the config, run its algorithm, and score all three
    indices (None where undefined). Indices always use euclidean distance
    — the config's distance_metric shapes the dbscan fit only — so ranks
    compare every config with one measuring stick."""
    normalized = normalize_matrix(raw_matrix, config.normalization)
    if config.algorithm == "kmeans":
        assignment, centroids = kmeans(normalized, config.kmeans_k, seed=config.seed)
    else:
        assignment = dbscan(
            normalized, config.dbscan_eps, config.dbscan_min_pts, config.distance_metric
        )
        if assignment.k > 0:
            mask = assignment.non_noise_mask()
            centroids = _cluster_centroids(
                normalized.rows[mask], assignment.labels[mask], assignment.k
            )
        else:
            centroids = None

    silhouette = db = ch = None
    subsampled = False
    try:
        silhouette, subsampled = silhouette_detail(
            normalized, assignment, metric="euclidean", seed=config.seed
        )
    except UndefinedIndex:
        pass
    try:
        db = davies_bouldin(normalized, assignment)
    except UndefinedIndex:
        pass
    try:
        ch = calinski_harabasz(normalized, assignment)
    except UndefinedIndex:
        pass
    return ClusteringResult(
        config=config,
        assignment=assignment,
        silhouette=silhouette,
        davies_bouldin=db,
        calinski_harabasz=ch,
        centroids=centroids,
        silhouette_subsampled=subsampled,
    )


def default_ranking_key(indexed_result) -> tuple:
    """Lexicographic: silhouette desc, Davies-Bouldin asc, Calinski-
    Harabasz desc, then config order; undefined-silhouette configs last."""
    idx, result = indexed_result
    if result.silhouette is None:
        return (1, 0.0, 0.0, 0.0, idx)
    db = result.davies_bouldin if result.davies_bouldin is not None else math.inf
    ch = result.calinski_harabasz if result.calinski_harabasz is not None else -math.inf
    return (0, -result.silhouette, db, -ch, idx)


def rank_results(results: Sequence[ClusteringResult], ranking_policy=None) -> list:
    key = ranking_policy or default_ranking_key
    return [r for _, r in sorted(enumerate(results), key=key)]


def _subsample_rows(X: np.ndarray, limit: int, seed: int) -> np.ndarray:
    if X.shape[0] <= limit:
        return X
    rng = np.random.default_rng(seed)
    return X[np.sort(rng.choice(X.shape[0], size=limit, replace=False))]


def default_search_space(raw_matrix: FeatureMatrix, seed: int = 0) -> list:
    """K-means k=2..10 and DBSCAN over eps factors of the median pairwise
    distance (estimated per normalization and metric on <= 1000 sampled
    rows) x min_pts {4, 2d}, each across the three normalizations."""
    d = raw_matrix.rows.shape[1]
    configs = []
    for normalization in NORMALIZATIONS:
        for k in DEFAULT_K_GRID:
            if k <= raw_matrix.rows.shape[0]:
                configs.append(
                    ClusteringConfig(
                        algorithm="kmeans", normalization=normalization, kmeans_k=k, seed=seed
                    )
                )
    min_pts_grid = []
    for mp in (4, 2 * d):
        if mp not in min_pts_grid:
            min_pts_grid.append(mp)
    for normalization in NORMALIZATIONS:
        normalized = normalize_matrix(raw_matrix, normalization)
        sample = _subsample_rows(normalized.rows, 1000, seed)
        if sample.shape[0] < 2:
            continue
        for metric in ("euclidean", "manhattan"):
            median = kernels.median_pairwise_distance(sample, metric)
            for factor in DEFAULT_EPS_FACTORS:
                eps = factor * median
                if eps <= 0:
                    continue  # degenerate data; such configs cannot run
                for min_pts in min_pts_grid:
                    configs.append(
                        ClusteringConfig(
                            algorithm="dbscan",
                            normalization=normalization,
                            dbscan_eps=eps,
                            dbscan_min_pts=min_pts,
                            distance_metric=metric,
                            seed=seed,
                        )
                    )
    return configs


def grid_search(
    frame: SensorFrame,
    channels: Sequence[str],
    search_space: Optional[Sequence[ClusteringConfig]] = None,
    ranking_policy=None,
    feature_spec: Optional[FeatureSpec] = None,
) -> list:
    """Fit and score every config; return the full ranked table."""
    spec = feature_spec or FeatureSpec(base_channels=tuple(channels))
    raw = build_feature_matrix(frame, spec)
    return grid_search_matrix(raw, search_space, ranking_policy)


def grid_search_matrix(
    raw: FeatureMatrix,
    search_space: Optional[Sequence[ClusteringConfig]] = None,
    ranking_policy=None,
) -> list:
    """grid_search on an already-built (unnormalized) feature matrix."""
    if search_space is None:
        search_space = default_search_space(raw)
    search_space = list(search_space)
    if not search_space:
        raise ConfigError("search space is empty")
    results = [evaluate_config(raw, config) for config in search_space]
    ranked = rank_results(results, ranking_policy)
    if all(r.assignment.k < 2 for r in ranked):
        raise AllConfigsDegenerate("no configuration produced k >= 2 clusters")
    return ranked


def write_assignment(assignment: ClusterAssignment, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("row_id,cluster_id\n")
        for i, label in enumerate(assignment.labels):
            f.write(f"{i},{int(label)}\n")


def read_assignment(path) -> ClusterAssignment:
    labels = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "row_id,cluster_id":
            raise ConfigError(f"unexpected assignment header {header!r}")
        for line in f:
            if line.strip():
                labels.append(int(line.split(",")[1]))
    arr = np.asarray(labels, dtype=np.int64)
    k = int(arr.max()) + 1 if arr.size and (arr >= 0).any() else 0
    return ClusterAssignment(labels=arr, k=k)


# --- export ----------------------------------------------------------------

def _json_number(v: Optional[float]):
    if v is None:
        return None
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return v


def results_to_table(results: Sequence[ClusteringResult]) -> list:
    """Plain-data ranked table: config, k, and the three indices."""
    table = []
    for rank, r in enumerate(results):
        table.append(
            {
                "rank": rank,
                "config": r.config.describe(),
                "k": r.assignment.k,
                "silhouette": _json_number(r.silhouette),
                "davies_bouldin": _json_number(r.davies_bouldin),
                "calinski_harabasz": _json_number(r.calinski_harabasz),
                "silhouette_subsampled": r.silhouette_subsampled,
            }
        )
    return table


def results_to_json(results: Sequence[ClusteringResult]) -> str:
    return json.dumps(results_to_table(results), indent=2)
