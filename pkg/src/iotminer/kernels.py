"""Hot numeric kernels, each with a numba-compiled and a pure-numpy path.

The numba path is the default when numba imports; set ``IOTMINER_NUMBA=0``
to force the numpy fallbacks (chunked/vectorized, not naive loops). Both
paths implement the same definitions; the numpy euclidean paths use the
squared-expansion identity, so values can differ from the loop versions
at float rounding level.

Metric argument is ``"euclidean"`` or ``"manhattan"`` everywhere.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time choice
    _HAVE_NUMBA = False

METRIC_CODES = {"euclidean": 0, "manhattan": 1}


def numba_enabled() -> bool:
    """True when the numba paths are active (importable and not disabled
    via IOTMINER_NUMBA=0/false/off)."""
    if not _HAVE_NUMBA:
        return False
    return os.environ.get("IOTMINER_NUMBA", "1").strip().lower() not in ("0", "false", "off")


def _metric_code(metric: str) -> int:
    if metric not in METRIC_CODES:
        raise ValueError(f"unknown metric {metric!r}")
    return METRIC_CODES[metric]


def _as_c_float64(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64))


# --- numba path ------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _row_distance(X, i, j, metric):
        acc = 0.0
        if metric == 0:
            for t in range(X.shape[1]):
                diff = X[i, t] - X[j, t]
                acc += diff * diff
            return np.sqrt(acc)
        for t in range(X.shape[1]):
            acc += abs(X[i, t] - X[j, t])
        return acc

    @njit(cache=True)
    def _assign_nb(X, C):
        n, d = X.shape
        k = C.shape[0]
        labels = np.empty(n, np.int64)
        dist_sq = np.empty(n, np.float64)
        for i in range(n):
            best = 0
            best_v = np.inf
            for c in range(k):
                acc = 0.0
                for t in range(d):
                    diff = X[i, t] - C[c, t]
                    acc += diff * diff
                if acc < best_v:
                    best_v = acc
                    best = c
            labels[i] = best
            dist_sq[i] = best_v
        return labels, dist_sq

    @njit(cache=True)
    def _silhouette_sums_nb(X, labels, k, metric):
        n = X.shape[0]
        out = np.zeros((n, k), np.float64)
        for i in range(n):
            for j in range(i + 1, n):
                dist = _row_distance(X, i, j, metric)
                out[i, labels[j]] += dist
                out[j, labels[i]] += dist
        return out

    @njit(cache=True)
    def _dbscan_nb(X, eps, min_pts, metric):
        n = X.shape[0]
        core = np.zeros(n, np.bool_)
        for i in range(n):
            count = 0
            for j in range(n):
                if _row_distance(X, i, j, metric) <= eps:
                    count += 1
            core[i] = count >= min_pts
        labels = np.full(n, -2, np.int64)
        seeds = np.empty(n, np.int64)
        cluster = -1
        for i in range(n):
            if labels[i] != -2 or not core[i]:
                continue
            cluster += 1
            labels[i] = cluster
            seeds[0] = i
            top = 1
            while top > 0:
                top -= 1
                p = seeds[top]
                for j in range(n):
                    if labels[j] == -2 and _row_distance(X, p, j, metric) <= eps:
                        labels[j] = cluster
                        if core[j]:
                            seeds[top] = j
                            top += 1
        for i in range(n):
            if labels[i] == -2:
                labels[i] = -1
        return labels

    @njit(cache=True)
    def _median_pairwise_nb(X, metric):
        n = X.shape[0]
        m = n * (n - 1) // 2
        out = np.empty(m, np.float64)
        idx = 0
        for i in range(n):
            for j in range(i + 1, n):
                out[idx] = _row_distance(X, i, j, metric)
                idx += 1
        return np.median(out)


# --- numpy fallback path ---------------------------------------------------

def _pairwise_chunk(Xc: np.ndarray, X: np.ndarray, metric: int) -> np.ndarray:
    """Distances from each row of Xc to each row of X, (len(Xc), len(X))."""
    if metric == 0:
        sq = (
            (Xc * Xc).sum(axis=1)[:, None]
            + (X * X).sum(axis=1)[None, :]
            - 2.0 * (Xc @ X.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)
    return np.abs(Xc[:, None, :] - X[None, :, :]).sum(axis=2)


def _chunk_rows(n: int, d: int, metric: int) -> int:
    # Bound scratch memory: ~128 MB euclidean (c*n floats), ~256 MB for the
    # manhattan broadcast (c*n*d floats).
    if metric == 0:
        return max(1, 16_000_000 // max(n, 1))
    return max(1, 32_000_000 // max(n * d, 1))


def _assign_np(X, C):
    sq = (X * X).sum(axis=1)[:, None] + (C * C).sum(axis=1)[None, :] - 2.0 * (X @ C.T)
    np.maximum(sq, 0.0, out=sq)
    labels = np.argmin(sq, axis=1).astype(np.int64)
    return labels, sq[np.arange(len(X)), labels]


def _silhouette_sums_np(X, labels, k, metric):
    n = X.shape[0]
    member = np.zeros((n, k), np.float64)
    member[np.arange(n), labels] = 1.0
    out = np.empty((n, k), np.float64)
    step = _chunk_rows(n, X.shape[1], metric)
    for s in range(0, n, step):
        e = min(n, s + step)
        out[s:e] = _pairwise_chunk(X[s:e], X, metric) @ member
    return out


def _dbscan_np(X, eps, min_pts, metric):
    n = X.shape[0]

    def row_dist(p):
        if metric == 0:
            return np.sqrt(((X - X[p]) ** 2).sum(axis=1))
        return np.abs(X - X[p]).sum(axis=1)

    core = np.zeros(n, dtype=bool)
    step = _chunk_rows(n, X.shape[1], metric)
    for s in range(0, n, step):
        e = min(n, s + step)
        D = _pairwise_chunk(X[s:e], X, metric)
        core[s:e] = (D <= eps).sum(axis=1) >= min_pts
    labels = np.full(n, -2, np.int64)
    seeds = np.empty(n, np.int64)
    cluster = -1
    for i in range(n):
        if labels[i] != -2 or not core[i]:
            continue
        cluster += 1
        labels[i] = cluster
        seeds[0] = i
        top = 1
        while top > 0:
            top -= 1
            p = seeds[top]
            reach = np.nonzero((row_dist(p) <= eps) & (labels == -2))[0]
            labels[reach] = cluster
            for j in reach:
                if core[j]:
                    seeds[top] = j
                    top += 1
    labels[labels == -2] = -1
    return labels


def _median_pairwise_np(X, metric):
    n = X.shape[0]
    parts = []
    step = _chunk_rows(n, X.shape[1], metric)
    for s in range(0, n, step):
        e = min(n, s + step)
        D = _pairwise_chunk(X[s:e], X, metric)
        for i in range(s, e):
            parts.append(D[i - s, i + 1 :])
    return float(np.median(np.concatenate(parts)))


# --- dispatch --------------------------------------------------------------

def assign_to_centroids(X: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per row (euclidean). Returns (labels, squared
    distance to the chosen centroid)."""
    X = _as_c_float64(X)
    C = _as_c_float64(centroids)
    if numba_enabled():
        return _assign_nb(X, C)
    return _assign_np(X, C)


def silhouette_cluster_sums(X: np.ndarray, labels: np.ndarray, k: int, metric: str = "euclidean"):
    """out[i, c] = sum of distances from row i to all rows labeled c.

    Labels must be 0..k-1 (filter noise out first); the self-distance 0 is
    included in the sum for the point's own cluster.
    """
    X = _as_c_float64(X)
    labels = np.ascontiguousarray(np.asarray(labels, dtype=np.int64))
    code = _metric_code(metric)
    if numba_enabled():
        return _silhouette_sums_nb(X, labels, k, code)
    return _silhouette_sums_np(X, labels, k, code)


def dbscan_labels(X: np.ndarray, eps: float, min_pts: int, metric: str = "euclidean"):
    """Density clustering labels in scan order; noise is -1. Boundary is
    inclusive (d <= eps) and the neighbor count includes the point itself."""
    X = _as_c_float64(X)
    code = _metric_code(metric)
    if numba_enabled():
        return _dbscan_nb(X, float(eps), int(min_pts), code)
    return _dbscan_np(X, float(eps), int(min_pts), code)


def median_pairwise_distance(X: np.ndarray, metric: str = "euclidean") -> float:
    """Median over all unordered pairwise distances (n >= 2 rows)."""
    X = _as_c_float64(X)
    if X.shape[0] < 2:
        raise ValueError("median pairwise distance needs >= 2 rows")
    code = _metric_code(metric)
    if numba_enabled():
        return float(_median_pairwise_nb(X, code))
    return _median_pairwise_np(X, code)
