"""Compare the numba and pure-numpy paths of the hot kernels.

The workload is the package's own: the default synthetic corpus pushed
through the default feature pipeline, then each kernel timed on the
resulting matrix under both backends. The flag read by the dispatchers
(IOTMINER_NUMBA) is flipped in-process between passes.

Usage:
    python3 benchmarks/bench_kernels.py [--rows 6000] [--repeats 3]
"""

import argparse
import os
import time

import numpy as np

from iotminer.featurization import FeatureSpec, build_feature_matrix, fit_normalizer, apply_normalizer
from iotminer.kernels import (
    assign_to_centroids,
    dbscan_labels,
    median_pairwise_distance,
    numba_enabled,
    silhouette_cluster_sums,
)
from iotminer.synthgen import CHANNELS, default_spec, generate


def build_workload(rows: int):
    spec = default_spec(total_duration_s=float(rows))
    frame, _ = generate(spec)
    raw = build_feature_matrix(frame, FeatureSpec(base_channels=tuple(CHANNELS)))
    X = apply_normalizer(raw.rows, fit_normalizer(raw.rows, "robust"))
    rng = np.random.default_rng(0)
    centroids = X[rng.choice(len(X), size=6, replace=False)]
    labels = assign_to_centroids(X, centroids)[0]
    eps = 0.8 * median_pairwise_distance(X[rng.choice(len(X), size=min(1000, len(X)), replace=False)])
    return X, centroids, labels, eps


def time_call(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=6000, help="workload size (seconds of synthetic data)")
    parser.add_argument("--repeats", type=int, default=3, help="timing repeats; best is reported")
    args = parser.parse_args()

    X, centroids, labels, eps = build_workload(args.rows)
    n, d = X.shape
    print(f"workload: {n} x {d} feature matrix, k=6, dbscan eps={eps:.3f}")

    kernels = {
        "assign_to_centroids": lambda: assign_to_centroids(X, centroids),
        "silhouette_sums (euclidean)": lambda: silhouette_cluster_sums(X, labels, 6, "euclidean"),
        "silhouette_sums (manhattan)": lambda: silhouette_cluster_sums(X, labels, 6, "manhattan"),
        "dbscan_labels": lambda: dbscan_labels(X, eps, 4),
        "median_pairwise_distance": lambda: median_pairwise_distance(X[:2000]),
    }

    timings = {}
    for flag, backend in (("1", "numba"), ("0", "numpy")):
        os.environ["IOTMINER_NUMBA"] = flag
        active = numba_enabled()
        if flag == "1" and not active:
            print("numba unavailable; skipping the compiled pass")
            continue
        label = backend if active == (flag == "1") else "numpy"
        for name, fn in kernels.items():
            fn()  # warm-up (JIT compile on the numba pass)
            timings.setdefault(name, {})[label] = time_call(fn, args.repeats)

    width = max(len(k) for k in kernels)
    print(f"\n{'kernel'.ljust(width)}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name in kernels:
        t = timings.get(name, {})
        nb, np_ = t.get("numba"), t.get("numpy")
        nb_s = f"{nb * 1000:8.1f}ms" if nb is not None else " " * 10
        np_s = f"{np_ * 1000:8.1f}ms" if np_ is not None else " " * 10
        ratio = f"{np_ / nb:7.1f}x" if nb and np_ else " " * 8
        print(f"{name.ljust(width)}  {nb_s}  {np_s}  {ratio}")

    # the two paths must agree on results, not just compete on time
    os.environ["IOTMINER_NUMBA"] = "1"
    if numba_enabled():
        ref_labels = dbscan_labels(X, eps, 4)
        ref_sums = silhouette_cluster_sums(X, labels, 6)
        os.environ["IOTMINER_NUMBA"] = "0"
        assert np.array_equal(ref_labels, dbscan_labels(X, eps, 4))
        drift = np.max(np.abs(ref_sums - silhouette_cluster_sums(X, labels, 6)))
        print(f"\npath agreement: dbscan labels identical, silhouette sums drift {drift:.2e}")


if __name__ == "__main__":
    main()
