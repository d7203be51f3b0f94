import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from iotminer import kernels
from iotminer.clustering import (
    AllConfigsDegenerate,
    ClusterAssignment,
    ClusteringConfig,
    canonicalize_labels,
    calinski_harabasz,
    davies_bouldin,
    dbscan,
    default_search_space,
    evaluate_config,
    grid_search,
    kmeans,
    rank_results,
    results_to_table,
    silhouette_detail,
    silhouette_score,
)
from iotminer.errors import ConfigError, KExceedsN, UndefinedIndex
from iotminer.featurization import FeatureSpec, build_feature_matrix

from reference_impls import (
    best_two_partition,
    brute_calinski_harabasz,
    brute_davies_bouldin,
    brute_silhouette,
    partition_of,
)
from test_ingestion import make_frame

FOUR_POINTS = np.array([[0.0], [0.1], [10.0], [10.1]])


def assignment_of(labels):
    canonical, k = canonicalize_labels(np.asarray(labels))
    return ClusterAssignment(labels=canonical, k=k)


class TestKMeans:
    def test_k1_centroid_is_mean(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])
        assignment, centroids = kmeans(X, 1, seed=0)
        assert assignment.k == 1
        np.testing.assert_allclose(centroids[0], X.mean(axis=0))

    def test_two_blobs_match_enumerated_optimum(self):
        assignment, centroids = kmeans(FOUR_POINTS, 2, seed=0)
        best_partition, _ = best_two_partition([tuple(p) for p in FOUR_POINTS])
        assert partition_of(assignment.labels) == best_partition
        np.testing.assert_allclose(sorted(centroids[:, 0]), [0.05, 10.05])

    def test_k_equals_n(self):
        X = np.array([[0.0], [1.0], [2.0]])
        assignment, centroids = kmeans(X, 3, seed=1)
        assert assignment.k == 3
        sse = ((X - centroids[assignment.labels]) ** 2).sum()
        assert sse == 0.0

    def test_k_exceeds_n(self):
        with pytest.raises(KExceedsN):
            kmeans(np.zeros((3, 1)), 4)

    def test_sse_non_increasing(self):
        rng = np.random.default_rng(11)
        X = np.concatenate([rng.normal(c, 1.0, size=(60, 3)) for c in (0, 6, 12)])
        history = []
        kmeans(X, 3, seed=5, sse_out=history)
        assert len(history) >= 1
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(100, 4))
        a1, c1 = kmeans(X, 4, seed=9)
        a2, c2 = kmeans(X, 4, seed=9)
        np.testing.assert_array_equal(a1.labels, a2.labels)
        np.testing.assert_array_equal(c1, c2)

    def test_labels_canonical_first_appearance(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 2))
        assignment, _ = kmeans(X, 5, seed=3)
        seen = []
        for lab in assignment.labels:
            if lab not in seen:
                seen.append(lab)
        assert seen == sorted(seen)


class TestDbscan:
    def test_two_clusters_no_noise(self):
        assignment = dbscan(FOUR_POINTS, eps=0.2, min_pts=2)
        assert assignment.k == 2
        assert list(assignment.labels) == [0, 0, 1, 1]

    def test_all_noise(self):
        assignment = dbscan(FOUR_POINTS, eps=0.05, min_pts=2)
        assert assignment.k == 0
        assert list(assignment.labels) == [-1, -1, -1, -1]

    def test_chain_density_connected(self):
        X = np.array([[0.0], [0.15], [0.3]])
        assignment = dbscan(X, eps=0.2, min_pts=2)
        assert assignment.k == 1
        assert list(assignment.labels) == [0, 0, 0]

    def test_inclusive_eps_boundary(self):
        X = np.array([[0.0], [0.2]])
        assert dbscan(X, eps=0.2, min_pts=2).k == 1

    def test_row_order_invariance(self):
        rng = np.random.default_rng(8)
        X = np.concatenate([rng.normal(c, 0.3, size=(40, 2)) for c in (0, 5, 10)])
        base = dbscan(X, eps=1.0, min_pts=4)
        perm = rng.permutation(len(X))
        shuffled = dbscan(X[perm], eps=1.0, min_pts=4)
        labels_back = np.empty(len(X), dtype=int)
        labels_back[perm] = shuffled.labels
        assert partition_of(base.labels) == partition_of(labels_back)

    def test_validation(self):
        with pytest.raises(ConfigError):
            dbscan(FOUR_POINTS, eps=0.0, min_pts=2)
        with pytest.raises(ConfigError):
            dbscan(FOUR_POINTS, eps=0.1, min_pts=0)


class TestSilhouette:
    def test_hand_example(self):
        # Outer points: a = 0.1, b = 10.05 -> s = 9.95/10.05 (~0.990);
        # inner points: a = 0.1, b = 9.95 -> s = 9.85/9.95. The overall
        # score is the mean of the four.
        assignment = assignment_of([0, 0, 1, 1])
        score = silhouette_score(FOUR_POINTS, assignment)
        expected = (2 * (9.95 / 10.05) + 2 * (9.85 / 9.95)) / 4
        assert abs(score - expected) < 1e-12
        assert abs(score - 0.990) < 1e-3

    def test_zero_intra_positive_separation(self):
        X = np.array([[0.0], [0.0], [5.0], [5.0]])
        assert silhouette_score(X, assignment_of([0, 0, 1, 1])) == 1.0

    def test_label_permutation_invariance(self):
        score_a = silhouette_score(FOUR_POINTS, assignment_of([0, 0, 1, 1]))
        score_b = silhouette_score(FOUR_POINTS, assignment_of([1, 1, 0, 0]))
        assert score_a == score_b

    def test_singletons_contribute_zero(self):
        X = np.array([[0.0], [10.0]])
        assert silhouette_score(X, assignment_of([0, 1])) == 0.0

    def test_noise_excluded(self):
        X = np.vstack([FOUR_POINTS, [[100.0]]])
        with_noise = assignment_of([0, 0, 1, 1, -1])
        assert silhouette_score(X, with_noise) == silhouette_score(
            FOUR_POINTS, assignment_of([0, 0, 1, 1])
        )

    def test_undefined_for_single_cluster(self):
        with pytest.raises(UndefinedIndex):
            silhouette_score(FOUR_POINTS, assignment_of([0, 0, 0, 0]))

    def test_subsample_flag_and_stability(self):
        rng = np.random.default_rng(3)
        X = np.concatenate([rng.normal(c, 0.5, size=(150, 2)) for c in (0, 8)])
        labels = np.repeat([0, 1], 150)
        assignment = assignment_of(labels)
        exact, flag_exact = silhouette_detail(X, assignment)
        approx, flag_sub = silhouette_detail(X, assignment, max_exact=120, seed=0)
        assert flag_exact is False
        assert flag_sub is True
        assert abs(exact - approx) < 0.05
        again, _ = silhouette_detail(X, assignment, max_exact=120, seed=0)
        assert approx == again


class TestDaviesBouldin:
    def test_singletons_zero_scatter(self):
        X = np.array([[0.0], [10.0]])
        assert davies_bouldin(X, assignment_of([0, 1])) == 0.0

    def test_hand_example(self):
        assert abs(davies_bouldin(FOUR_POINTS, assignment_of([0, 0, 1, 1])) - 0.01) < 1e-12

    def test_scale_invariance(self):
        assignment = assignment_of([0, 0, 1, 1])
        base = davies_bouldin(FOUR_POINTS, assignment)
        scaled = davies_bouldin(FOUR_POINTS * 3.7, assignment)
        assert abs(base - scaled) < 1e-12

    def test_coincident_centroids_infinite(self):
        X = np.array([[0.0], [2.0], [0.0], [2.0]])
        assert davies_bouldin(X, assignment_of([0, 0, 1, 1])) == math.inf


class TestCalinskiHarabasz:
    def test_zero_within_scatter_infinite(self):
        X = np.array([[0.0], [0.0], [5.0], [5.0]])
        assert calinski_harabasz(X, assignment_of([0, 0, 1, 1])) == math.inf

    def test_hand_example(self):
        value = calinski_harabasz(FOUR_POINTS, assignment_of([0, 0, 1, 1]))
        assert abs(value - 20000.0) < 1e-9

    def test_label_permutation_invariance(self):
        a = calinski_harabasz(FOUR_POINTS, assignment_of([0, 0, 1, 1]))
        b = calinski_harabasz(FOUR_POINTS, assignment_of([1, 1, 0, 0]))
        assert a == b

    def test_needs_n_above_k(self):
        with pytest.raises(UndefinedIndex):
            calinski_harabasz(np.array([[0.0], [5.0]]), assignment_of([0, 1]))


small_points = st.lists(
    st.tuples(
        st.floats(min_value=-50, max_value=50),
        st.floats(min_value=-50, max_value=50),
    ),
    min_size=4,
    max_size=10,
)


class TestAgainstBruteForce:
    @given(points=small_points, data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_indices_match_reference(self, points, data):
        n = len(points)
        labels = data.draw(
            st.lists(st.integers(min_value=0, max_value=2), min_size=n, max_size=n)
        )
        canonical, k = canonicalize_labels(np.asarray(labels))
        assume(k >= 2)
        assume(n > k)
        X = np.asarray(points, dtype=float)
        assignment = ClusterAssignment(labels=canonical, k=k)
        labels_list = list(canonical)

        sil = silhouette_score(X, assignment)
        assert abs(sil - brute_silhouette(points, labels_list)) < 1e-9
        assert -1.0 <= sil <= 1.0

        db = davies_bouldin(X, assignment)
        ref_db = brute_davies_bouldin(points, labels_list)
        if math.isinf(ref_db):
            assert math.isinf(db)
        else:
            assert abs(db - ref_db) < 1e-9
            assert db >= 0

        ch = calinski_harabasz(X, assignment)
        ref_ch = brute_calinski_harabasz(points, labels_list)
        if math.isinf(ref_ch):
            assert math.isinf(ch)
        else:
            assert abs(ch - ref_ch) < 1e-9 * max(1.0, ref_ch)
            assert ch >= 0

    @given(points=small_points, metric=st.sampled_from(["euclidean", "manhattan"]))
    @settings(max_examples=40, deadline=None)
    def test_silhouette_metric_variants(self, points, metric):
        n = len(points)
        labels = [i % 2 for i in range(n)]
        X = np.asarray(points, dtype=float)
        sil = silhouette_score(X, assignment_of(labels), metric=metric)
        assert abs(sil - brute_silhouette(points, labels, metric)) < 1e-9


class TestKernelPaths:
    """The numba and numpy paths must agree."""

    @pytest.fixture()
    def data(self):
        rng = np.random.default_rng(17)
        X = np.concatenate([rng.normal(c, 0.8, size=(50, 3)) for c in (0, 4, 9)])
        return X

    def _both_paths(self, monkeypatch, fn):
        monkeypatch.setenv("IOTMINER_NUMBA", "0")
        numpy_result = fn()
        monkeypatch.setenv("IOTMINER_NUMBA", "1")
        numba_result = fn()
        return numpy_result, numba_result

    def test_flag_disables_numba(self, monkeypatch):
        monkeypatch.setenv("IOTMINER_NUMBA", "0")
        assert kernels.numba_enabled() is False

    def test_assign_agreement(self, data, monkeypatch):
        C = data[[0, 60, 120]]
        (l1, d1), (l2, d2) = self._both_paths(
            monkeypatch, lambda: kernels.assign_to_centroids(data, C)
        )
        np.testing.assert_array_equal(l1, l2)
        np.testing.assert_allclose(d1, d2, atol=1e-8)

    def test_silhouette_sums_agreement(self, data, monkeypatch):
        labels = np.repeat([0, 1, 2], 50)
        for metric in ("euclidean", "manhattan"):
            s1, s2 = self._both_paths(
                monkeypatch,
                lambda m=metric: kernels.silhouette_cluster_sums(data, labels, 3, m),
            )
            np.testing.assert_allclose(s1, s2, atol=1e-7)

    def test_dbscan_agreement(self, data, monkeypatch):
        for metric in ("euclidean", "manhattan"):
            l1, l2 = self._both_paths(
                monkeypatch, lambda m=metric: kernels.dbscan_labels(data, 1.0, 4, m)
            )
            np.testing.assert_array_equal(l1, l2)

    def test_median_pairwise_agreement(self, data, monkeypatch):
        for metric in ("euclidean", "manhattan"):
            m1, m2 = self._both_paths(
                monkeypatch, lambda m=metric: kernels.median_pairwise_distance(data, m)
            )
            assert abs(m1 - m2) < 1e-8


class TestGridSearch:
    def _frame(self, seed=0, per=40):
        rng = np.random.default_rng(seed)
        es = np.concatenate([rng.normal(c, 10.0, per) for c in (700, 1900, 2100)])
        op = np.concatenate([rng.normal(c, 4.0, per) for c in (240, 520, 560)])
        return make_frame({"es": es, "op": op})

    def test_singleton_space(self):
        frame = self._frame()
        config = ClusteringConfig(algorithm="kmeans", normalization="standard", kmeans_k=3)
        ranked = grid_search(frame, ["es", "op"], [config])
        assert len(ranked) == 1
        assert ranked[0].config == config
        assert ranked[0].assignment.k == 3

    def test_degenerate_config_ranks_last(self):
        frame = self._frame()
        good = ClusteringConfig(algorithm="kmeans", normalization="standard", kmeans_k=3)
        degenerate = ClusteringConfig(algorithm="kmeans", normalization="standard", kmeans_k=1)
        ranked = grid_search(frame, ["es", "op"], [degenerate, good])
        assert ranked[0].config == good
        assert ranked[-1].config == degenerate
        assert ranked[-1].silhouette is None

    def test_all_configs_degenerate(self):
        frame = self._frame()
        k1 = ClusteringConfig(algorithm="kmeans", normalization="standard", kmeans_k=1)
        with pytest.raises(AllConfigsDegenerate):
            grid_search(frame, ["es", "op"], [k1])

    def test_ranking_is_lexicographic(self):
        frame = self._frame()
        configs = [
            ClusteringConfig(algorithm="kmeans", normalization="standard", kmeans_k=k)
            for k in (2, 3, 4, 5)
        ]
        ranked = grid_search(frame, ["es", "op"], configs)
        sils = [r.silhouette for r in ranked]
        assert sils == sorted(sils, reverse=True)

    def test_default_search_space_composition(self):
        # Three channels so the min_pts grid {4, 2d} has two distinct
        # entries; with d = 2 the grid would collapse to {4}.
        rng = np.random.default_rng(0)
        frame = make_frame(
            {
                "es": rng.normal(700, 30, 60),
                "op": rng.normal(500, 20, 60),
                "tq": rng.normal(40, 5, 60),
            }
        )
        raw = build_feature_matrix(frame, FeatureSpec(base_channels=("es", "op", "tq")))
        space = default_search_space(raw)
        kmeans_configs = [c for c in space if c.algorithm == "kmeans"]
        dbscan_configs = [c for c in space if c.algorithm == "dbscan"]
        # 3 normalizations x k in 2..10
        assert len(kmeans_configs) == 27
        # 3 normalizations x 2 metrics x 4 eps factors x min_pts {4, 2d}
        assert len(dbscan_configs) == 3 * 2 * 4 * 2
        assert all(c.dbscan_eps > 0 for c in dbscan_configs)
        assert {c.dbscan_min_pts for c in dbscan_configs} == {4, 6}

    def test_results_table_shape(self):
        frame = self._frame()
        configs = [
            ClusteringConfig(algorithm="kmeans", normalization="minmax", kmeans_k=3),
            ClusteringConfig(
                algorithm="dbscan",
                normalization="standard",
                dbscan_eps=0.5,
                dbscan_min_pts=4,
                distance_metric="euclidean",
            ),
        ]
        ranked = grid_search(frame, ["es", "op"], configs)
        table = results_to_table(ranked)
        assert [row["rank"] for row in table] == [0, 1]
        for row in table:
            assert set(row) == {
                "rank", "config", "k", "silhouette", "davies_bouldin",
                "calinski_harabasz", "silhouette_subsampled",
            }

    def test_evaluate_config_indices_always_euclidean(self):
        # the distance metric shapes the dbscan fit, but scoring uses one
        # measuring stick so ranks are comparable across configs
        frame = self._frame()
        raw = build_feature_matrix(frame, FeatureSpec(base_channels=("es", "op")))
        config = ClusteringConfig(
            algorithm="dbscan",
            normalization="standard",
            dbscan_eps=0.8,
            dbscan_min_pts=4,
            distance_metric="manhattan",
        )
        result = evaluate_config(raw, config)
        assert result.assignment.k >= 2
        from iotminer.featurization import normalize_matrix

        normalized = normalize_matrix(raw, "standard")
        expected = silhouette_score(normalized, result.assignment, metric="euclidean")
        assert result.silhouette == expected


class TestConfigValidation:
    def test_mixed_parameters_rejected(self):
        with pytest.raises(ConfigError):
            ClusteringConfig(
                algorithm="kmeans", normalization="standard", kmeans_k=3, dbscan_eps=0.5
            )
        with pytest.raises(ConfigError):
            ClusteringConfig(
                algorithm="dbscan",
                normalization="standard",
                dbscan_eps=0.5,
                dbscan_min_pts=4,
                distance_metric="euclidean",
                kmeans_k=2,
            )
        with pytest.raises(ConfigError):
            ClusteringConfig(algorithm="dbscan", normalization="standard", dbscan_eps=0.5)

    @given(
        labels=st.lists(st.sampled_from([-1, 0, 1, 2, 5, 9]), min_size=1, max_size=30)
    )
    @settings(max_examples=60, deadline=None)
    def test_canonicalization_contiguous(self, labels):
        canonical, k = canonicalize_labels(np.asarray(labels))
        non_noise = canonical[canonical != -1]
        if len(non_noise):
            assert set(non_noise) == set(range(k))
        else:
            assert k == 0
        # noise positions preserved
        np.testing.assert_array_equal(
            np.asarray(labels) == -1, canonical == -1
        )
