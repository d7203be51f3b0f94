import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotminer.errors import ConfigError, EmptyInstances, ProviderUnavailable
from iotminer.evaluation import (
    AlignmentMatrix,
    EmbeddingSimilarity,
    GroupSummary,
    LabeledInstance,
    LexicalSimilarity,
    SwaResult,
    SweepRun,
    aggregate_sweep,
    alignment_matrix,
    instances_from_logs,
    instances_from_rows,
    label_diversity,
    make_provider,
    read_instances_csv,
    similarity,
    swa,
    swa_report,
    write_instances_csv,
)
from iotminer.eventlog import Case, Event, EventLog
from iotminer.labeling import LabelMap

from reference_impls import brute_swa

LABELS = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu"), max_codepoint=0x17F),
    min_size=1,
    max_size=12,
)


def inst(pairs):
    return [LabeledInstance(p, r) for p, r in pairs]


class TestLexicalSimilarity:
    def test_identity(self):
        assert similarity("Idling", "Idling", LexicalSimilarity()) == 1.0

    def test_disjoint_trigrams(self):
        assert similarity("abc", "xyz", LexicalSimilarity()) == 0.0

    def test_hauling_haulage_hand_derivation(self):
        # hauling -> {hau, aul, uli, lin, ing}; haulage -> {hau, aul, ula, lag, age}
        # dot = 2 shared trigrams; norms sqrt(5) each -> cosine = 2/5
        assert similarity("hauling", "haulage", LexicalSimilarity()) == pytest.approx(
            0.4, abs=1e-15
        )

    def test_case_insensitive(self):
        provider = LexicalSimilarity()
        assert similarity("IDLING", "idling", provider) == pytest.approx(1.0)

    def test_short_labels(self):
        provider = LexicalSimilarity()
        assert similarity("ab", "ab", provider) == 1.0
        assert similarity("ab", "ba", provider) == 0.0

    def test_repeated_trigram_counts(self):
        # "aaaa" -> {aaa: 2}; "aaab" -> {aaa: 1, aab: 1}
        # dot = 2, norms 2 and sqrt(2) -> cosine = 2 / (2*sqrt(2)) = 1/sqrt(2)
        got = similarity("aaaa", "aaab", LexicalSimilarity())
        assert got == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_empty_label_rejected(self):
        with pytest.raises(ConfigError):
            similarity("", "x", LexicalSimilarity())

    def test_cache_symmetric(self):
        provider = LexicalSimilarity()
        a = similarity("hauling", "haulage", provider)
        b = similarity("haulage", "hauling", provider)
        assert a == b
        assert provider.cache_size == 1

    @given(a=LABELS, b=LABELS)
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_bounds(self, a, b):
        provider = LexicalSimilarity()
        s_ab = provider.similarity(a, b)
        s_ba = provider.similarity(b, a)
        assert s_ab == s_ba
        assert 0.0 <= s_ab <= 1.0
        assert provider.similarity(a, a) == 1.0


class TestEmbeddingSimilarity:
    @staticmethod
    def fake_embed(label):
        vectors = {
            "Idling": [1.0, 0.0],
            "Stopped": [0.9, 0.1],
            "Loading": [0.0, 1.0],
            "Opposite": [-1.0, 0.0],
        }
        return vectors[label]

    def test_cosine(self):
        provider = EmbeddingSimilarity(embed=self.fake_embed)
        got = provider.similarity("Idling", "Stopped")
        want = 0.9 / math.sqrt(0.81 + 0.01)
        assert got == pytest.approx(want)

    def test_orthogonal(self):
        provider = EmbeddingSimilarity(embed=self.fake_embed)
        assert provider.similarity("Idling", "Loading") == 0.0

    def test_negative_cosine_clamped(self):
        provider = EmbeddingSimilarity(embed=self.fake_embed)
        assert provider.similarity("Idling", "Opposite") == 0.0

    def test_unavailable_without_backend(self):
        provider = EmbeddingSimilarity()
        with pytest.raises(ProviderUnavailable):
            provider.similarity("a", "b")

    def test_make_provider(self):
        assert make_provider("lexical").kind == "lexical"
        assert make_provider("embedding").kind == "embedding-cosine"
        with pytest.raises(ConfigError):
            make_provider("psychic")


class TestSwa:
    def test_perfect_labels(self):
        result = swa(inst([("A", "A")] * 5), 1.0, LexicalSimilarity())
        assert result.swa == 1.0

    def test_full_discard(self):
        result = swa(inst([("abc", "xyz")] * 3), 0.5, LexicalSimilarity())
        assert result.swa == 0.0

    def test_spec_example(self):
        class Scripted(LexicalSimilarity):
            table = {("a", "x"): 0.9, ("b", "y"): 0.5, ("c", "z"): 0.7}

            def _score(self, a, b):
                return self.table[(a, b) if (a, b) in self.table else (b, a)]

        instances = inst([("a", "x"), ("b", "y"), ("c", "z")])
        result = swa(instances, 0.6, Scripted())
        assert result.swa == pytest.approx((0.9 + 0.7) / 3, abs=1e-12)
        assert result.per_instance_scores == (0.9, 0.5, 0.7)
        assert result.n == 3

    def test_threshold_inclusive(self):
        class Fixed(LexicalSimilarity):
            def _score(self, a, b):
                return 0.6

        result = swa(inst([("a", "b")]), 0.6, Fixed())
        assert result.swa == 0.6  # s == T is retained, not discarded

    def test_empty_instances(self):
        with pytest.raises(EmptyInstances):
            swa([], 0.5, LexicalSimilarity())

    def test_threshold_range(self):
        with pytest.raises(ConfigError):
            swa(inst([("a", "b")]), 1.5, LexicalSimilarity())

    def test_result_consistency_enforced(self):
        with pytest.raises(ConfigError):
            SwaResult(swa=0.9, threshold=0.0, n=2, per_instance_scores=(0.5, 0.5))

    @given(
        pairs=st.lists(st.tuples(LABELS, LABELS), min_size=1, max_size=20),
        threshold=st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=150, deadline=None)
    def test_matches_brute_force(self, pairs, threshold):
        provider = LexicalSimilarity()
        instances = inst(pairs)
        result = swa(instances, threshold, provider)
        scores = [provider.similarity(p, r) for p, r in pairs]
        assert result.swa == pytest.approx(brute_swa(scores, threshold), abs=1e-12)
        assert 0.0 <= result.swa <= 1.0

    @given(
        pairs=st.lists(st.tuples(LABELS, LABELS), min_size=1, max_size=20),
        t1=st.floats(min_value=0, max_value=1),
        t2=st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=150, deadline=None)
    def test_monotone_in_threshold(self, pairs, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        provider = LexicalSimilarity()
        instances = inst(pairs)
        assert swa(instances, lo, provider).swa >= swa(instances, hi, provider).swa

    @given(pairs=st.lists(st.tuples(LABELS, LABELS), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_threshold_extremes(self, pairs):
        provider = LexicalSimilarity()
        instances = inst(pairs)
        scores = [provider.similarity(p, r) for p, r in pairs]
        assert swa(instances, 0.0, provider).swa == pytest.approx(
            sum(scores) / len(scores), abs=1e-12
        )
        assert swa(instances, 1.0, provider).swa == pytest.approx(
            sum(1.0 for s in scores if s == 1.0) / len(scores), abs=1e-12
        )


class TestAlignmentMatrix:
    def test_single_perfect_match(self):
        m = alignment_matrix(inst([("A", "A")]), LexicalSimilarity())
        assert m.predicted_labels == ("A",)
        assert m.reference_labels == ("A",)
        assert m.cells.tolist() == [[1.0]]

    def test_zero_similarity(self):
        m = alignment_matrix(inst([("abc", "xyz"), ("def", "uvw")]), LexicalSimilarity())
        assert m.cells.tolist() == [[0.0, 0.0], [0.0, 0.0]]
        assert m.frequencies.sum() == pytest.approx(1.0)

    def test_four_instance_hand_fixture(self):
        instances = inst(
            [
                ("Idling", "Idling"),
                ("Idling", "Idling"),
                ("Loading", "Dumping"),
                ("Hauling", "Hauling"),
            ]
        )
        m = alignment_matrix(instances, LexicalSimilarity())
        # rows by predicted frequency desc then label; cols by reference
        assert m.predicted_labels == ("Idling", "Hauling", "Loading")
        assert m.reference_labels == ("Idling", "Dumping", "Hauling")
        # sim(loading, dumping): only shared trigram "ing" -> 1/5
        want = [
            [0.5, 0.0, 0.0],
            [0.0, 0.0, 0.25],
            [0.0, 0.2 * 0.25, 0.0],
        ]
        assert np.allclose(m.cells, want, atol=1e-12)
        assert m.frequencies.sum() == pytest.approx(1.0, abs=1e-12)

    def test_cells_bounded_by_one_with_equality_iff_perfect(self):
        perfect = alignment_matrix(inst([("A", "A"), ("B", "B")]), LexicalSimilarity())
        assert perfect.cells.sum() == pytest.approx(1.0, abs=1e-12)
        mixed = alignment_matrix(
            inst([("A", "A"), ("abc", "xyz")]), LexicalSimilarity()
        )
        assert mixed.cells.sum() < 1.0

    def test_empty(self):
        with pytest.raises(EmptyInstances):
            alignment_matrix([], LexicalSimilarity())

    def test_csv_shape(self):
        m = alignment_matrix(inst([("A", "B")]), LexicalSimilarity())
        lines = m.to_csv().splitlines()
        assert lines[0] == "predicted\\reference,B"
        assert lines[1].startswith("A,")

    @given(pairs=st.lists(st.tuples(LABELS, LABELS), min_size=1, max_size=25))
    @settings(max_examples=100, deadline=None)
    def test_frequency_normalization(self, pairs):
        m = alignment_matrix(inst(pairs), LexicalSimilarity())
        assert m.frequencies.sum() == pytest.approx(1.0, abs=1e-9)
        assert (m.cells >= 0).all()
        assert m.cells.sum() <= 1.0 + 1e-9


class TestAggregateSweep:
    @staticmethod
    def run(tier, temperature, value, run_index=0):
        return SweepRun(
            tier=tier,
            temperature=temperature,
            run_index=run_index,
            result=SwaResult(
                swa=value, threshold=0.0, n=1, per_instance_scores=(value,)
            ),
        )

    def test_singleton_group(self):
        groups = aggregate_sweep([self.run(1, 0.0, 0.7)])
        assert groups == [
            GroupSummary(
                tier=1, temperature=0.0, runs=1, mean=0.7, std=0.0, se=0.0,
                min=0.7, max=0.7,
            )
        ]

    def test_two_run_hand_computation(self):
        groups = aggregate_sweep(
            [self.run(2, 0.4, 0.4, 0), self.run(2, 0.4, 0.6, 1)]
        )
        g = groups[0]
        assert g.mean == pytest.approx(0.5)
        assert g.std == pytest.approx(math.sqrt(0.02), abs=1e-12)  # 0.14142...
        assert g.se == pytest.approx(0.1, abs=1e-12)
        assert g.min == 0.4 and g.max == 0.6

    def test_constant_runs(self):
        groups = aggregate_sweep([self.run(1, 0.2, 0.5, i) for i in range(10)])
        assert groups[0].std == 0.0
        assert groups[0].runs == 10

    def test_sorted_by_tier_then_temperature(self):
        runs = [
            self.run(2, 0.4, 0.5),
            self.run(1, 0.8, 0.5),
            self.run(1, 0.0, 0.5),
            self.run(2, 0.0, 0.5),
        ]
        groups = aggregate_sweep(runs)
        assert [(g.tier, g.temperature) for g in groups] == [
            (1, 0.0), (1, 0.8), (2, 0.0), (2, 0.4),
        ]

    def test_empty(self):
        with pytest.raises(EmptyInstances):
            aggregate_sweep([])


class TestLabelDiversity:
    def test_identical_maps_collapse(self):
        maps = [LabelMap(entries={i: f"L{i}" for i in range(6)})] * 10
        assert label_diversity(maps) == 6

    def test_case_fold(self):
        maps = [LabelMap(entries={0: "Idling"}), LabelMap(entries={0: "idling"})]
        assert label_diversity(maps) == 1

    def test_disjoint_union(self):
        a = LabelMap(entries={i: f"A{i}" for i in range(6)})
        b = LabelMap(entries={i: f"B{i}" for i in range(6)})
        assert label_diversity([a, b]) == 12

    def test_sanitization_applied(self):
        maps = [LabelMap(entries={0: "  Idling "}), LabelMap(entries={0: "Idling"})]
        assert label_diversity(maps) == 1

    def test_empty_list(self):
        with pytest.raises(ConfigError):
            label_diversity([])


class TestInstancesIO:
    def test_csv_round_trip(self, tmp_path):
        instances = inst([("Idling", "Idling"), ("Loading, wet", "Dumping")])
        path = tmp_path / "instances.csv"
        write_instances_csv(instances, path)
        assert read_instances_csv(path) == instances

    def test_header_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError):
            read_instances_csv(path)

    def test_from_rows_length_mismatch(self):
        with pytest.raises(ConfigError):
            instances_from_rows(["A"], ["A", "B"])

    def test_from_logs_row_join(self):
        t0 = np.datetime64("2024-10-01T06:00:00", "us")

        def log(activities):
            events = tuple(
                Event(
                    activity=a,
                    start=t0 + np.timedelta64(i, "s"),
                    end=t0 + np.timedelta64(i + 1, "s"),
                    source_rows=(i, i),
                )
                for i, a in enumerate(activities)
            )
            return EventLog(cases=(Case(case_id="c1", events=events),))

        instances = instances_from_logs(log(["A", "B", "A"]), log(["A", "A", "A"]))
        assert instances == inst([("A", "A"), ("B", "A"), ("A", "A")])

    def test_from_logs_start_join_without_rows(self):
        t0 = np.datetime64("2024-10-01T06:00:00", "us")

        def log(activities, offset=0):
            events = tuple(
                Event(
                    activity=a,
                    start=t0 + np.timedelta64(i + offset, "s"),
                    end=t0 + np.timedelta64(i + offset, "s"),
                )
                for i, a in enumerate(activities)
            )
            return EventLog(cases=(Case(case_id="c1", events=events),))

        instances = instances_from_logs(log(["A", "B"]), log(["B", "B"]))
        assert instances == inst([("A", "B"), ("B", "B")])
        with pytest.raises(EmptyInstances):
            instances_from_logs(log(["A"]), log(["A"], offset=100))


class TestReport:
    def test_report_shape(self):
        provider = LexicalSimilarity()
        result = swa(inst([("A", "A")]), 0.6, provider)
        report = swa_report(result, provider)
        assert report == {"swa": 1.0, "threshold": 0.6, "n": 1, "provider": "lexical"}

    def test_report_with_groups(self):
        provider = LexicalSimilarity()
        result = swa(inst([("A", "A")]), 0.6, provider)
        groups = aggregate_sweep(
            [TestAggregateSweep.run(1, 0.0, 0.7)]
        )
        report = swa_report(result, provider, groups=groups)
        assert report["per_group"][0]["tier"] == 1
