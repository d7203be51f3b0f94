"""End-to-end orchestration: stage order, artifact determinism, resume,
failure wrapping, and the experiment sweep."""

import hashlib
import json
from dataclasses import replace
from pathlib import Path

import pytest

from iotminer.errors import (
    AuthError,
    ConfigError,
    MissingContext,
    StageFailure,
)
from iotminer.ingestion import write_frame
from iotminer.labeling import MockBackend, PromptTier
from iotminer.pipeline import (
    ARTIFACT_NAMES,
    MANIFEST_NAME,
    EvaluationConfig,
    PipelineConfig,
    load_config,
    run_experiment_sweep,
    run_pipeline,
)
from iotminer.synthgen import default_spec, generate, write_truth

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A small synthetic recording with per-row truth."""
    root = tmp_path_factory.mktemp("pipeline-data")
    spec = default_spec(seed=7, total_duration_s=600.0)
    frame, truth = generate(spec)
    write_frame(frame, root / "input.csv")
    write_truth(truth, root / "truth.csv")
    return root


def make_config(dataset, out_dir, **overrides):
    kwargs = {
        "input_path": str(dataset / "input.csv"),
        "output_dir": str(out_dir),
        "mock_rank_channel": "ES",
        "evaluation": EvaluationConfig(truth_path=str(dataset / "truth.csv")),
    }
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


@pytest.fixture(scope="module")
def finished_run(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline-run")
    manifest = run_pipeline(make_config(dataset, out))
    return out, manifest


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestRunPipeline:
    def test_all_stages_complete_in_order(self, finished_run):
        _, manifest = finished_run
        names = [s["name"] for s in manifest.stages]
        assert names == [
            "ingest",
            "featurize",
            "cluster",
            "profile",
            "label",
            "build-log",
            "evaluate",
        ]
        assert all(s["status"] == "completed" for s in manifest.stages)

    def test_every_file_in_output_dir_is_accounted_for(self, finished_run):
        out, manifest = finished_run
        on_disk = {p.name for p in out.iterdir()}
        assert on_disk == set(manifest.artifacts) | {MANIFEST_NAME}

    def test_artifact_names_match_declared_stage_outputs(self, finished_run):
        _, manifest = finished_run
        for stage in manifest.stages:
            assert tuple(stage["artifacts"]) == ARTIFACT_NAMES[stage["name"]]

    def test_manifest_file_round_trips(self, finished_run):
        out, manifest = finished_run
        doc = json.loads((out / MANIFEST_NAME).read_text())
        assert doc["config_hash"] == manifest.config_hash
        assert [s["name"] for s in doc["stages"]] == [s["name"] for s in manifest.stages]
        assert doc["config"]["labeling"]["backend"] == "mock"

    def test_rerun_is_byte_identical_except_manifest(self, dataset, finished_run, tmp_path):
        out1, _ = finished_run
        out2 = tmp_path / "again"
        run_pipeline(make_config(dataset, out2))
        names = {p.name for p in out1.iterdir()}
        assert names == {p.name for p in out2.iterdir()}
        for name in sorted(names - {MANIFEST_NAME}):
            assert _digest(out1 / name) == _digest(out2 / name), name

    def test_perfect_mock_labels_score_full_accuracy(self, finished_run):
        out, _ = finished_run
        report = json.loads((out / "report.json").read_text())
        assert report["swa"] == 1.0
        assert report["n"] == 600

    def test_evaluation_skipped_without_truth(self, dataset, tmp_path):
        manifest = run_pipeline(make_config(dataset, tmp_path / "notruth", evaluation=None))
        assert [s["name"] for s in manifest.stages][-1] == "build-log"
        assert not (tmp_path / "notruth" / "report.json").exists()


class TestResume:
    def test_resume_from_assignment(self, dataset, finished_run, tmp_path):
        out1, _ = finished_run
        out2 = tmp_path / "resumed"
        manifest = run_pipeline(
            make_config(dataset, out2),
            resume={"cluster": str(out1 / "assignment.csv")},
        )
        by_name = {s["name"]: s for s in manifest.stages}
        assert by_name["cluster"]["status"] == "resumed"
        assert by_name["cluster"]["artifacts"] == []
        assert by_name["cluster"]["info"]["resumed_from"] == str(out1 / "assignment.csv")
        assert not (out2 / "ranking.json").exists()
        # downstream artifacts are unchanged by taking the shortcut
        assert _digest(out2 / "labels.json") == _digest(out1 / "labels.json")
        assert _digest(out2 / "timeline.csv") == _digest(out1 / "timeline.csv")

    def test_resumed_stage_files_stay_out_of_the_artifact_list(self, dataset, finished_run, tmp_path):
        out1, _ = finished_run
        out2 = tmp_path / "resumed2"
        manifest = run_pipeline(
            make_config(dataset, out2),
            resume={"cluster": str(out1 / "assignment.csv")},
        )
        on_disk = {p.name for p in out2.iterdir()}
        assert on_disk == set(manifest.artifacts) | {MANIFEST_NAME}
        assert "ranking.json" not in manifest.artifacts

    def test_unknown_resume_stage_rejected(self, dataset, finished_run, tmp_path):
        out1, _ = finished_run
        with pytest.raises(ConfigError, match="cannot resume"):
            run_pipeline(
                make_config(dataset, tmp_path / "x"),
                resume={"build-log": str(out1 / "log.xes")},
            )

    def test_missing_resume_artifact_rejected(self, dataset, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            run_pipeline(
                make_config(dataset, tmp_path / "x"),
                resume={"cluster": str(tmp_path / "nope.csv")},
            )


class TestFailurePaths:
    def test_tier3_without_context_fails_before_any_stage(self, dataset, tmp_path):
        out = tmp_path / "never-created"
        config = make_config(dataset, out, tier=PromptTier(3))
        with pytest.raises(MissingContext):
            run_pipeline(config)
        assert not out.exists()

    def test_missing_input_fails_before_any_stage(self, tmp_path):
        out = tmp_path / "never-created"
        config = PipelineConfig(
            input_path=str(tmp_path / "ghost.csv"), output_dir=str(out)
        )
        with pytest.raises(ConfigError, match="not found"):
            run_pipeline(config)
        assert not out.exists()

    def test_unparseable_input_becomes_stage_failure(self, tmp_path):
        bad = tmp_path / "garbage.csv"
        bad.write_text("\x00\x01\x02 not a sensor file")
        out = tmp_path / "out"
        with pytest.raises(StageFailure) as err:
            run_pipeline(
                PipelineConfig(input_path=str(bad), output_dir=str(out))
            )
        assert err.value.stage == "ingest"
        manifest = json.loads((out / MANIFEST_NAME).read_text())
        assert manifest["stages"][-1] == {
            "name": "ingest",
            "status": "failed",
            "duration_s": manifest["stages"][-1]["duration_s"],
            "artifacts": [],
            "info": {},
        }

    def test_backend_error_propagates_unwrapped(self, dataset, tmp_path):
        class RefusingBackend:
            name = "refusing"

            def complete(self, prompt, options, run_index=0):
                raise AuthError("key rejected")

        out = tmp_path / "authfail"
        with pytest.raises(AuthError):
            run_pipeline(make_config(dataset, out), backend=RefusingBackend())
        manifest = json.loads((out / MANIFEST_NAME).read_text())
        by_name = {s["name"]: s for s in manifest["stages"]}
        assert by_name["label"]["status"] == "failed"
        assert by_name["cluster"]["status"] == "completed"

    def test_wrong_length_truth_is_an_evaluate_stage_failure(self, dataset, tmp_path):
        short_truth = tmp_path / "short.csv"
        short_truth.write_text("row_id,activity\n0,Idling\n")
        out = tmp_path / "shorttruth"
        config = make_config(
            dataset, out, evaluation=EvaluationConfig(truth_path=str(short_truth))
        )
        with pytest.raises(StageFailure) as err:
            run_pipeline(config)
        assert err.value.stage == "evaluate"


class TestConfig:
    def test_hash_ignores_output_dir(self, dataset):
        a = make_config(dataset, "/tmp/a")
        b = make_config(dataset, "/tmp/b")
        assert a.config_hash() == b.config_hash()

    def test_hash_changes_with_semantic_fields(self, dataset):
        a = make_config(dataset, "/tmp/a")
        assert a.config_hash() != make_config(dataset, "/tmp/a", seed=1).config_hash()
        assert (
            a.config_hash()
            != make_config(dataset, "/tmp/a", tier=PromptTier(2)).config_hash()
        )

    def test_json_round_trip_preserves_hash(self, dataset):
        config = make_config(dataset, "/tmp/a", channels=("APP", "ES"))
        clone = PipelineConfig.from_json(config.to_json())
        assert clone == config
        assert clone.config_hash() == config.config_hash()

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            PipelineConfig.from_json(
                {"input_path": "a", "output_dir": "b", "interpolate": {}}
            )

    def test_missing_required_key_rejected(self):
        with pytest.raises(ConfigError, match="input_path"):
            PipelineConfig.from_json({"output_dir": "b"})

    def test_bad_feature_options_rejected(self):
        with pytest.raises(ConfigError, match="feature"):
            PipelineConfig(input_path="a", output_dir="b", features={"window_len": 3})

    def test_bad_backend_rejected(self):
        with pytest.raises(ConfigError, match="backend"):
            PipelineConfig(input_path="a", output_dir="b", backend="telepathy")

    def test_evaluation_config_validation(self):
        with pytest.raises(ConfigError):
            EvaluationConfig(truth_path="t.csv", threshold=1.5)
        with pytest.raises(ConfigError):
            EvaluationConfig(truth_path="t.csv", provider="vibes")
        with pytest.raises(ConfigError):
            EvaluationConfig(truth_path="")

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_load_config_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_load_config_round_trip(self, dataset, tmp_path):
        config = make_config(dataset, str(tmp_path / "out"))
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config.to_json()))
        assert load_config(path) == config


class TestSweep:
    @pytest.fixture(scope="class")
    def sweep_report(self, dataset, tmp_path_factory):
        out = tmp_path_factory.mktemp("sweep")
        config = make_config(dataset, out)
        report = run_experiment_sweep(
            config, tiers=[1], temperatures=[0.0, 1.0], runs_per_cell=2
        )
        return out, report

    def test_grid_shape(self, sweep_report):
        _, report = sweep_report
        assert len(report["groups"]) == 2
        assert [(g["tier"], g["temperature"]) for g in report["groups"]] == [
            (1, 0.0),
            (1, 1.0),
        ]
        assert all(g["runs"] == 2 for g in report["groups"])

    def test_temperature_zero_is_run_invariant(self, sweep_report):
        _, report = sweep_report
        cold = report["groups"][0]
        assert cold["std"] == 0.0
        assert cold["se"] == 0.0
        assert cold["min"] == cold["max"] == cold["mean"]

    def test_diversity_does_not_shrink_with_temperature(self, sweep_report):
        _, report = sweep_report
        by_temp = {d["temperature"]: d["unique_labels"] for d in report["diversity"]}
        assert by_temp[1.0] >= by_temp[0.0]

    def test_plot_csvs_match_report(self, sweep_report):
        out, report = sweep_report
        accuracy = (out / "accuracy_by_temperature.csv").read_text().splitlines()
        assert accuracy[0] == "tier,temperature,runs,mean_swa,std_swa,se_swa,min_swa,max_swa"
        assert len(accuracy) == 1 + len(report["groups"])
        first = accuracy[1].split(",")
        assert first[0] == "1"
        assert float(first[3]) == report["groups"][0]["mean"]
        diversity = (out / "diversity_by_temperature.csv").read_text().splitlines()
        assert diversity[0] == "tier,temperature,runs,unique_labels"
        assert len(diversity) == 1 + len(report["diversity"])

    def test_report_file_matches_return_value(self, sweep_report):
        out, report = sweep_report
        on_disk = json.loads((out / "sweep_report.json").read_text())
        assert on_disk == json.loads(json.dumps(report))

    def test_sweep_requires_truth(self, dataset, tmp_path):
        config = make_config(dataset, tmp_path / "s", evaluation=None)
        with pytest.raises(ConfigError, match="truth"):
            run_experiment_sweep(config, tiers=[1], temperatures=[0.0], runs_per_cell=1)

    def test_sweep_tier3_needs_context(self, dataset, tmp_path):
        config = make_config(dataset, tmp_path / "s")
        with pytest.raises(MissingContext):
            run_experiment_sweep(config, tiers=[1, 3], temperatures=[0.0], runs_per_cell=1)

    def test_failed_runs_are_recorded_not_fatal(self, dataset, tmp_path):
        calls = {"n": 0}

        def flaky_factory():
            calls["n"] += 1
            if calls["n"] == 3:
                class Exploding:
                    name = "exploding"

                    def complete(self, prompt, options, run_index=0):
                        raise AuthError("boom")

                return Exploding()
            return MockBackend(rank_channel="ES")

        config = make_config(dataset, tmp_path / "flaky")
        report = run_experiment_sweep(
            config,
            tiers=[1],
            temperatures=[0.0, 1.0],
            runs_per_cell=2,
            concurrency=1,
            backend_factory=flaky_factory,
        )
        assert len(report["failures"]) == 1
        failure = report["failures"][0]
        assert failure["error"].startswith("AuthError")
        assert (failure["tier"], failure["temperature"], failure["run_index"]) == (1, 1.0, 0)
        # the grid keeps its shape; the damaged cell aggregates its survivors
        assert len(report["groups"]) == 2
        damaged = report["groups"][1]
        assert damaged["runs"] == 1
        assert damaged["std"] == 0.0

    def test_all_runs_failing_leaves_null_cells(self, dataset, tmp_path):
        class AlwaysDown:
            name = "down"

            def complete(self, prompt, options, run_index=0):
                raise AuthError("dead")

        config = make_config(dataset, tmp_path / "dead")
        report = run_experiment_sweep(
            config,
            tiers=[1],
            temperatures=[0.0],
            runs_per_cell=2,
            concurrency=1,
            backend_factory=lambda: AlwaysDown(),
        )
        assert len(report["failures"]) == 2
        (group,) = report["groups"]
        assert group["runs"] == 0
        assert group["mean"] is None
        (div,) = report["diversity"]
        assert div["unique_labels"] == 0
