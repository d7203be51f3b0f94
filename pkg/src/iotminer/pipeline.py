"""End-to-end orchestration: raw sensor file in, labeled event log out.

A run is described by a single :class:`PipelineConfig` document and
executes a fixed stage order::

    ingest -> featurize -> cluster -> profile -> label -> build-log
           -> evaluate (only when a truth file is configured)

Every stage writes its artifacts under ``output_dir`` and appends a
record to the run manifest; the manifest is written atomically when the
run finishes (successfully or not), so a partial directory always says
how far it got. Stage exceptions are wrapped in
:class:`~iotminer.errors.StageFailure` naming the stage; backend errors
(auth, rate limits, timeouts) propagate unwrapped because the caller
needs to distinguish "the model endpoint is down" from "the pipeline is
broken".

Resume support: ``resume={"cluster": "path/to/assignment.csv"}`` makes
the named stage load its output from an earlier run instead of
recomputing, recorded with status ``resumed``. Stages not named recompute
as usual. When ``cluster`` is resumed the winning normalization is
unknown, so the profile projection falls back to standard scaling.

:func:`run_experiment_sweep` reuses the shared stages (ingest through
profile) once, then fans out labeling runs over a (tier, temperature)
grid, scoring each against a truth file and aggregating per-cell
statistics into plot-ready CSVs.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from . import __version__
from .clustering import (
    ClusterAssignment,
    default_search_space,
    grid_search_matrix,
    read_assignment,
    results_to_json,
    write_assignment,
)
from .errors import (
    BackendError,
    ConfigError,
    MissingContext,
    ProviderUnavailable,
    StageFailure,
)
from .eventlog import (
    NOISE_ACTIVITY,
    SegmentationConfig,
    build_event_log,
    default_segmentation_config,
    labeled_timeline,
    segment_cases,
    write_csv_log,
    write_drop_report,
    write_timeline,
    write_xes,
)
from .evaluation import (
    SweepRun,
    aggregate_sweep,
    alignment_matrix,
    instances_from_rows,
    label_diversity,
    make_provider,
    swa,
    swa_report,
)
from .featurization import (
    FeatureMatrix,
    FeatureSpec,
    build_feature_matrix,
    normalize_matrix,
    read_feature_matrix,
    write_feature_matrix,
)
from .ingestion import (
    InterpolationPolicy,
    SensorFrame,
    drop_duplicate_timestamps,
    interpolate_missing,
    read_frame,
    select_sensor_columns,
    write_frame,
)
from .labeling import (
    HttpBackend,
    LabelMap,
    LlmOptions,
    MockBackend,
    PromptTier,
    label_clusters,
)
from .profiling import (
    cluster_profiles,
    pca_project,
    profiles_from_json,
    profiles_to_json,
    write_projection,
)
from .synthgen import read_truth

STAGE_ORDER = (
    "ingest",
    "featurize",
    "cluster",
    "profile",
    "label",
    "build-log",
    "evaluate",
)

RESUMABLE_STAGES = ("ingest", "featurize", "cluster", "profile", "label")

BACKENDS = ("mock", "http")

ARTIFACT_NAMES = {
    "ingest": ("frame.csv",),
    "featurize": ("features.csv", "features.meta.json"),
    "cluster": ("ranking.json", "assignment.csv"),
    "profile": ("profiles.json", "projection.csv"),
    "label": ("labels.json",),
    "build-log": ("timeline.csv", "log.xes", "log.csv", "drops.json"),
    "evaluate": ("report.json", "alignment.csv", "alignment.json"),
}

MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EvaluationConfig:
    """How (and whether) to score the run against reference activities."""

    truth_path: str
    threshold: float = 0.6
    provider: str = "lexical"

    def __post_init__(self):
        if not self.truth_path:
            raise ConfigError("evaluation.truth_path must be non-empty")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(
                f"evaluation.threshold must be in [0, 1], got {self.threshold}"
            )
        if self.provider not in ("lexical", "embedding", "embedding-cosine"):
            raise ConfigError(
                f"unknown similarity provider {self.provider!r}"
            )

    def to_json(self) -> dict:
        return {
            "truth_path": self.truth_path,
            "threshold": self.threshold,
            "provider": self.provider,
        }


@dataclass(frozen=True)
class PipelineConfig:
    """Complete description of one pipeline run.

    ``channels=None`` means auto-select sensor columns by variation;
    ``segmentation=None`` derives a time-gap config from the data
    (threshold = 10x the median sampling interval); ``evaluation=None``
    skips the scoring stage.
    """

    input_path: str
    output_dir: str
    channels: Optional[tuple] = None
    min_variation: float = 0.01
    interpolation: InterpolationPolicy = field(default_factory=InterpolationPolicy)
    features: dict = field(default_factory=dict)
    seed: int = 0
    tier: PromptTier = field(default_factory=lambda: PromptTier(1))
    llm: LlmOptions = field(default_factory=LlmOptions)
    backend: str = "mock"
    mock_rank_channel: Optional[str] = None
    run_index: int = 0
    segmentation: Optional[SegmentationConfig] = None
    evaluation: Optional[EvaluationConfig] = None

    def __post_init__(self):
        if not self.input_path:
            raise ConfigError("input_path must be non-empty")
        if not self.output_dir:
            raise ConfigError("output_dir must be non-empty")
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(self.channels))
            if len(self.channels) == 0:
                raise ConfigError("channels must be non-empty when given")
            for name in self.channels:
                if not isinstance(name, str) or not name:
                    raise ConfigError(f"bad channel name {name!r}")
        if self.min_variation < 0:
            raise ConfigError("min_variation must be non-negative")
        if self.backend not in BACKENDS:
            raise ConfigError(
                f"backend must be one of {BACKENDS}, got {self.backend!r}"
            )
        if self.run_index < 0:
            raise ConfigError("run_index must be non-negative")
        # Constructing a throwaway spec validates the feature options
        # (unknown keys, bad windows) before any stage runs, and its
        # defaults normalize the dict so equal configs compare equal.
        try:
            probe = FeatureSpec(base_channels=("probe",), **dict(self.features))
        except TypeError as exc:
            raise ConfigError(f"bad feature options: {exc}") from exc
        object.__setattr__(
            self,
            "features",
            {
                "add_differential_coding": probe.add_differential_coding,
                "diff_epsilon": probe.diff_epsilon,
                "derivative_orders": probe.derivative_orders,
                "window": probe.window,
                "window_stats": probe.window_stats,
            },
        )

    def validate(self) -> None:
        """Checks that need the filesystem or cross-field reasoning;
        raises ConfigError / MissingContext before any stage executes."""
        path = Path(self.input_path)
        if not path.is_file():
            raise ConfigError(f"input file not found: {path}")
        out = Path(self.output_dir)
        if out.exists() and not out.is_dir():
            raise ConfigError(f"output_dir is not a directory: {out}")
        if self.tier.tier == 3 and not self.tier.user_context.strip():
            raise MissingContext(
                "tier 3 prompts need user context; set labeling.user_context"
            )
        if (
            self.segmentation is not None
            and self.segmentation.method == "sensor-change"
            and self.channels is not None
            and self.segmentation.change_channel not in self.channels
        ):
            raise ConfigError(
                f"segmentation.change_channel {self.segmentation.change_channel!r}"
                " is not among the configured channels"
            )

    def to_json(self) -> dict:
        seg = None
        if self.segmentation is not None:
            seg = {
                "method": self.segmentation.method,
                "gap_threshold_s": self.segmentation.gap_threshold_s,
                "change_channel": self.segmentation.change_channel,
                "sensitivity": self.segmentation.sensitivity,
                "min_activities_per_case": self.segmentation.min_activities_per_case,
                "max_case_duration_s": self.segmentation.max_case_duration_s,
                "merge_consecutive": self.segmentation.merge_consecutive,
            }
        return {
            "input_path": str(self.input_path),
            "output_dir": str(self.output_dir),
            "channels": list(self.channels) if self.channels is not None else None,
            "min_variation": self.min_variation,
            "interpolation": {
                "method": self.interpolation.method,
                "max_gap": self.interpolation.max_gap,
                "per_channel_overrides": dict(self.interpolation.per_channel_overrides),
            },
            "features": {
                "add_differential_coding": self.features["add_differential_coding"],
                "diff_epsilon": self.features["diff_epsilon"],
                "derivative_orders": list(self.features["derivative_orders"]),
                "window": self.features["window"],
                "window_stats": list(self.features["window_stats"]),
            },
            "seed": self.seed,
            "labeling": {
                "tier": self.tier.tier,
                "user_context": self.tier.user_context,
                "backend": self.backend,
                "mock_rank_channel": self.mock_rank_channel,
                "run_index": self.run_index,
                "model": self.llm.model,
                "temperature": self.llm.temperature,
                "max_tokens": self.llm.max_tokens,
                "endpoint": self.llm.endpoint,
                "timeout": self.llm.timeout,
                "retries": self.llm.retries,
            },
            "segmentation": seg,
            "evaluation": self.evaluation.to_json() if self.evaluation else None,
        }

    def config_hash(self) -> str:
        """Hash of the semantic configuration. ``output_dir`` is excluded:
        where results land must not change what they say, or re-running
        the same config into a fresh directory would break byte-identity
        of the event log (which embeds this hash)."""
        doc = self.to_json()
        del doc["output_dir"]
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config document must be an object, got {type(doc).__name__}")
        known = {
            "input_path",
            "output_dir",
            "channels",
            "min_variation",
            "interpolation",
            "features",
            "seed",
            "labeling",
            "segmentation",
            "evaluation",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            input_path = doc["input_path"]
            output_dir = doc["output_dir"]
        except KeyError as exc:
            raise ConfigError(f"config is missing required key {exc.args[0]!r}") from exc

        interp_doc = doc.get("interpolation") or {}
        interpolation = InterpolationPolicy(
            method=interp_doc.get("method", "linear"),
            max_gap=interp_doc.get("max_gap", 5),
            per_channel_overrides=interp_doc.get("per_channel_overrides", {}),
        )

        features = dict(doc.get("features") or {})
        for key in ("derivative_orders", "window_stats"):
            if key in features:
                features[key] = tuple(features[key])

        lab = doc.get("labeling") or {}
        tier = PromptTier(
            tier=lab.get("tier", 1), user_context=lab.get("user_context", "")
        )
        llm_kwargs = {
            name: lab[name]
            for name in ("model", "temperature", "max_tokens", "endpoint", "timeout", "retries")
            if name in lab
        }
        llm = LlmOptions(**llm_kwargs)

        seg = None
        seg_doc = doc.get("segmentation")
        if seg_doc is not None:
            known_seg = {
                "method",
                "gap_threshold_s",
                "change_channel",
                "sensitivity",
                "min_activities_per_case",
                "max_case_duration_s",
                "merge_consecutive",
            }
            unknown_seg = set(seg_doc) - known_seg
            if unknown_seg:
                raise ConfigError(f"unknown segmentation keys: {sorted(unknown_seg)}")
            seg = SegmentationConfig(**seg_doc)

        ev = None
        ev_doc = doc.get("evaluation")
        if ev_doc is not None:
            known_ev = {"truth_path", "threshold", "provider"}
            unknown_ev = set(ev_doc) - known_ev
            if unknown_ev:
                raise ConfigError(f"unknown evaluation keys: {sorted(unknown_ev)}")
            ev = EvaluationConfig(**ev_doc)

        channels = doc.get("channels")
        return cls(
            input_path=input_path,
            output_dir=output_dir,
            channels=tuple(channels) if channels is not None else None,
            min_variation=doc.get("min_variation", 0.01),
            interpolation=interpolation,
            features=features,
            seed=doc.get("seed", 0),
            tier=tier,
            llm=llm,
            backend=lab.get("backend", "mock"),
            mock_rank_channel=lab.get("mock_rank_channel"),
            run_index=lab.get("run_index", 0),
            segmentation=seg,
            evaluation=ev,
        )


def load_config(path: Union[str, Path]) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return PipelineConfig.from_json(doc)


# ---------------------------------------------------------------------------
# manifest


class RunManifest:
    """Append-only record of what a run did, written atomically at the end.

    Wall-clock times live here (and only here) so re-running an identical
    config yields byte-identical data artifacts; the manifest is the one
    file allowed to differ between reruns.
    """

    def __init__(self, path: Union[str, Path], config: PipelineConfig):
        self.path = Path(path)
        self.config_hash = config.config_hash()
        self.created = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
        self.version = __version__
        self.config_doc = config.to_json()
        self.stages: list = []
        self.backend_attempts: list = []
        self.mutations: list = []

    def record_stage(
        self,
        name: str,
        status: str,
        duration_s: float,
        artifacts: Sequence[str] = (),
        info: Optional[dict] = None,
    ) -> None:
        self.stages.append(
            {
                "name": name,
                "status": status,
                "duration_s": round(duration_s, 6),
                "artifacts": list(artifacts),
                "info": dict(info or {}),
            }
        )

    def record_mutation(self, kind: str, info: dict) -> None:
        self.mutations.append(
            {
                "kind": kind,
                "at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
                "info": dict(info),
            }
        )

    @property
    def artifacts(self) -> list:
        seen: list = []
        for stage in self.stages:
            for name in stage["artifacts"]:
                if name not in seen:
                    seen.append(name)
        return seen

    def to_json(self) -> dict:
        return {
            "tool_version": self.version,
            "created": self.created,
            "config_hash": self.config_hash,
            "config": self.config_doc,
            "stages": self.stages,
            "artifacts": self.artifacts,
            "backend_attempts": self.backend_attempts,
            "mutations": self.mutations,
        }

    def write(self) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, self.path)


def read_manifest(path: Union[str, Path]) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# stage bodies (shared between run_pipeline and the sweep)


def make_backend(config: PipelineConfig):
    if config.backend == "mock":
        return MockBackend(rank_channel=config.mock_rank_channel)
    return HttpBackend()


def _ingest(config: PipelineConfig):
    frame = read_frame(config.input_path)
    frame = drop_duplicate_timestamps(frame)
    frame, repairs = interpolate_missing(frame, config.interpolation)
    if config.channels is not None:
        missing = [c for c in config.channels if c not in frame.channels]
        if missing:
            raise ConfigError(f"configured channels not in input: {missing}")
        channels = list(config.channels)
    else:
        channels = select_sensor_columns(frame, config.min_variation)
    return frame, channels, repairs


def _featurize(frame: SensorFrame, channels: Sequence[str], config: PipelineConfig):
    spec = FeatureSpec(base_channels=tuple(channels), **config.features)
    return build_feature_matrix(frame, spec)


def _cluster(raw: FeatureMatrix, config: PipelineConfig):
    space = default_search_space(raw, seed=config.seed)
    return grid_search_matrix(raw, search_space=space)


def _profile(
    frame: SensorFrame,
    channels: Sequence[str],
    raw: FeatureMatrix,
    assignment: ClusterAssignment,
    normalization: str,
):
    profiles = cluster_profiles(frame, channels, assignment)
    projection = pca_project(normalize_matrix(raw, normalization))
    return profiles, projection


def _label(profiles, config: PipelineConfig, backend, attempts_out: list) -> LabelMap:
    real = [p for p in profiles if p.cluster_id >= 0]
    return label_clusters(
        real,
        config.tier,
        config.llm,
        backend,
        run_index=config.run_index,
        attempts_out=attempts_out,
    )


def _build_log(
    frame: SensorFrame,
    assignment: ClusterAssignment,
    label_map: LabelMap,
    config: PipelineConfig,
    config_hash: str,
):
    timeline = labeled_timeline(frame, assignment, label_map)
    seg = config.segmentation or default_segmentation_config(frame.timestamps)
    change_values = None
    if seg.method == "sensor-change":
        if seg.change_channel not in frame.channels:
            raise ConfigError(
                f"change_channel {seg.change_channel!r} not in frame"
            )
        change_values = frame.channels[seg.change_channel]
    cases, dropped = segment_cases(timeline, seg, change_values=change_values)
    log = build_event_log(
        cases, source=Path(config.input_path).name, config_hash=config_hash
    )
    return timeline, seg, cases, dropped, log


def _predicted_rows(assignment: ClusterAssignment, label_map: LabelMap) -> list:
    labels = []
    for cid in assignment.labels:
        cid = int(cid)
        labels.append(NOISE_ACTIVITY if cid < 0 else label_map.entries[cid])
    return labels


def _scoring_provider(config: EvaluationConfig, warnings: list):
    provider = make_provider(config.provider)
    if config.provider != "lexical":
        try:
            provider.similarity("probe", "check")
        except ProviderUnavailable:
            warnings.append(
                f"similarity provider {config.provider!r} unavailable;"
                " falling back to lexical"
            )
            provider = make_provider("lexical")
    return provider


def _evaluate(timeline, config: PipelineConfig):
    ev = config.evaluation
    truth = read_truth(ev.truth_path)
    if len(truth) != len(timeline):
        raise ConfigError(
            f"truth has {len(truth)} rows but the timeline has {len(timeline)}"
        )
    predicted = [activity for _, activity in timeline]
    instances = instances_from_rows(predicted, list(truth))
    warnings: list = []
    provider = _scoring_provider(ev, warnings)
    result = swa(instances, ev.threshold, provider)
    alignment = alignment_matrix(instances, provider)
    report = swa_report(result, provider)
    report["warnings"] = warnings
    return result, alignment, report


# ---------------------------------------------------------------------------
# orchestrator


def run_pipeline(
    config: PipelineConfig,
    resume: Optional[dict] = None,
    backend=None,
) -> RunManifest:
    """Execute the full stage order, returning the written manifest.

    ``resume`` maps stage names to artifact paths from an earlier run;
    those stages load instead of recompute. ``backend`` overrides the
    config-built labeling backend (used by tests and the sweep).
    """
    config.validate()
    resume = dict(resume or {})
    unknown = set(resume) - set(RESUMABLE_STAGES)
    if unknown:
        raise ConfigError(
            f"cannot resume stages {sorted(unknown)}; resumable: {RESUMABLE_STAGES}"
        )
    for name, artifact in resume.items():
        if not Path(artifact).is_file():
            raise ConfigError(f"resume artifact for {name!r} not found: {artifact}")

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out / MANIFEST_NAME, config)
    if backend is None:
        backend = make_backend(config)

    def run_stage(name: str, fn: Callable, info: Optional[dict] = None):
        resumed = name in resume
        started = time.perf_counter()
        try:
            value = fn()
        except BackendError:
            manifest.record_stage(name, "failed", time.perf_counter() - started)
            manifest.write()
            raise
        except Exception as exc:
            manifest.record_stage(name, "failed", time.perf_counter() - started)
            manifest.write()
            if isinstance(exc, StageFailure):
                raise
            artifacts = ARTIFACT_NAMES.get(name, ())
            raise StageFailure(
                name, str(exc), artifact=artifacts[0] if artifacts else None
            ) from exc
        stage_info = dict(info or {})
        if resumed:
            stage_info["resumed_from"] = str(resume[name])
        manifest.record_stage(
            name,
            "resumed" if resumed else "completed",
            time.perf_counter() - started,
            artifacts=() if resumed else ARTIFACT_NAMES[name],
            info=stage_info,
        )
        return value

    # -- ingest
    ingest_info: dict = {}

    def ingest_fn():
        if "ingest" in resume:
            frame = read_frame(resume["ingest"])
            if config.channels is not None:
                channels = list(config.channels)
            else:
                channels = select_sensor_columns(frame, config.min_variation)
            repair_count = 0
        else:
            frame, channels, repairs = _ingest(config)
            repair_count = len(repairs.gaps)
            write_frame(frame, out / "frame.csv")
        ingest_info.update(
            {"rows": len(frame), "channels": channels, "repaired_gaps": repair_count}
        )
        return frame, channels

    frame, channels = run_stage("ingest", ingest_fn, ingest_info)

    # -- featurize
    def featurize_fn():
        if "featurize" in resume:
            return read_feature_matrix(resume["featurize"])
        raw = _featurize(frame, channels, config)
        write_feature_matrix(raw, out / "features.csv")
        return raw

    raw = run_stage("featurize", featurize_fn)

    # -- cluster
    cluster_info: dict = {}

    def cluster_fn():
        if "cluster" in resume:
            assignment = read_assignment(resume["cluster"])
            cluster_info.update({"k": assignment.k, "winner": None})
            return assignment, None
        ranked = _cluster(raw, config)
        winner = ranked[0]
        (out / "ranking.json").write_text(results_to_json(ranked), encoding="utf-8")
        write_assignment(winner.assignment, out / "assignment.csv")
        cluster_info.update(
            {
                "k": winner.assignment.k,
                "winner": {
                    "config": winner.config.describe(),
                    "silhouette": winner.silhouette,
                    "davies_bouldin": winner.davies_bouldin,
                    "calinski_harabasz": winner.calinski_harabasz,
                },
            }
        )
        return winner.assignment, winner

    assignment, winner = run_stage("cluster", cluster_fn, cluster_info)

    # -- profile
    def profile_fn():
        if "profile" in resume:
            with open(resume["profile"], "r", encoding="utf-8") as fh:
                return profiles_from_json(fh.read())
        normalization = winner.config.normalization if winner else "standard"
        profiles, projection = _profile(frame, channels, raw, assignment, normalization)
        (out / "profiles.json").write_text(
            profiles_to_json(profiles), encoding="utf-8"
        )
        write_projection(projection, assignment, out / "projection.csv")
        return profiles

    profiles = run_stage("profile", profile_fn)

    # -- label
    label_info = {
        "tier": config.tier.tier,
        "temperature": config.llm.temperature,
        "model": config.llm.model,
        "backend": config.backend,
        "run_index": config.run_index,
    }

    def label_fn():
        if "label" in resume:
            with open(resume["label"], "r", encoding="utf-8") as fh:
                return LabelMap.from_document(json.load(fh))
        label_map = _label(profiles, config, backend, manifest.backend_attempts)
        with open(out / "labels.json", "w", encoding="utf-8") as fh:
            json.dump(label_map.to_document(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return label_map

    label_map = run_stage("label", label_fn, label_info)

    # -- build-log
    log_info: dict = {}

    def build_log_fn():
        timeline, seg, cases, dropped, log = _build_log(
            frame, assignment, label_map, config, manifest.config_hash
        )
        write_timeline(timeline, out / "timeline.csv")
        write_xes(log, out / "log.xes")
        write_csv_log(log, out / "log.csv")
        write_drop_report(dropped, out / "drops.json")
        log_info.update(
            {
                "segmentation": seg.describe(),
                "cases": len(log.cases),
                "events": log.event_count,
                "dropped_cases": len(dropped),
            }
        )
        return timeline

    timeline = run_stage("build-log", build_log_fn, log_info)

    # -- evaluate
    if config.evaluation is not None:
        eval_info: dict = {}

        def evaluate_fn():
            result, alignment, report = _evaluate(timeline, config)
            with open(out / "report.json", "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            (out / "alignment.csv").write_text(alignment.to_csv(), encoding="utf-8")
            with open(out / "alignment.json", "w", encoding="utf-8") as fh:
                json.dump(alignment.to_json(), fh, indent=2)
                fh.write("\n")
            eval_info.update({"swa": result.swa, "threshold": result.threshold})
            return result

        run_stage("evaluate", evaluate_fn, eval_info)

    manifest.write()
    return manifest


# ---------------------------------------------------------------------------
# experiment sweep


def run_experiment_sweep(
    config: PipelineConfig,
    tiers: Sequence[int],
    temperatures: Sequence[float],
    runs_per_cell: int,
    concurrency: int = 4,
    backend_factory: Optional[Callable] = None,
) -> dict:
    """Label the same clustering many times over a (tier, temperature)
    grid and score every run against the configured truth file.

    The shared stages (ingest, featurize, cluster, profile) run once.
    Per-run failures are recorded, not fatal: a cell's statistics cover
    its successful runs, and a cell with none appears with ``runs: 0``
    and null statistics so the grid shape is always ``len(tiers) *
    len(temperatures)``. Writes ``sweep_report.json`` plus two plot-ready
    CSVs (accuracy and label diversity by temperature).
    """
    config.validate()
    if config.evaluation is None:
        raise ConfigError("a sweep needs evaluation.truth_path to score runs against")
    tiers = sorted(set(int(t) for t in tiers))
    temperatures = sorted(set(float(t) for t in temperatures))
    if not tiers or not temperatures:
        raise ConfigError("tiers and temperatures must be non-empty")
    if runs_per_cell < 1:
        raise ConfigError("runs_per_cell must be >= 1")
    if concurrency < 1:
        raise ConfigError("concurrency must be >= 1")
    for t in tiers:
        if t == 3 and not config.tier.user_context.strip():
            raise MissingContext(
                "tier 3 prompts need user context; set labeling.user_context"
            )

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if backend_factory is None:
        backend_factory = lambda: make_backend(config)  # noqa: E731

    def shared(fn, stage: str):
        try:
            return fn()
        except BackendError:
            raise
        except Exception as exc:
            if isinstance(exc, StageFailure):
                raise
            raise StageFailure(stage, str(exc)) from exc

    frame, channels, _ = shared(lambda: _ingest(config), "ingest")
    raw = shared(lambda: _featurize(frame, channels, config), "featurize")
    ranked = shared(lambda: _cluster(raw, config), "cluster")
    winner = ranked[0]
    assignment = winner.assignment
    profiles = shared(
        lambda: cluster_profiles(frame, channels, assignment), "profile"
    )
    real_profiles = [p for p in profiles if p.cluster_id >= 0]

    truth = read_truth(config.evaluation.truth_path)
    if len(truth) != len(frame):
        raise StageFailure(
            "evaluate",
            f"truth has {len(truth)} rows but the input has {len(frame)} rows",
        )
    reference = list(truth)

    warnings: list = []
    provider = _scoring_provider(config.evaluation, warnings)
    threshold = config.evaluation.threshold

    tasks = [
        (tier, temperature, run_index)
        for tier in tiers
        for temperature in temperatures
        for run_index in range(runs_per_cell)
    ]

    def run_one(tier: int, temperature: float, run_index: int):
        prompt_tier = PromptTier(tier, config.tier.user_context)
        options = replace(config.llm, temperature=temperature)
        backend = backend_factory()
        label_map = label_clusters(
            real_profiles, prompt_tier, options, backend, run_index=run_index
        )
        predicted = _predicted_rows(assignment, label_map)
        result = swa(
            instances_from_rows(predicted, reference), threshold, provider
        )
        return SweepRun(tier, temperature, run_index, result), label_map

    runs: list = []
    failures: list = []
    maps_by_cell: dict = {
        (tier, temp): [] for tier in tiers for temp in temperatures
    }
    with concurrent.futures.ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = [pool.submit(run_one, *task) for task in tasks]
        for task, future in zip(tasks, futures):
            tier, temperature, run_index = task
            try:
                run, label_map = future.result()
            except Exception as exc:
                failures.append(
                    {
                        "tier": tier,
                        "temperature": temperature,
                        "run_index": run_index,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
                continue
            runs.append(run)
            maps_by_cell[(tier, temperature)].append(label_map)

    summaries = {
        (g.tier, g.temperature): g.to_json()
        for g in (aggregate_sweep(runs) if runs else [])
    }
    groups = []
    for tier in tiers:
        for temperature in temperatures:
            row = summaries.get((tier, temperature))
            if row is None:
                row = {
                    "tier": tier,
                    "temperature": temperature,
                    "runs": 0,
                    "mean": None,
                    "std": None,
                    "se": None,
                    "min": None,
                    "max": None,
                }
            groups.append(row)

    diversity = []
    for tier in tiers:
        for temperature in temperatures:
            maps = maps_by_cell[(tier, temperature)]
            diversity.append(
                {
                    "tier": tier,
                    "temperature": temperature,
                    "runs": len(maps),
                    "unique_labels": label_diversity(maps) if maps else 0,
                }
            )

    report = {
        "tool_version": __version__,
        "config_hash": config.config_hash(),
        "tiers": tiers,
        "temperatures": temperatures,
        "runs_per_cell": runs_per_cell,
        "threshold": threshold,
        "provider": provider.kind,
        "clustering": {
            "config": winner.config.describe(),
            "k": assignment.k,
            "silhouette": winner.silhouette,
        },
        "groups": groups,
        "diversity": diversity,
        "failures": failures,
        "warnings": warnings,
    }

    with open(out / "sweep_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")

    def fmt(value) -> str:
        return "" if value is None else repr(float(value))

    with open(out / "accuracy_by_temperature.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("tier,temperature,runs,mean_swa,std_swa,se_swa,min_swa,max_swa\n")
        for row in groups:
            fh.write(
                f"{row['tier']},{row['temperature']},{row['runs']},"
                f"{fmt(row['mean'])},{fmt(row['std'])},{fmt(row['se'])},"
                f"{fmt(row['min'])},{fmt(row['max'])}\n"
            )
    with open(out / "diversity_by_temperature.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("tier,temperature,runs,unique_labels\n")
        for row in diversity:
            fh.write(
                f"{row['tier']},{row['temperature']},{row['runs']},{row['unique_labels']}\n"
            )

    return report
