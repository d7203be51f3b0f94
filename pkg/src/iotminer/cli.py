"""Command-line interface.

One subcommand per pipeline stage plus ``run`` (the whole pipeline),
``sweep`` (labeling experiments over a tier/temperature grid), ``synth``
(generate test data) and ``serve`` (the inspection API).

Exit codes: 0 success, 1 invalid configuration (rejected before any
stage ran), 2 stage failure (a stage started and broke), 3 backend
failure (the labeling endpoint refused or timed out). Backend
credentials come from the ``IOTMINER_API_KEY`` environment variable.

Flag precedence for ``run`` and ``sweep``: command-line flags override
the config file, which overrides built-in defaults.
"""

from __future__ import annotations

import functools
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .clustering import (
    default_search_space,
    grid_search_matrix,
    read_assignment,
    results_to_json,
    write_assignment,
)
from .errors import BackendError, ConfigError, IotMinerError, MissingContext, StageFailure
from .eventlog import (
    SEGMENTATION_METHODS,
    SegmentationConfig,
    build_event_log,
    default_segmentation_config,
    labeled_timeline,
    read_xes,
    segment_cases,
    write_csv_log,
    write_drop_report,
    write_timeline,
    write_xes,
)
from .evaluation import (
    alignment_matrix,
    instances_from_logs,
    instances_from_rows,
    make_provider,
    swa,
    swa_report,
    write_swa_report,
)
from .featurization import FeatureSpec, build_feature_matrix, read_feature_matrix, write_feature_matrix
from .ingestion import (
    InterpolationPolicy,
    drop_duplicate_timestamps,
    interpolate_missing,
    read_frame,
    select_sensor_columns,
    write_frame,
)
from .labeling import HttpBackend, LabelMap, LlmOptions, MockBackend, PromptTier, label_clusters
from .pipeline import (
    PipelineConfig,
    run_experiment_sweep,
    run_pipeline,
)
from .profiling import cluster_profiles, pca_project, profiles_from_json, profiles_to_json, write_projection
from .synthgen import default_spec, generate, load_spec, write_truth

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h|d)?\s*$")

_DURATION_UNITS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0, None: 1.0}


def parse_duration(text: str) -> float:
    """``"15m"`` -> 900.0; bare numbers are seconds."""
    match = _DURATION_RE.match(text)
    if not match:
        raise ConfigError(
            f"cannot parse duration {text!r}; use a number with an optional"
            " ms/s/m/h/d suffix, e.g. 90s or 15m"
        )
    return float(match.group(1)) * _DURATION_UNITS[match.group(2)]


def _parse_csv_list(text):
    if text is None:
        return None
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"empty list {text!r}")
    return items


def cli_errors(fn):
    """Map package exceptions to the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BackendError as exc:
            click.echo(f"backend failure: {exc}", err=True)
            sys.exit(3)
        except StageFailure as exc:
            click.echo(f"stage failure: {exc}", err=True)
            sys.exit(2)
        except (ConfigError, MissingContext) as exc:
            click.echo(f"invalid configuration: {exc}", err=True)
            sys.exit(1)
        except IotMinerError as exc:
            click.echo(f"stage failure: {exc}", err=True)
            sys.exit(2)
        except OSError as exc:
            click.echo(f"invalid configuration: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="iotminer")
def main():
    """Mine labeled event logs out of raw industrial sensor data."""


# ---------------------------------------------------------------------------
# synth


@main.command()
@click.option("--spec", "spec_path", type=click.Path(), help="Duty-cycle spec JSON (default: built-in six-mode cycle).")
@click.option("--seed", type=int, default=None, help="Override the spec's RNG seed.")
@click.option("--duration", default=None, help="Override total duration, e.g. 100m or 6000s.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Frame CSV to write.")
@click.option("--truth", "truth_path", type=click.Path(), help="Also write per-row activity truth CSV.")
@cli_errors
def synth(spec_path, seed, duration, out_path, truth_path):
    """Generate a synthetic multi-sensor duty-cycle recording."""
    spec = load_spec(spec_path) if spec_path else default_spec()
    if seed is not None:
        spec = replace(spec, seed=seed)
    if duration is not None:
        spec = replace(spec, total_duration_s=parse_duration(duration))
    frame, truth = generate(spec)
    write_frame(frame, out_path)
    click.echo(f"wrote {len(frame)} rows x {len(frame.channels)} channels to {out_path}")
    if truth_path:
        write_truth(truth, truth_path)
        click.echo(f"wrote truth to {truth_path}")


# ---------------------------------------------------------------------------
# single stages


@main.command()
@click.option("--input", "input_path", type=click.Path(), required=True, help="Raw sensor file (CSV or JSONL; format is sniffed).")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Cleaned frame CSV to write.")
@click.option("--method", type=click.Choice(["linear", "previous-value", "zero-fill"]), default="linear", show_default=True, help="Gap interpolation method.")
@click.option("--max-gap", type=int, default=5, show_default=True, help="Longest run of missing samples to repair.")
@click.option("--min-variation", type=float, default=0.01, show_default=True, help="Coefficient-of-variation floor for auto channel selection.")
@cli_errors
def ingest(input_path, out_path, method, max_gap, min_variation):
    """Load, deduplicate and repair a raw sensor file."""
    frame = read_frame(input_path)
    frame = drop_duplicate_timestamps(frame)
    frame, repairs = interpolate_missing(frame, InterpolationPolicy(method=method, max_gap=max_gap))
    write_frame(frame, out_path)
    channels = select_sensor_columns(frame, min_variation)
    click.echo(
        f"wrote {len(frame)} rows to {out_path};"
        f" repaired {len(repairs.gaps)} gaps;"
        f" sensor channels: {', '.join(channels)}"
    )


@main.command()
@click.option("--frame", "frame_path", type=click.Path(), required=True, help="Cleaned frame CSV.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Feature matrix CSV to write (plus .meta.json sidecar).")
@click.option("--channels", default=None, help="Comma-separated channel names (default: auto-select).")
@click.option("--min-variation", type=float, default=0.01, show_default=True)
@click.option("--diff/--no-diff", "add_diff", default=False, show_default=True, help="Add first-difference channels.")
@click.option("--diff-epsilon", type=float, default=0.0, show_default=True)
@click.option("--derivatives", default=None, help="Comma-separated derivative orders (1 and/or 2).")
@click.option("--window", type=int, default=1, show_default=True, help="Rolling window length in samples.")
@click.option("--window-stats", default=None, help="Comma-separated rolling stats (mean,std,min,max).")
@cli_errors
def featurize(frame_path, out_path, channels, min_variation, add_diff, diff_epsilon, derivatives, window, window_stats):
    """Turn a cleaned frame into a per-row feature matrix."""
    frame = read_frame(frame_path)
    base = _parse_csv_list(channels) or select_sensor_columns(frame, min_variation)
    spec = FeatureSpec(
        base_channels=tuple(base),
        add_differential_coding=add_diff,
        diff_epsilon=diff_epsilon,
        derivative_orders=tuple(int(d) for d in (_parse_csv_list(derivatives) or ())),
        window=window,
        window_stats=tuple(_parse_csv_list(window_stats) or ()),
    )
    matrix = build_feature_matrix(frame, spec)
    write_feature_matrix(matrix, out_path)
    click.echo(f"wrote {matrix.rows.shape[0]} x {matrix.rows.shape[1]} feature matrix to {out_path}")


@main.command()
@click.option("--features", "features_path", type=click.Path(), required=True, help="Feature matrix CSV from featurize.")
@click.option("--out-dir", type=click.Path(), required=True, help="Directory for ranking.json and assignment.csv.")
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cluster(features_path, out_dir, seed):
    """Grid-search clustering configs and keep the best partition."""
    raw = read_feature_matrix(features_path)
    ranked = grid_search_matrix(raw, search_space=default_search_space(raw, seed=seed))
    winner = ranked[0]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ranking.json").write_text(results_to_json(ranked), encoding="utf-8")
    write_assignment(winner.assignment, out / "assignment.csv")
    desc = winner.config.describe()
    click.echo(
        f"winner: {desc['algorithm']} ({desc['normalization']}) k={winner.assignment.k}"
        f" silhouette={winner.silhouette:.4f}"
    )


@main.command()
@click.option("--frame", "frame_path", type=click.Path(), required=True)
@click.option("--assignment", "assignment_path", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True, help="Directory for profiles.json and projection.csv.")
@click.option("--channels", default=None, help="Comma-separated channel names (default: auto-select).")
@click.option("--min-variation", type=float, default=0.01, show_default=True)
@cli_errors
def profile(frame_path, assignment_path, out_dir, channels, min_variation):
    """Summarize each cluster in original sensor units."""
    frame = read_frame(frame_path)
    assignment = read_assignment(assignment_path)
    names = _parse_csv_list(channels) or select_sensor_columns(frame, min_variation)
    profiles = cluster_profiles(frame, names, assignment)
    spec = FeatureSpec(base_channels=tuple(names))
    projection = pca_project(build_feature_matrix(frame, spec))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "profiles.json").write_text(profiles_to_json(profiles), encoding="utf-8")
    write_projection(projection, assignment, out / "projection.csv")
    real = sum(1 for p in profiles if p.cluster_id >= 0)
    click.echo(f"profiled {real} clusters to {out}")


@main.command()
@click.option("--profiles", "profiles_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Label map JSON to write.")
@click.option("--tier", type=click.IntRange(1, 3), default=1, show_default=True, help="Prompt detail tier.")
@click.option("--context", default="", help="Domain context text (required for tier 3).")
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--model", default="gpt-4", show_default=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--max-tokens", type=int, default=600, show_default=True)
@click.option("--endpoint", default=None, help="Chat-completions URL (http backend).")
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@click.option("--rank-channel", default=None, help="Channel the mock backend ranks clusters by.")
@click.option("--run-index", type=int, default=0, show_default=True)
@cli_errors
def label(profiles_path, out_path, tier, context, backend, model, temperature, max_tokens, endpoint, timeout, retries, rank_channel, run_index):
    """Name clusters with an LLM (or the deterministic mock)."""
    with open(profiles_path, "r", encoding="utf-8") as fh:
        profiles = profiles_from_json(fh.read())
    prompt_tier = PromptTier(tier, user_context=context)
    if tier == 3 and not context.strip():
        raise MissingContext("tier 3 prompts need --context")
    kwargs = {"model": model, "temperature": temperature, "max_tokens": max_tokens, "timeout": timeout, "retries": retries}
    if endpoint is not None:
        kwargs["endpoint"] = endpoint
    options = LlmOptions(**kwargs)
    backend_obj = MockBackend(rank_channel=rank_channel) if backend == "mock" else HttpBackend()
    real = [p for p in profiles if p.cluster_id >= 0]
    label_map = label_clusters(real, prompt_tier, options, backend_obj, run_index=run_index)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(label_map.to_document(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"labeled {len(label_map.entries)} clusters to {out_path}")


@main.command("build-log")
@click.option("--frame", "frame_path", type=click.Path(), required=True)
@click.option("--assignment", "assignment_path", type=click.Path(), required=True)
@click.option("--labels", "labels_path", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True, help="Directory for timeline.csv, log.xes, log.csv, drops.json.")
@click.option("--method", type=click.Choice(list(SEGMENTATION_METHODS)), default=None, help="Case segmentation method (default: time-gap at 10x the median interval).")
@click.option("--gap-threshold", default=None, help="Gap that starts a new case, e.g. 90s or 15m.")
@click.option("--change-channel", default=None, help="Channel watched by sensor-change segmentation.")
@click.option("--sensitivity", type=float, default=None, help="Jump size that starts a new case (sensor-change).")
@click.option("--min-activities", type=int, default=2, show_default=True, help="Drop cases with fewer activities.")
@click.option("--max-case-duration", default=None, help="Split cases longer than this, e.g. 8h.")
@click.option("--merge/--no-merge", "merge_consecutive", default=True, show_default=True, help="Merge consecutive same-activity events.")
@cli_errors
def build_log(frame_path, assignment_path, labels_path, out_dir, method, gap_threshold, change_channel, sensitivity, min_activities, max_case_duration, merge_consecutive):
    """Segment the labeled timeline into cases and export event logs."""
    frame = read_frame(frame_path)
    assignment = read_assignment(assignment_path)
    with open(labels_path, "r", encoding="utf-8") as fh:
        label_map = LabelMap.from_document(json.load(fh))
    timeline = labeled_timeline(frame, assignment, label_map)
    if method is None:
        seg = default_segmentation_config(frame.timestamps, min_activities_per_case=min_activities, merge_consecutive=merge_consecutive)
        if max_case_duration is not None:
            seg = replace(seg, max_case_duration_s=parse_duration(max_case_duration))
    else:
        seg = SegmentationConfig(
            method=method,
            gap_threshold_s=parse_duration(gap_threshold) if gap_threshold else None,
            change_channel=change_channel,
            sensitivity=sensitivity,
            min_activities_per_case=min_activities,
            max_case_duration_s=parse_duration(max_case_duration) if max_case_duration else None,
            merge_consecutive=merge_consecutive,
        )
    change_values = None
    if seg.method == "sensor-change":
        if seg.change_channel not in frame.channels:
            raise ConfigError(f"change_channel {seg.change_channel!r} not in frame")
        change_values = frame.channels[seg.change_channel]
    cases, dropped = segment_cases(timeline, seg, change_values=change_values)
    log = build_event_log(cases, source=Path(frame_path).name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_timeline(timeline, out / "timeline.csv")
    write_xes(log, out / "log.xes")
    write_csv_log(log, out / "log.csv")
    write_drop_report(dropped, out / "drops.json")
    click.echo(
        f"{len(log.cases)} cases, {log.event_count} events"
        f" ({len(dropped)} cases dropped) -> {out}"
    )


@main.command()
@click.option("--predicted", "predicted_path", type=click.Path(), required=True, help="Predicted log (.xes) or per-row activity CSV.")
@click.option("--reference", "reference_path", type=click.Path(), required=True, help="Reference log (.xes) or per-row activity CSV.")
@click.option("--threshold", type=float, default=0.6, show_default=True, help="Similarity threshold T.")
@click.option("--provider", type=click.Choice(["lexical", "embedding"]), default="lexical", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Report JSON to write.")
@click.option("--alignment-out", type=click.Path(), default=None, help="Also write the label alignment matrix CSV.")
@cli_errors
def evaluate(predicted_path, reference_path, threshold, provider, out_path, alignment_out):
    """Score predicted activities against a reference with
    similarity-weighted accuracy."""
    pred_is_xes = predicted_path.endswith(".xes")
    ref_is_xes = reference_path.endswith(".xes")
    if pred_is_xes != ref_is_xes:
        raise ConfigError(
            "predicted and reference must both be .xes logs or both be"
            " per-row activity CSVs; mixing the two cannot be aligned"
        )
    if pred_is_xes:
        instances = instances_from_logs(read_xes(predicted_path), read_xes(reference_path))
    else:
        instances = instances_from_rows(_read_activity_column(predicted_path), _read_activity_column(reference_path))
    sim = make_provider(provider)
    if provider != "lexical":
        try:
            sim.similarity("probe", "check")
        except BackendError:
            click.echo("embedding provider unavailable; falling back to lexical", err=True)
            sim = make_provider("lexical")
    result = swa(instances, threshold, sim)
    report = swa_report(result, sim)
    write_swa_report(report, out_path)
    if alignment_out:
        Path(alignment_out).write_text(alignment_matrix(instances, sim).to_csv(), encoding="utf-8")
    click.echo(f"swa={result.swa:.6f} (n={result.n}, threshold={result.threshold})")


def _read_activity_column(path: str) -> list:
    """Last column of a per-row CSV; accepts truth files
    (row_id,activity) and timelines (row_id,timestamp,activity)."""
    import csv as _csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-1] != "activity":
            raise ConfigError(f"{path} has no trailing activity column")
        return [row[-1] for row in reader if row]


# ---------------------------------------------------------------------------
# run / sweep / serve


def _config_from_flags(config_path, overrides) -> PipelineConfig:
    doc = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for part in parents:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[leaf] = value
    return PipelineConfig.from_json(doc)


def _run_overrides(input_path, out_dir, channels, seed, tier, context, backend, model, temperature, rank_channel, run_index, truth, threshold, provider):
    return {
        "input_path": input_path,
        "output_dir": out_dir,
        "channels": _parse_csv_list(channels),
        "seed": seed,
        "labeling.tier": tier,
        "labeling.user_context": context,
        "labeling.backend": backend,
        "labeling.model": model,
        "labeling.temperature": temperature,
        "labeling.mock_rank_channel": rank_channel,
        "labeling.run_index": run_index,
        "evaluation.truth_path": truth,
        "evaluation.threshold": threshold,
        "evaluation.provider": provider,
    }


_RUN_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="Pipeline config JSON; flags override its fields."),
    click.option("--input", "input_path", type=click.Path(), default=None, help="Raw sensor file."),
    click.option("--out-dir", type=click.Path(), default=None, help="Run directory for artifacts."),
    click.option("--channels", default=None, help="Comma-separated channel names."),
    click.option("--seed", type=int, default=None, help="Clustering search seed."),
    click.option("--tier", type=click.IntRange(1, 3), default=None, help="Prompt detail tier."),
    click.option("--context", default=None, help="Domain context text for prompts."),
    click.option("--backend", type=click.Choice(["mock", "http"]), default=None),
    click.option("--model", default=None),
    click.option("--temperature", type=float, default=None),
    click.option("--rank-channel", default=None, help="Channel the mock backend ranks clusters by."),
    click.option("--run-index", type=int, default=None),
    click.option("--truth", type=click.Path(), default=None, help="Per-row activity truth CSV; enables the evaluate stage."),
    click.option("--threshold", type=float, default=None),
    click.option("--provider", type=click.Choice(["lexical", "embedding"]), default=None),
]


def _with_run_options(fn):
    for option in reversed(_RUN_OPTIONS):
        fn = option(fn)
    return fn


@main.command()
@_with_run_options
@click.option("--resume", "resume_pairs", multiple=True, help="stage=artifact-path; repeatable. Resumable stages: ingest, featurize, cluster, profile, label.")
@cli_errors
def run(config_path, resume_pairs, **flags):
    """Run the whole pipeline: ingest through event log (and evaluate
    when a truth file is configured)."""
    config = _config_from_flags(config_path, _run_overrides(**flags))
    resume = {}
    for pair in resume_pairs:
        stage, sep, artifact = pair.partition("=")
        if not sep or not artifact:
            raise ConfigError(f"--resume takes stage=path, got {pair!r}")
        resume[stage] = artifact
    manifest = run_pipeline(config, resume=resume or None)
    stages = ", ".join(f"{s['name']}:{s['status']}" for s in manifest.stages)
    click.echo(f"run complete -> {config.output_dir} ({stages})")


@main.command()
@_with_run_options
@click.option("--tiers", default="1,2,3", show_default=True, help="Comma-separated prompt tiers.")
@click.option("--temperatures", default="0.0,0.2,0.4,0.6,0.8,1.0", show_default=True, help="Comma-separated sampling temperatures.")
@click.option("--runs", "runs_per_cell", type=int, default=10, show_default=True, help="Labeling runs per (tier, temperature) cell.")
@click.option("--concurrency", type=int, default=4, show_default=True)
@cli_errors
def sweep(config_path, tiers, temperatures, runs_per_cell, concurrency, **flags):
    """Repeat labeling over a tier/temperature grid and aggregate
    similarity-weighted accuracy per cell."""
    config = _config_from_flags(config_path, _run_overrides(**flags))
    report = run_experiment_sweep(
        config,
        tiers=[int(t) for t in _parse_csv_list(tiers)],
        temperatures=[float(t) for t in _parse_csv_list(temperatures)],
        runs_per_cell=runs_per_cell,
        concurrency=concurrency,
    )
    cells = len(report["groups"])
    failures = len(report["failures"])
    click.echo(
        f"swept {cells} cells x {report['runs_per_cell']} runs"
        f" ({failures} failed runs) -> {config.output_dir}"
    )


@main.command()
@click.option("--run-dir", type=click.Path(), required=True, help="Directory written by `iotminer run`.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@cli_errors
def serve(run_dir, host, port):
    """Serve a finished run for inspection and label editing."""
    import uvicorn

    from .server import create_app

    app = create_app(run_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
