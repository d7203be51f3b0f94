"""Inspection and editing API over a finished pipeline run directory.

``create_app(run_dir)`` serves the artifacts written by the pipeline:
the clustering ranking, cluster profiles, the 2-D projection, the label
map, an event-log preview, and the evaluation report. Two endpoints
mutate state:

* ``POST /api/labels`` edits cluster labels under optimistic
  concurrency — the request carries the version it was based on and is
  rejected with 409 when someone else edited in between. Accepted edits
  are persisted to ``labels.json`` and recorded in the manifest's
  mutation list.
* ``POST /api/segmentation`` replaces the case-segmentation settings
  used by the preview (in memory only; the original artifacts on disk
  stay as the pipeline wrote them).

``GET /api/eventlog/preview`` rebuilds cases from the stored frame and
cluster assignment with the *current* labels and segmentation, so edits
show up immediately without rewriting the exported logs.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .clustering import read_assignment
from .errors import ConfigError, EmptyAfterSanitize, IotMinerError
from .eventlog import (
    SEGMENTATION_METHODS,
    SegmentationConfig,
    build_event_log,
    default_segmentation_config,
    labeled_timeline,
    segment_cases,
)
from .ingestion import format_timestamp, read_frame
from .labeling import LabelMap, sanitize_label
from .pipeline import MANIFEST_NAME, read_manifest


class LabelEdit(BaseModel):
    base_version: int = Field(ge=1)
    entries: dict[int, str]


class SegmentationEdit(BaseModel):
    method: str
    gap_threshold_s: Optional[float] = None
    change_channel: Optional[str] = None
    sensitivity: Optional[float] = None
    min_activities_per_case: int = 2
    max_case_duration_s: Optional[float] = None
    merge_consecutive: bool = True


class _RunState:
    """Everything the endpoints read or edit, behind one lock."""

    def __init__(self, run_dir: Path):
        self.dir = run_dir
        self.lock = threading.Lock()
        self.manifest = read_manifest(run_dir / MANIFEST_NAME)
        with open(run_dir / "labels.json", "r", encoding="utf-8") as fh:
            self.label_map = LabelMap.from_document(json.load(fh))
        self.labels_version = 1
        self.frame = read_frame(run_dir / "frame.csv")
        self.assignment = read_assignment(run_dir / "assignment.csv")
        seg_doc = None
        for stage in self.manifest.get("stages", ()):
            if stage["name"] == "build-log":
                seg_doc = stage["info"].get("segmentation")
        if seg_doc is not None:
            self.segmentation = SegmentationConfig(**seg_doc)
        else:
            self.segmentation = default_segmentation_config(self.frame.timestamps)

    def record_mutation(self, kind: str, info: dict) -> None:
        self.manifest.setdefault("mutations", []).append(
            {
                "kind": kind,
                "at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
                "info": info,
            }
        )
        tmp = self.dir / (MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2)
            fh.write("\n")
        tmp.replace(self.dir / MANIFEST_NAME)

    def write_labels(self) -> None:
        with open(self.dir / "labels.json", "w", encoding="utf-8") as fh:
            json.dump(self.label_map.to_document(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def build_preview(self, max_cases: int) -> dict:
        timeline = labeled_timeline(self.frame, self.assignment, self.label_map)
        seg = self.segmentation
        change_values = None
        if seg.method == "sensor-change":
            if seg.change_channel not in self.frame.channels:
                raise ConfigError(
                    f"change_channel {seg.change_channel!r} not in frame"
                )
            change_values = self.frame.channels[seg.change_channel]
        cases, dropped = segment_cases(timeline, seg, change_values=change_values)
        log = build_event_log(cases)
        shown = log.cases[:max_cases]
        return {
            "labels_version": self.labels_version,
            "segmentation": seg.describe(),
            "totals": {
                "cases": len(log.cases),
                "events": log.event_count,
                "dropped_cases": len(dropped),
            },
            "cases": [
                {
                    "case_id": case.case_id,
                    "start": format_timestamp(case.start),
                    "end": format_timestamp(case.end),
                    "events": [
                        {
                            "activity": ev.activity,
                            "start": format_timestamp(ev.start),
                            "end": format_timestamp(ev.end),
                        }
                        for ev in case.events
                    ],
                }
                for case in shown
            ],
        }


def _read_csv_records(path: Path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        records = []
        for line in fh:
            if not line.strip():
                continue
            records.append(dict(zip(header, line.rstrip("\n").split(","))))
    return records


def create_app(run_dir) -> FastAPI:
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ConfigError(f"{run_dir} is not a pipeline run directory (no {MANIFEST_NAME})")
    state = _RunState(run_dir)
    app = FastAPI(title="iotminer run inspector", version=state.manifest.get("tool_version", ""))
    # single-user local tool; the browser UI is served from its own dev
    # origin, so cross-origin reads of this API must be allowed
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def artifact(name: str) -> Path:
        path = run_dir / name
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"run has no {name}")
        return path

    @app.get("/api/state")
    def get_state():
        return {
            "tool_version": state.manifest.get("tool_version"),
            "config_hash": state.manifest.get("config_hash"),
            "created": state.manifest.get("created"),
            "stages": [
                {"name": s["name"], "status": s["status"]}
                for s in state.manifest.get("stages", ())
            ],
            "artifacts": state.manifest.get("artifacts", []),
            "labels_version": state.labels_version,
            "mutations": len(state.manifest.get("mutations", [])),
        }

    @app.get("/api/clustering")
    def get_clustering():
        with open(artifact("ranking.json"), "r", encoding="utf-8") as fh:
            return json.load(fh)

    @app.get("/api/profiles")
    def get_profiles():
        with open(artifact("profiles.json"), "r", encoding="utf-8") as fh:
            return json.load(fh)

    @app.get("/api/projection")
    def get_projection():
        records = _read_csv_records(artifact("projection.csv"))
        points = [
            {
                "row_id": int(r["row_id"]),
                "x": float(r["x"]),
                "y": float(r["y"]),
                "cluster_id": int(r["cluster_id"]),
            }
            for r in records
        ]
        return {"points": points}

    @app.get("/api/labels")
    def get_labels():
        with state.lock:
            doc = state.label_map.to_document()
            doc["version"] = state.labels_version
            return doc

    @app.post("/api/labels")
    def post_labels(edit: LabelEdit):
        with state.lock:
            if edit.base_version != state.labels_version:
                raise HTTPException(
                    status_code=409,
                    detail={
                        "message": "labels changed since this edit was prepared",
                        "current_version": state.labels_version,
                    },
                )
            if not edit.entries:
                raise HTTPException(status_code=422, detail="entries must be non-empty")
            current = dict(state.label_map.entries)
            for cid, text in edit.entries.items():
                if cid not in current:
                    raise HTTPException(
                        status_code=422, detail=f"unknown cluster id {cid}"
                    )
                try:
                    current[cid] = sanitize_label(text)
                except (EmptyAfterSanitize, IotMinerError) as exc:
                    raise HTTPException(
                        status_code=422,
                        detail=f"bad label for cluster {cid}: {exc}",
                    ) from exc
            provenance = dict(state.label_map.provenance)
            provenance["edited"] = "manual"
            state.label_map = LabelMap(
                entries=current,
                ambiguous=state.label_map.ambiguous,
                provenance=provenance,
            )
            state.labels_version += 1
            state.write_labels()
            state.record_mutation(
                "label-edit",
                {
                    "clusters": sorted(edit.entries),
                    "version": state.labels_version,
                },
            )
            doc = state.label_map.to_document()
            doc["version"] = state.labels_version
            return doc

    @app.post("/api/segmentation")
    def post_segmentation(edit: SegmentationEdit):
        with state.lock:
            if edit.method not in SEGMENTATION_METHODS:
                raise HTTPException(
                    status_code=422,
                    detail=f"method must be one of {list(SEGMENTATION_METHODS)}",
                )
            try:
                seg = SegmentationConfig(
                    method=edit.method,
                    gap_threshold_s=edit.gap_threshold_s,
                    change_channel=edit.change_channel,
                    sensitivity=edit.sensitivity,
                    min_activities_per_case=edit.min_activities_per_case,
                    max_case_duration_s=edit.max_case_duration_s,
                    merge_consecutive=edit.merge_consecutive,
                )
            except ConfigError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            if (
                seg.method == "sensor-change"
                and seg.change_channel not in state.frame.channels
            ):
                raise HTTPException(
                    status_code=422,
                    detail=f"change_channel {seg.change_channel!r} not in frame",
                )
            state.segmentation = seg
            state.record_mutation("segmentation-edit", {"segmentation": seg.describe()})
            return seg.describe()

    @app.get("/api/eventlog/preview")
    def get_preview(cases: int = Query(default=10, ge=1, le=500)):
        with state.lock:
            try:
                return state.build_preview(cases)
            except IotMinerError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/api/evaluation")
    def get_evaluation():
        with open(artifact("report.json"), "r", encoding="utf-8") as fh:
            report = json.load(fh)
        alignment_path = run_dir / "alignment.json"
        if alignment_path.is_file():
            with open(alignment_path, "r", encoding="utf-8") as fh:
                report["alignment"] = json.load(fh)
        return report

    @app.get("/api/sweep")
    def get_sweep():
        # present when a sweep report was produced alongside (or copied
        # into) this run directory; the UI line chart reads it
        with open(artifact("sweep_report.json"), "r", encoding="utf-8") as fh:
            return json.load(fh)

    return app
