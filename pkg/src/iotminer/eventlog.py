"""Case segmentation and event-log serialization.

Joins cluster assignments with their labels into a per-row activity
timeline, cuts the timeline into cases (by time gaps, day boundaries, or
jumps in a designated sensor channel), optionally merges consecutive
identical activities, and serializes the result as XES 1.0 XML or flat
CSV. The XES writer emits attributes in a fixed order so identical logs
produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyTimeline,
    UnlabeledCluster,
)
from .ingestion import SensorFrame, format_timestamp
from .clustering import NOISE, ClusterAssignment
from .labeling import LabelMap

NOISE_ACTIVITY = "Unclassified"

SEGMENTATION_METHODS = ("time-gap", "day-boundary", "sensor-change")

CASE_ID_WIDTH = 4


# --- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class SegmentationConfig:
    """How to cut the activity timeline into cases."""

    method: str = "time-gap"
    gap_threshold_s: Optional[float] = None
    change_channel: Optional[str] = None
    sensitivity: Optional[float] = None
    min_activities_per_case: int = 2
    max_case_duration_s: Optional[float] = None
    merge_consecutive: bool = True

    def __post_init__(self):
        if self.method not in SEGMENTATION_METHODS:
            raise ConfigError(
                f"unknown segmentation method {self.method!r}; "
                f"expected one of {SEGMENTATION_METHODS}"
            )
        if self.method == "time-gap":
            if self.gap_threshold_s is None or self.gap_threshold_s <= 0:
                raise ConfigError("time-gap method needs gap_threshold_s > 0")
        if self.method == "sensor-change":
            if not self.change_channel:
                raise ConfigError("sensor-change method needs change_channel")
            if self.sensitivity is None or self.sensitivity < 0:
                raise ConfigError("sensor-change method needs sensitivity >= 0")
        if self.min_activities_per_case < 1:
            raise ConfigError("min_activities_per_case must be >= 1")
        if self.max_case_duration_s is not None and self.max_case_duration_s <= 0:
            raise ConfigError("max_case_duration_s must be positive or None")

    def describe(self) -> dict:
        out = {
            "method": self.method,
            "min_activities_per_case": self.min_activities_per_case,
            "max_case_duration_s": self.max_case_duration_s,
            "merge_consecutive": self.merge_consecutive,
        }
        if self.method == "time-gap":
            out["gap_threshold_s"] = self.gap_threshold_s
        if self.method == "sensor-change":
            out["change_channel"] = self.change_channel
            out["sensitivity"] = self.sensitivity
        return out


@dataclass(frozen=True)
class Event:
    """One activity interval; covers timeline rows start..end inclusive."""

    activity: str
    start: np.datetime64
    end: np.datetime64
    source_rows: Optional[tuple] = None

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(
                f"event end {self.end} precedes start {self.start}"
            )
        if self.source_rows is not None:
            lo, hi = self.source_rows
            if hi < lo:
                raise ConfigError(f"bad source row range {self.source_rows}")


@dataclass(frozen=True)
class Case:
    case_id: str
    events: tuple

    def __post_init__(self):
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.start < prev.start:
                raise ConfigError(f"case {self.case_id}: events out of order")
            if cur.start < prev.end:
                raise ConfigError(f"case {self.case_id}: events overlap")

    @property
    def start(self) -> np.datetime64:
        return self.events[0].start

    @property
    def end(self) -> np.datetime64:
        return self.events[-1].end


@dataclass(frozen=True)
class EventLog:
    cases: tuple
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.case_id for c in self.cases]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate case ids: {dupes}")

    @property
    def event_count(self) -> int:
        return sum(len(c.events) for c in self.cases)


@dataclass(frozen=True)
class DroppedCase:
    case_ordinal: int
    reason: str
    row_range: tuple

    def to_json(self) -> dict:
        return {
            "case_ordinal": self.case_ordinal,
            "reason": self.reason,
            "row_range": list(self.row_range),
        }


# --- timeline ---------------------------------------------------------------

def labeled_timeline(
    frame: SensorFrame,
    assignment: ClusterAssignment,
    label_map: LabelMap,
) -> list:
    """Join rows with their cluster labels into an ordered activity stream.

    Returns [(timestamp, activity), ...] in row order. Noise rows get the
    reserved activity name; any real cluster without a label is an error.
    """
    if len(assignment.labels) != len(frame):
        raise ConfigError(
            f"assignment covers {len(assignment.labels)} rows, "
            f"frame has {len(frame)}"
        )
    out = []
    for i, cid in enumerate(assignment.labels):
        cid = int(cid)
        if cid == NOISE:
            activity = NOISE_ACTIVITY
        else:
            if cid not in label_map.entries:
                raise UnlabeledCluster(cid)
            activity = label_map.entries[cid]
        out.append((frame.timestamps[i], activity))
    return out


def write_timeline(timeline: Sequence, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "timestamp", "activity"])
        for i, (instant, activity) in enumerate(timeline):
            writer.writerow([i, format_timestamp(instant), activity])


def read_timeline(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_id", "timestamp", "activity"]:
            raise ConfigError(f"unexpected timeline header {header!r}")
        out = []
        for row in reader:
            if not row:
                continue
            _, stamp, activity = row
            instant = np.datetime64(
                datetime.strptime(stamp, "%Y-%m-%dT%H:%M:%S.%f"), "us"
            )
            out.append((instant, activity))
    return out


def default_segmentation_config(
    timestamps: np.ndarray,
    min_activities_per_case: int = 2,
    merge_consecutive: bool = True,
) -> SegmentationConfig:
    """Time-gap segmentation with a threshold of 10x the median sampling
    interval — scale-free, derived from the data itself."""
    if len(timestamps) < 2:
        raise EmptyTimeline("need at least two rows to infer a sampling interval")
    deltas = np.diff(timestamps.astype("datetime64[us]").astype(np.int64)) / 1e6
    median_dt = float(np.median(deltas))
    if median_dt <= 0:
        raise ConfigError("median sampling interval is not positive")
    return SegmentationConfig(
        method="time-gap",
        gap_threshold_s=10.0 * median_dt,
        min_activities_per_case=min_activities_per_case,
        merge_consecutive=merge_consecutive,
    )


# --- segmentation -----------------------------------------------------------

def _method_boundaries(timeline, config, change_values) -> list:
    """Indices i where a new case starts at timeline[i] (excluding 0)."""
    times = [t for t, _ in timeline]
    bounds = []
    if config.method == "time-gap":
        threshold = np.timedelta64(int(round(config.gap_threshold_s * 1e6)), "us")
        for i in range(1, len(times)):
            if times[i] - times[i - 1] > threshold:
                bounds.append(i)
    elif config.method == "day-boundary":
        days = [t.astype("datetime64[D]") for t in times]
        for i in range(1, len(days)):
            if days[i] != days[i - 1]:
                bounds.append(i)
    else:  # sensor-change
        if change_values is None:
            raise ConfigError(
                "sensor-change segmentation needs the change channel's values"
            )
        if len(change_values) != len(timeline):
            raise ConfigError(
                f"change_values covers {len(change_values)} rows, "
                f"timeline has {len(timeline)}"
            )
        vals = np.asarray(change_values, dtype=np.float64)
        for i in range(1, len(vals)):
            if abs(vals[i] - vals[i - 1]) > config.sensitivity:
                bounds.append(i)
    return bounds


def _rows_to_events(timeline, lo: int, hi: int) -> list:
    """Per-row events for timeline rows lo..hi inclusive. Each event spans
    to the next row's instant; the segment's last event has zero length, so
    events tile the segment exactly."""
    events = []
    for i in range(lo, hi + 1):
        start = timeline[i][0]
        end = timeline[i + 1][0] if i < hi else timeline[i][0]
        events.append(
            Event(
                activity=timeline[i][1],
                start=start,
                end=end,
                source_rows=(i, i),
            )
        )
    return events


def _split_max_duration(row_ranges, timeline, max_duration_s: float) -> list:
    """Split each (lo, hi) row range so no piece spans longer than the
    bound, cutting before the first row that would exceed it."""
    limit = np.timedelta64(int(round(max_duration_s * 1e6)), "us")
    out = []
    for lo, hi in row_ranges:
        piece_start = lo
        for i in range(lo + 1, hi + 1):
            if timeline[i][0] - timeline[piece_start][0] > limit:
                out.append((piece_start, i - 1))
                piece_start = i
        out.append((piece_start, hi))
    return out


def merge_consecutive(case: Case) -> Case:
    """Collapse maximal runs of equal adjacent activities into one event
    spanning the run. Idempotent; preserves the covered time span."""
    if not case.events:
        return case
    merged = []
    run = [case.events[0]]
    for ev in case.events[1:]:
        if ev.activity == run[-1].activity:
            run.append(ev)
        else:
            merged.append(_collapse_run(run))
            run = [ev]
    merged.append(_collapse_run(run))
    return Case(case_id=case.case_id, events=tuple(merged))


def _collapse_run(run) -> Event:
    if len(run) == 1:
        return run[0]
    first, last = run[0], run[-1]
    if first.source_rows is not None and last.source_rows is not None:
        rows = (first.source_rows[0], last.source_rows[1])
    else:
        rows = None
    return Event(
        activity=first.activity,
        start=first.start,
        end=last.end,
        source_rows=rows,
    )


def segment_cases(
    timeline: Sequence,
    config: SegmentationConfig,
    change_values=None,
) -> tuple:
    """Cut the timeline into cases.

    Returns (cases, dropped) where dropped lists candidate cases removed
    for having too few activities. Ordinals are assigned to all candidate
    cases before dropping, so retained case ids and the drop report share
    one numbering (retained ids may have holes).
    """
    if len(timeline) == 0:
        raise EmptyTimeline("cannot segment an empty timeline")
    for (t_prev, _), (t_cur, _) in zip(timeline, timeline[1:]):
        if t_cur < t_prev:
            raise ConfigError("timeline is not sorted by instant")

    bounds = _method_boundaries(timeline, config, change_values)
    edges = [0] + bounds + [len(timeline)]
    row_ranges = [(edges[i], edges[i + 1] - 1) for i in range(len(edges) - 1)]

    if config.max_case_duration_s is not None:
        row_ranges = _split_max_duration(
            row_ranges, timeline, config.max_case_duration_s
        )

    cases = []
    dropped = []
    for ordinal, (lo, hi) in enumerate(row_ranges, start=1):
        case = Case(
            case_id=f"case_{ordinal:0{CASE_ID_WIDTH}d}",
            events=tuple(_rows_to_events(timeline, lo, hi)),
        )
        if config.merge_consecutive:
            case = merge_consecutive(case)
        if len(case.events) < config.min_activities_per_case:
            dropped.append(
                DroppedCase(
                    case_ordinal=ordinal,
                    reason="min_activities",
                    row_range=(lo, hi),
                )
            )
        else:
            cases.append(case)
    return cases, dropped


def build_event_log(
    cases: Sequence,
    source: str = "",
    config_hash: str = "",
) -> EventLog:
    attributes = {}
    if source:
        attributes["source"] = source
    if config_hash:
        attributes["config_hash"] = config_hash
    return EventLog(cases=tuple(cases), attributes=attributes)


def write_drop_report(dropped: Sequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([d.to_json() for d in dropped], fh, indent=2)
        fh.write("\n")


# --- XES --------------------------------------------------------------------

_XES_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<log xes.version="1.0" xes.features="" '
    'xmlns="http://www.xes-standard.org/">\n'
    '  <extension name="Concept" prefix="concept" '
    'uri="http://www.xes-standard.org/concept.xesext"/>\n'
    '  <extension name="Time" prefix="time" '
    'uri="http://www.xes-standard.org/time.xesext"/>\n'
)


def _xml_escape(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _xes_timestamp(ts: np.datetime64) -> str:
    """ISO-8601 UTC with millisecond precision, e.g.
    2024-10-01T06:03:02.712+00:00. Sub-millisecond detail is truncated."""
    dt = ts.astype("datetime64[us]").astype(datetime)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}+00:00"


def to_xes(log: EventLog) -> str:
    """Serialize as XES 1.0 XML. Attribute order is fixed (activity name,
    start, end, source rows) so equal logs give byte-equal output."""
    parts = [_XES_HEADER]
    for key in sorted(log.attributes):
        parts.append(
            f'  <string key="{_xml_escape(key)}" '
            f'value="{_xml_escape(str(log.attributes[key]))}"/>\n'
        )
    for case in log.cases:
        parts.append("  <trace>\n")
        parts.append(
            f'    <string key="concept:name" value="{_xml_escape(case.case_id)}"/>\n'
        )
        for ev in case.events:
            parts.append("    <event>\n")
            parts.append(
                f'      <string key="concept:name" value="{_xml_escape(ev.activity)}"/>\n'
            )
            parts.append(
                f'      <date key="time:timestamp" value="{_xes_timestamp(ev.start)}"/>\n'
            )
            parts.append(
                f'      <date key="end_time" value="{_xes_timestamp(ev.end)}"/>\n'
            )
            if ev.source_rows is not None:
                parts.append(
                    f'      <int key="row_start" value="{ev.source_rows[0]}"/>\n'
                )
                parts.append(
                    f'      <int key="row_end" value="{ev.source_rows[1]}"/>\n'
                )
            parts.append("    </event>\n")
        parts.append("  </trace>\n")
    parts.append("</log>\n")
    return "".join(parts)


def write_xes(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_xes(log))


def _parse_xes_timestamp(text: str) -> np.datetime64:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.replace(tzinfo=None)
    return np.datetime64(dt, "us")


def read_xes(source) -> EventLog:
    """Parse XES produced by to_xes (or any log using the same attribute
    keys) back into an EventLog. Generic XML parsing — shares no code with
    the writer."""
    import xml.etree.ElementTree as ET

    text = source if isinstance(source, str) and source.lstrip().startswith("<") else None
    if text is None:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    root = ET.fromstring(text)
    ns = ""
    if root.tag.startswith("{"):
        ns = root.tag[: root.tag.index("}") + 1]

    def children(node, tag):
        return node.findall(f"{ns}{tag}")

    def attr_map(node):
        out = {}
        for kind in ("string", "date", "int"):
            for child in children(node, kind):
                out[child.get("key")] = (kind, child.get("value"))
        return out

    log_attrs = {}
    for child in children(root, "string"):
        log_attrs[child.get("key")] = child.get("value")

    cases = []
    for trace in children(root, "trace"):
        trace_attrs = attr_map(trace)
        case_id = trace_attrs["concept:name"][1]
        events = []
        for ev_node in children(trace, "event"):
            attrs = attr_map(ev_node)
            activity = attrs["concept:name"][1]
            start = _parse_xes_timestamp(attrs["time:timestamp"][1])
            end = (
                _parse_xes_timestamp(attrs["end_time"][1])
                if "end_time" in attrs
                else start
            )
            rows = None
            if "row_start" in attrs and "row_end" in attrs:
                rows = (int(attrs["row_start"][1]), int(attrs["row_end"][1]))
            events.append(
                Event(activity=activity, start=start, end=end, source_rows=rows)
            )
        cases.append(Case(case_id=case_id, events=tuple(events)))
    return EventLog(cases=tuple(cases), attributes=log_attrs)


# --- CSV --------------------------------------------------------------------

def to_csv(log: EventLog) -> str:
    """Flat export: case_id,activity,start,end with RFC-4180 quoting.
    Source row ranges and log attributes do not survive this format."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "activity", "start", "end"])
    for case in log.cases:
        for ev in case.events:
            writer.writerow(
                [
                    case.case_id,
                    ev.activity,
                    format_timestamp(ev.start),
                    format_timestamp(ev.end),
                ]
            )
    return buf.getvalue()


def write_csv_log(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(log))


def read_csv_log(source) -> EventLog:
    """Inverse of to_csv up to what the format carries: no source rows, no
    log attributes."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["case_id", "activity", "start", "end"]:
        raise ConfigError(f"unexpected event-log CSV header {header!r}")
    order = []
    by_case = {}
    for row in reader:
        if not row:
            continue
        case_id, activity, start, end = row
        if case_id not in by_case:
            by_case[case_id] = []
            order.append(case_id)
        by_case[case_id].append(
            Event(
                activity=activity,
                start=np.datetime64(
                    datetime.strptime(start, "%Y-%m-%dT%H:%M:%S.%f"), "us"
                ),
                end=np.datetime64(
                    datetime.strptime(end, "%Y-%m-%dT%H:%M:%S.%f"), "us"
                ),
            )
        )
    cases = tuple(
        Case(case_id=cid, events=tuple(by_case[cid])) for cid in order
    )
    return EventLog(cases=cases, attributes={})
