"""Loading heterogeneous sensor exports into typed frames.

Supports delimited text (comma / semicolon / tab / pipe) and JSON-lines.
Format sniffing picks the delimiter with the most consistent per-row field
count and the first column that parses as an instant, trying timestamp
patterns in a fixed order (ISO-8601 variants, compact ``yymmddTHH:MM:SS``,
epoch seconds, epoch milliseconds). All instants are treated as UTC.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, Optional, Union

import numpy as np

from .errors import (
    ConfigError,
    NoDelimiterFound,
    NoSensorColumns,
    NoTimestampColumn,
    RaggedRow,
    TimestampParseError,
)

DELIMITERS = (",", ";", "\t", "|")

#: Missing-value sentinels (case-insensitive), plus the empty field.
MISSING_SENTINELS = frozenset({"", "na", "nan", "null"})

#: Ordered timestamp patterns. Strings are strftime patterns except the two
#: epoch sentinels. First pattern parsing >= 95% of sampled rows wins.
TIMESTAMP_PATTERNS = (
    "%Y-%m-%dT%H:%M:%S.%f",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S.%f",
    "%Y-%m-%d %H:%M:%S",
    "%y%m%dT%H:%M:%S",
    "epoch_s",
    "epoch_ms",
)

#: Substrings (lowercased) that mark a channel name as metadata.
METADATA_NAME_PATTERNS = ("time", "date", "id", "uuid", "name")

_BOOL_LITERALS = frozenset({"0", "1", "true", "false"})

# Plausible epoch ranges: ~1973..2096 in seconds / milliseconds.
_EPOCH_S_RANGE = (1e8, 4e9)
_EPOCH_MS_RANGE = (1e11, 4e12)


@dataclass(frozen=True)
class FormatDescriptor:
    """How to read one delimited-text source."""

    delimiter: str
    encoding: str
    has_header: bool
    timestamp_column: str
    timestamp_pattern: str

    def __post_init__(self):
        if self.delimiter not in DELIMITERS:
            raise ConfigError(f"delimiter must be one of {DELIMITERS}, got {self.delimiter!r}")


@dataclass(frozen=True)
class ChannelInfo:
    """Per-channel tags: role is ``sensor`` or ``metadata``; kind is
    ``numeric``, ``boolean`` or ``text``."""

    role: str
    kind: str


@dataclass(frozen=True)
class InterpolationPolicy:
    method: str = "linear"
    max_gap: int = 5
    per_channel_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("linear", "previous-value", "zero-fill"):
            raise ConfigError(f"unknown interpolation method {self.method!r}")
        if self.max_gap < 1:
            raise ConfigError("max_gap must be >= 1")
        for name, m in self.per_channel_overrides.items():
            if m not in ("linear", "previous-value", "zero-fill"):
                raise ConfigError(f"unknown interpolation method {m!r} for channel {name!r}")


@dataclass(frozen=True)
class Gap:
    """One unrepaired run of missing values."""

    channel: str
    gap_start_index: int
    gap_length: int


@dataclass(frozen=True)
class RepairSummary:
    gaps: tuple

    def to_json(self) -> str:
        return json.dumps(
            [
                {"channel": g.channel, "gap_start_index": g.gap_start_index, "gap_length": g.gap_length}
                for g in self.gaps
            ],
            indent=2,
        )


class SensorFrame:
    """Immutable timestamped table of named channels.

    Numeric and boolean channels are float64 arrays with NaN for missing
    values (booleans hold 0.0/1.0); text channels are object arrays with
    None for missing. Timestamps are ``datetime64[us]``, sorted
    non-decreasing, and every channel has the same length.
    """

    def __init__(self, timestamps: np.ndarray, channels: dict, channel_meta: dict):
        timestamps = np.asarray(timestamps, dtype="datetime64[us]")
        n = len(timestamps)
        if len(channels) != len(channel_meta):
            raise ConfigError("channels and channel_meta must cover the same names")
        seen = set()
        for name, values in channels.items():
            if name in seen:
                raise ConfigError(f"duplicate channel name {name!r}")
            seen.add(name)
            if name not in channel_meta:
                raise ConfigError(f"missing channel_meta for {name!r}")
            if len(values) != n:
                raise ConfigError(f"channel {name!r} has {len(values)} values for {n} timestamps")
        if n > 1 and not np.all(timestamps[:-1] <= timestamps[1:]):
            raise ConfigError("timestamps must be sorted non-decreasing")
        timestamps.flags.writeable = False
        frozen = {}
        for name, values in channels.items():
            arr = np.asarray(values)
            if arr.dtype != object:
                arr = arr.astype(np.float64)
            arr.flags.writeable = False
            frozen[name] = arr
        self.timestamps = timestamps
        self.channels = frozen
        self.channel_meta = dict(channel_meta)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def channel_names(self) -> list:
        return list(self.channels)

    def sensor_channels(self) -> list:
        """Names of numeric/boolean channels (regardless of name patterns)."""
        return [n for n, m in self.channel_meta.items() if m.kind in ("numeric", "boolean")]

    def with_channels(self, channels: dict) -> "SensorFrame":
        """Copy with some channel arrays replaced."""
        merged = dict(self.channels)
        merged.update(channels)
        return SensorFrame(self.timestamps, merged, self.channel_meta)


# --- instant parsing -------------------------------------------------------

def _parse_instant(value: str, pattern: str) -> Optional[np.datetime64]:
    s = value.strip()
    if not s:
        return None
    if pattern == "epoch_s" or pattern == "epoch_ms":
        try:
            v = float(s)
        except ValueError:
            return None
        lo, hi = _EPOCH_S_RANGE if pattern == "epoch_s" else _EPOCH_MS_RANGE
        if not (lo <= v < hi):
            return None
        micros = round(v * (1e6 if pattern == "epoch_s" else 1e3))
        return np.datetime64(int(micros), "us")
    # Tolerate the common UTC suffixes; anything else is out of scope.
    if s.endswith("Z"):
        s = s[:-1]
    elif s.endswith("+00:00"):
        s = s[:-6]
    try:
        dt = datetime.strptime(s, pattern)
    except ValueError:
        return None
    return np.datetime64(dt, "us")


def _detect_pattern(values: list) -> Optional[str]:
    """First pattern (in TIMESTAMP_PATTERNS order) parsing >= 95% of values."""
    if not values:
        return None
    needed = math.ceil(0.95 * len(values))
    for pattern in TIMESTAMP_PATTERNS:
        hits = sum(1 for v in values if _parse_instant(v, pattern) is not None)
        if hits >= needed:
            return pattern
    return None


def _is_missing(s: str) -> bool:
    return s.strip().lower() in MISSING_SENTINELS


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# --- format detection ------------------------------------------------------

def _decode_sample(sample: bytes):
    if sample.startswith(b"\xef\xbb\xbf"):
        return sample[3:].decode("utf-8", errors="replace"), "utf-8-sig"
    try:
        return sample.decode("utf-8"), "utf-8"
    except UnicodeDecodeError:
        return sample.decode("latin-1"), "latin-1"


def _split_fields(line: str, delimiter: str) -> list:
    return next(csv.reader([line], delimiter=delimiter))


def detect_format(sample: bytes) -> FormatDescriptor:
    """Sniff delimiter, encoding, header presence and the timestamp column
    from the first bytes of a delimited-text source.

    The delimiter that minimizes per-row field-count variance wins (ties:
    more columns, then candidate order). The timestamp column is the first
    column whose sampled values parse as instants under some pattern in
    >= 95% of rows.
    """
    if not sample:
        raise ConfigError("empty sample")
    text, encoding = _decode_sample(sample)
    lines = text.splitlines()
    if len(lines) > 1 and not text.endswith(("\n", "\r")):
        lines = lines[:-1]  # last line may be truncated mid-row
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise NoDelimiterFound("sample contains no non-blank lines")

    best = None
    for delimiter in DELIMITERS:
        counts = [len(_split_fields(ln, delimiter)) for ln in lines]
        most = max(set(counts), key=counts.count)
        if most < 2:
            continue
        mean = sum(counts) / len(counts)
        variance = sum((c - mean) ** 2 for c in counts) / len(counts)
        key = (variance, -most)
        if best is None or key < best[0]:
            best = (key, delimiter)
    if best is None:
        raise NoDelimiterFound("no delimiter candidate yields >= 2 consistent columns")
    delimiter = best[1]

    rows = [_split_fields(ln, delimiter) for ln in lines]
    width = max(len(r) for r in rows)

    def looks_like_value(s):
        return _is_number(s) or any(_parse_instant(s, p) is not None for p in TIMESTAMP_PATTERNS)

    first_has_value = any(looks_like_value(f) for f in rows[0] if f.strip())
    rest_has_value = any(looks_like_value(f) for r in rows[1:] for f in r if f.strip())
    has_header = (not first_has_value) and (rest_has_value or len(rows) == 1)

    if has_header:
        names = [c.strip() for c in rows[0]]
        data_rows = rows[1:]
    else:
        names = [f"col_{i}" for i in range(width)]
        data_rows = rows

    ts_column = None
    ts_pattern = None
    for i, name in enumerate(names):
        values = [r[i] for r in data_rows if i < len(r) and not _is_missing(r[i])]
        if not data_rows:
            # Header-only sample: take the first column on faith.
            ts_column, ts_pattern = name, TIMESTAMP_PATTERNS[1]
            break
        pattern = _detect_pattern(values)
        if pattern is not None:
            ts_column, ts_pattern = name, pattern
            break
    if ts_column is None:
        raise NoTimestampColumn("no column parses as an instant in >= 95% of sampled rows")

    return FormatDescriptor(
        delimiter=delimiter,
        encoding=encoding,
        has_header=has_header,
        timestamp_column=ts_column,
        timestamp_pattern=ts_pattern,
    )


# --- loading ---------------------------------------------------------------

def _read_text(source: Union[bytes, str, Path, BinaryIO], encoding: str) -> str:
    if isinstance(source, bytes):
        raw = source
    elif isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    else:
        raw = source.read()
    if encoding == "utf-8-sig" or raw.startswith(b"\xef\xbb\xbf"):
        return raw.decode("utf-8-sig")
    return raw.decode(encoding)


def _type_column(raw_values: list):
    """Classify one column's raw strings and build its array.

    All non-missing values in {0,1,true,false} -> boolean; all numeric ->
    numeric; otherwise text. All-missing columns are numeric (all NaN).
    """
    present = [v for v in raw_values if not _is_missing(v)]
    if present and all(v.strip().lower() in _BOOL_LITERALS for v in present):
        kind = "boolean"
    elif all(_is_number(v) for v in present):
        kind = "numeric"
    else:
        kind = "text"

    if kind == "text":
        arr = np.array([None if _is_missing(v) else v.strip() for v in raw_values], dtype=object)
        return arr, ChannelInfo(role="metadata", kind="text")
    out = np.empty(len(raw_values), dtype=np.float64)
    for i, v in enumerate(raw_values):
        if _is_missing(v):
            out[i] = np.nan
        elif kind == "boolean":
            out[i] = 1.0 if v.strip().lower() in ("1", "true") else 0.0
        else:
            out[i] = float(v)
    return out, ChannelInfo(role="sensor", kind=kind)


def load_frame(source: Union[bytes, str, Path, BinaryIO], fmt: FormatDescriptor) -> SensorFrame:
    """Parse a delimited-text source into a SensorFrame.

    Raises TimestampParseError (with the offending 0-based data-row index)
    and RaggedRow on field-count mismatches. Rows are re-sorted by
    timestamp, stable for ties.
    """
    text = _read_text(source, fmt.encoding)
    reader = csv.reader(io.StringIO(text), delimiter=fmt.delimiter)
    rows = [r for r in reader if any(f.strip() for f in r)]
    if not rows:
        raise ConfigError("source contains no rows")

    if fmt.has_header:
        names = [c.strip() for c in rows[0]]
        data = rows[1:]
    else:
        names = [f"col_{i}" for i in range(len(rows[0]))]
        data = rows
    if len(set(names)) != len(names):
        raise ConfigError("duplicate column names in header")
    if fmt.timestamp_column not in names:
        raise ConfigError(f"timestamp column {fmt.timestamp_column!r} not in columns {names}")
    ts_idx = names.index(fmt.timestamp_column)

    width = len(names)
    for i, row in enumerate(data):
        if len(row) != width:
            raise RaggedRow(i, width, len(row))

    timestamps = np.empty(len(data), dtype="datetime64[us]")
    for i, row in enumerate(data):
        ts = _parse_instant(row[ts_idx], fmt.timestamp_pattern)
        if ts is None:
            raise TimestampParseError(i, row[ts_idx], fmt.timestamp_pattern)
        timestamps[i] = ts

    order = np.argsort(timestamps, kind="stable")
    timestamps = timestamps[order]

    channels = {}
    meta = {}
    for j, name in enumerate(names):
        if j == ts_idx:
            continue
        raw = [data[int(k)][j] for k in order]
        channels[name], meta[name] = _type_column(raw)
    return SensorFrame(timestamps, channels, meta)


def load_jsonl(
    source: Union[bytes, str, Path, BinaryIO],
    timestamp_column: Optional[str] = None,
    timestamp_pattern: Optional[str] = None,
) -> SensorFrame:
    """Parse a JSON-lines source (one object per row) into a SensorFrame.

    Column typing follows the delimited-text rules; values missing from an
    object are missing values. The timestamp column is auto-detected when
    not named.
    """
    text = _read_text(source, "utf-8")
    objects = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {i}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"line {i}: expected an object per row")
        objects.append(obj)
    if not objects:
        raise ConfigError("source contains no rows")

    names = []
    for obj in objects:
        for key in obj:
            if key not in names:
                names.append(key)

    def as_string(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    columns = {name: [as_string(obj.get(name)) for obj in objects] for name in names}

    if timestamp_column is None:
        for name in names:
            values = [v for v in columns[name] if not _is_missing(v)]
            pattern = _detect_pattern(values)
            if pattern is not None:
                timestamp_column, timestamp_pattern = name, pattern
                break
        if timestamp_column is None:
            raise NoTimestampColumn("no key parses as an instant in >= 95% of rows")
    elif timestamp_pattern is None:
        values = [v for v in columns[timestamp_column] if not _is_missing(v)]
        timestamp_pattern = _detect_pattern(values)
        if timestamp_pattern is None:
            raise NoTimestampColumn(f"key {timestamp_column!r} does not parse as an instant")
    if timestamp_column not in columns:
        raise ConfigError(f"timestamp column {timestamp_column!r} not present")

    timestamps = np.empty(len(objects), dtype="datetime64[us]")
    for i, v in enumerate(columns[timestamp_column]):
        ts = _parse_instant(v, timestamp_pattern)
        if ts is None:
            raise TimestampParseError(i, v, timestamp_pattern)
        timestamps[i] = ts
    order = np.argsort(timestamps, kind="stable")
    timestamps = timestamps[order]

    channels = {}
    meta = {}
    for name in names:
        if name == timestamp_column:
            continue
        raw = [columns[name][int(k)] for k in order]
        channels[name], meta[name] = _type_column(raw)
    return SensorFrame(timestamps, channels, meta)


# --- repair ----------------------------------------------------------------

def _missing_runs(values: np.ndarray) -> Iterable[tuple]:
    """Yield (start, length) for each maximal run of NaN."""
    isnan = np.isnan(values)
    i = 0
    n = len(values)
    while i < n:
        if isnan[i]:
            j = i
            while j < n and isnan[j]:
                j += 1
            yield i, j - i
            i = j
        else:
            i += 1


def interpolate_missing(frame: SensorFrame, policy: InterpolationPolicy):
    """Repair missing values per channel; returns (frame, RepairSummary).

    Boolean channels always use previous-value. Gaps longer than max_gap,
    and gaps the method cannot anchor (linear needs both neighbors,
    previous-value a left one), stay missing and are listed in the summary.
    """
    repaired = {}
    gaps = []
    n = len(frame)
    for name, values in frame.channels.items():
        info = frame.channel_meta[name]
        if info.kind == "text":
            continue
        method = "previous-value" if info.kind == "boolean" else policy.per_channel_overrides.get(name, policy.method)
        out = values.copy()
        touched = False
        for start, length in _missing_runs(values):
            left = start - 1
            right = start + length
            anchored = {
                "linear": left >= 0 and right < n,
                "previous-value": left >= 0,
                "zero-fill": True,
            }[method]
            if length > policy.max_gap or not anchored:
                gaps.append(Gap(channel=name, gap_start_index=start, gap_length=length))
                continue
            touched = True
            if method == "zero-fill":
                out[start:right] = 0.0
            elif method == "previous-value":
                out[start:right] = out[left]
            else:
                out[start:right] = np.interp(
                    np.arange(start, right),
                    [left, right],
                    [values[left], values[right]],
                )
        if touched:
            repaired[name] = out
    new_frame = frame.with_channels(repaired) if repaired else frame
    return new_frame, RepairSummary(gaps=tuple(gaps))


# --- sensor selection ------------------------------------------------------

def _is_metadata_name(name: str) -> bool:
    low = name.lower()
    return any(p in low for p in METADATA_NAME_PATTERNS)


def select_sensor_columns(frame: SensorFrame, min_variation: float) -> list:
    """Numeric/boolean channels with meaningful variation.

    Excludes metadata-named channels (substrings: time, date, id, uuid,
    name), constants, and channels whose coefficient of variation
    (std/|mean|; distinct-value count for booleans) does not exceed
    min_variation.
    """
    if not frame.sensor_channels():
        raise NoSensorColumns("frame has no numeric or boolean channels")
    selected = []
    for name in frame.channel_names:
        info = frame.channel_meta[name]
        if info.kind == "text" or _is_metadata_name(name):
            continue
        values = frame.channels[name]
        present = values[~np.isnan(values)]
        if len(present) == 0:
            continue
        distinct = len(np.unique(present))
        if distinct <= 1:
            continue  # constant channels always excluded
        if info.kind == "boolean":
            variation = float(distinct)
        else:
            std = float(np.std(present))
            mean = float(np.mean(present))
            variation = math.inf if mean == 0.0 else std / abs(mean)
        if variation > min_variation:
            selected.append(name)
    if not selected:
        raise NoSensorColumns("no channel passes the variation threshold")
    return selected


# --- serialization ---------------------------------------------------------

def drop_duplicate_timestamps(frame: SensorFrame) -> SensorFrame:
    """Keep the first row of every run of equal timestamps."""
    if len(frame) < 2:
        return frame
    keep = np.ones(len(frame), dtype=bool)
    keep[1:] = frame.timestamps[1:] != frame.timestamps[:-1]
    channels = {}
    for name, values in frame.channels.items():
        channels[name] = values[keep] if values.dtype != object else values[keep]
    return SensorFrame(frame.timestamps[keep], channels, frame.channel_meta)


def format_timestamp(ts: np.datetime64) -> str:
    return ts.astype("datetime64[us]").item().strftime("%Y-%m-%dT%H:%M:%S.%f")


def write_frame(frame: SensorFrame, path: Union[str, Path]) -> None:
    """Write the canonical delimited form: ``timestamp`` plus channels,
    floats at 17 significant digits so reloading is bit-exact."""
    names = frame.channel_names
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["timestamp"] + names)
        for i in range(len(frame)):
            row = [format_timestamp(frame.timestamps[i])]
            for name in names:
                values = frame.channels[name]
                if values.dtype == object:
                    row.append("" if values[i] is None else values[i])
                else:
                    v = values[i]
                    row.append("" if np.isnan(v) else format_float(v))
            writer.writerow(row)


def format_float(v: float) -> str:
    return "%.17g" % v


def read_frame(path: Union[str, Path]) -> SensorFrame:
    """Load a frame from any supported file, sniffing the format."""
    raw = Path(path).read_bytes()
    head = raw[:65536]
    stripped = head.lstrip()
    if stripped.startswith(b"{"):
        return load_jsonl(raw)
    fmt = detect_format(head if len(head) >= 4096 else raw)
    return load_frame(raw, fmt)
