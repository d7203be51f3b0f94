"""Synthetic duty-cycle sensor data with planted ground truth.

Simulates a load-haul-dump machine cycling through six operating modes
(idle, load, haul, dump, return, stop). Each mode holds for a random
dwell, emitting the five engine channels — accelerator pedal position,
engine speed, oil pressure, fuel rate, torque — as Gaussian draws around
the mode's mean vector. Everything is driven by one seeded generator, so
a fixed seed reproduces the data byte for byte. The mode per row is
returned alongside the frame as ground truth, which lets the full
pipeline be scored against a known partition at desk scale.

Channel means are placeholders chosen for separability between modes,
not measurements of any real machine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .ingestion import ChannelInfo, SensorFrame

CHANNELS = ("APP", "ES", "OP", "FR", "TQ")

DEFAULT_START = "2024-10-01T06:00:00"


@dataclass(frozen=True)
class Mode:
    """One operating mode: per-channel emission Gaussian + dwell bounds."""

    name: str
    means: dict
    stds: dict
    dwell_s: tuple

    def __post_init__(self):
        for store, label in ((self.means, "means"), (self.stds, "stds")):
            missing = [c for c in CHANNELS if c not in store]
            if missing:
                raise ConfigError(f"mode {self.name!r} {label} missing {missing}")
        if any(self.stds[c] < 0 for c in CHANNELS):
            raise ConfigError(f"mode {self.name!r} has negative std")
        lo, hi = self.dwell_s
        if not 0 < lo <= hi:
            raise ConfigError(
                f"mode {self.name!r} dwell bounds {self.dwell_s} invalid"
            )


@dataclass(frozen=True)
class DutyCycleSpec:
    modes: tuple
    cycle_order: tuple
    sample_interval_s: float = 1.0
    total_duration_s: float = 6000.0
    noise_std: float = 1.0
    seed: int = 42
    idle_insertion_prob: float = 0.0
    idle_mode: str = "Idling"
    ar1_phi: float = 0.0
    start_time: str = DEFAULT_START

    def __post_init__(self):
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate mode names")
        unknown = [name for name in self.cycle_order if name not in names]
        if unknown:
            raise ConfigError(f"cycle_order references unknown modes {unknown}")
        if not self.cycle_order:
            raise ConfigError("cycle_order is empty")
        if self.sample_interval_s <= 0:
            raise ConfigError("sample_interval_s must be positive")
        if self.total_duration_s < self.sample_interval_s:
            raise ConfigError("total_duration_s shorter than one sample")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0.0 <= self.idle_insertion_prob <= 1.0:
            raise ConfigError("idle_insertion_prob must be in [0, 1]")
        if self.idle_insertion_prob > 0 and self.idle_mode not in names:
            raise ConfigError(f"idle_mode {self.idle_mode!r} is not a mode")
        if not 0.0 <= self.ar1_phi < 1.0:
            raise ConfigError("ar1_phi must be in [0, 1)")

    def mode(self, name: str) -> Mode:
        for m in self.modes:
            if m.name == name:
                return m
        raise ConfigError(f"no mode named {name!r}")


def _mode(name, app, es, op, fr, tq, dwell=(30, 90)):
    stds = {"APP": 1.5, "ES": 25.0, "OP": 6.0, "FR": 0.8, "TQ": 1.2}
    return Mode(
        name=name,
        means={"APP": app, "ES": es, "OP": op, "FR": fr, "TQ": tq},
        stds=stds,
        dwell_s=dwell,
    )


def default_spec(seed: int = 42, total_duration_s: float = 6000.0) -> DutyCycleSpec:
    """Six well-separated modes cycling idle -> load -> haul -> dump ->
    return -> stop. Mean separation is tens of intra-mode stds on every
    informative channel, so a correct pipeline recovers the partition."""
    modes = (
        _mode("Idling", 0.0, 750.0, 240.0, 4.0, 8.0),
        _mode("Loading", 85.0, 1900.0, 520.0, 38.0, 82.0),
        _mode("Hauling Loaded", 70.0, 2100.0, 560.0, 30.0, 65.0),
        _mode("Dumping", 45.0, 1500.0, 430.0, 18.0, 45.0),
        _mode("Returning Empty", 55.0, 1750.0, 480.0, 22.0, 30.0),
        _mode("Stopped", 0.0, 0.0, 0.0, 0.0, 0.0, dwell=(20, 60)),
    )
    return DutyCycleSpec(
        modes=modes,
        cycle_order=(
            "Idling",
            "Loading",
            "Hauling Loaded",
            "Dumping",
            "Returning Empty",
            "Stopped",
        ),
        seed=seed,
        total_duration_s=total_duration_s,
    )


def _mode_sequence(spec: DutyCycleSpec, n_rows: int, rng) -> list:
    """Per-row mode names: walk the cycle, drawing each dwell uniformly
    from the mode's bounds (in whole samples), until the row budget is
    spent. The final dwell is truncated at the budget."""
    out = []
    step = 0
    while len(out) < n_rows:
        name = spec.cycle_order[step % len(spec.cycle_order)]
        step += 1
        if (
            spec.idle_insertion_prob > 0
            and name != spec.idle_mode
            and rng.random() < spec.idle_insertion_prob
        ):
            out.extend(_one_dwell(spec, spec.idle_mode, rng))
        out.extend(_one_dwell(spec, name, rng))
    return out[:n_rows]


def _one_dwell(spec: DutyCycleSpec, name: str, rng) -> list:
    mode = spec.mode(name)
    lo_s, hi_s = mode.dwell_s
    lo = max(1, int(np.ceil(lo_s / spec.sample_interval_s)))
    hi = max(lo, int(np.floor(hi_s / spec.sample_interval_s)))
    return [name] * int(rng.integers(lo, hi + 1))


def generate(spec: DutyCycleSpec) -> tuple:
    """Returns (frame, truth): the sensor frame plus the planted per-row
    activity names (object array, same length)."""
    rng = np.random.default_rng(spec.seed)
    n_rows = int(spec.total_duration_s // spec.sample_interval_s)
    sequence = _mode_sequence(spec, n_rows, rng)

    mode_index = {m.name: i for i, m in enumerate(spec.modes)}
    mean_table = np.array(
        [[m.means[c] for c in CHANNELS] for m in spec.modes], dtype=np.float64
    )
    std_table = np.array(
        [[m.stds[c] for c in CHANNELS] for m in spec.modes], dtype=np.float64
    )
    row_modes = np.array([mode_index[name] for name in sequence], dtype=np.intp)

    noise = rng.standard_normal((n_rows, len(CHANNELS)))
    if spec.ar1_phi > 0:
        # stationary AR(1) per channel: same marginal variance, smoother path
        phi = spec.ar1_phi
        scale = np.sqrt(1.0 - phi * phi)
        smoothed = np.empty_like(noise)
        smoothed[0] = noise[0]
        for t in range(1, n_rows):
            smoothed[t] = phi * smoothed[t - 1] + scale * noise[t]
        noise = smoothed

    values = mean_table[row_modes] + spec.noise_std * std_table[row_modes] * noise

    base = np.datetime64(spec.start_time, "us")
    interval = np.timedelta64(int(round(spec.sample_interval_s * 1e6)), "us")
    timestamps = base + np.arange(n_rows) * interval

    channels = {c: values[:, j].copy() for j, c in enumerate(CHANNELS)}
    channel_meta = {c: ChannelInfo(role="sensor", kind="numeric") for c in CHANNELS}
    frame = SensorFrame(timestamps, channels, channel_meta)
    truth = np.array(sequence, dtype=object)
    return frame, truth


def write_truth(truth: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("row_id,activity\n")
        for i, name in enumerate(truth):
            fh.write(f"{i},{name}\n")


def read_truth(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "row_id,activity":
            raise ConfigError(f"unexpected truth header {header!r}")
        return np.array(
            [line.rstrip("\n").split(",", 1)[1] for line in fh if line.strip()],
            dtype=object,
        )


# --- spec (de)serialization -------------------------------------------------

def spec_to_json(spec: DutyCycleSpec) -> dict:
    return {
        "modes": [
            {
                "name": m.name,
                "means": dict(m.means),
                "stds": dict(m.stds),
                "dwell_s": list(m.dwell_s),
            }
            for m in spec.modes
        ],
        "cycle_order": list(spec.cycle_order),
        "sample_interval_s": spec.sample_interval_s,
        "total_duration_s": spec.total_duration_s,
        "noise_std": spec.noise_std,
        "seed": spec.seed,
        "idle_insertion_prob": spec.idle_insertion_prob,
        "idle_mode": spec.idle_mode,
        "ar1_phi": spec.ar1_phi,
        "start_time": spec.start_time,
    }


def spec_from_json(data: dict) -> DutyCycleSpec:
    try:
        modes = tuple(
            Mode(
                name=m["name"],
                means=dict(m["means"]),
                stds=dict(m["stds"]),
                dwell_s=tuple(m["dwell_s"]),
            )
            for m in data["modes"]
        )
        kwargs = {
            key: data[key]
            for key in (
                "sample_interval_s",
                "total_duration_s",
                "noise_std",
                "seed",
                "idle_insertion_prob",
                "idle_mode",
                "ar1_phi",
                "start_time",
            )
            if key in data
        }
        return DutyCycleSpec(
            modes=modes, cycle_order=tuple(data["cycle_order"]), **kwargs
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed duty-cycle spec: {exc}") from exc


def load_spec(path) -> DutyCycleSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))


def save_spec(spec: DutyCycleSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_json(spec), fh, indent=2)
        fh.write("\n")
