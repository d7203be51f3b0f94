"""Label-quality scoring against ground truth.

Scores predicted activity labels with Similarity-Weighted Accuracy:
each instance contributes its similarity to the reference label when that
similarity clears a threshold, and nothing otherwise. Similarity comes
from a pluggable provider — an offline character-trigram cosine that runs
anywhere, or an embedding-cosine provider wired to a caller-supplied
embedding function. Also builds predicted-vs-reference alignment matrices
(similarity x co-occurrence frequency) and aggregates multi-run sweeps
into mean / sample-std / standard-error summaries.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, EmptyInstances, ProviderUnavailable
from .labeling import LabelMap, sanitize_label

DEFAULT_THRESHOLD = 0.6

CONSISTENCY_TOL = 1e-12


# --- instances --------------------------------------------------------------

@dataclass(frozen=True)
class LabeledInstance:
    """One scored row: what the pipeline called it vs what it truly was."""

    predicted: str
    reference: str

    def __post_init__(self):
        if not self.predicted or not self.reference:
            raise ConfigError("instance labels must be non-empty")


def instances_from_rows(predicted: Sequence, reference: Sequence) -> list:
    if len(predicted) != len(reference):
        raise ConfigError(
            f"{len(predicted)} predicted labels vs {len(reference)} reference labels"
        )
    return [LabeledInstance(p, r) for p, r in zip(predicted, reference)]


def write_instances_csv(instances: Sequence, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "predicted", "reference"])
        for i, inst in enumerate(instances):
            writer.writerow([i, inst.predicted, inst.reference])


def read_instances_csv(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_id", "predicted", "reference"]:
            raise ConfigError(f"unexpected instances CSV header {header!r}")
        out = []
        for row in reader:
            if not row:
                continue
            _, predicted, reference = row
            out.append(LabeledInstance(predicted, reference))
    return out


def instances_from_logs(predicted_log, reference_log) -> list:
    """Join two event logs into instances.

    When every event on both sides carries source row ranges, events are
    expanded to per-row labels and joined on row index (one instance per
    shared row). Otherwise events are joined on their start instants.
    """

    def row_map(log):
        rows = {}
        for case in log.cases:
            for ev in case.events:
                if ev.source_rows is None:
                    return None
                lo, hi = ev.source_rows
                for r in range(lo, hi + 1):
                    rows[r] = ev.activity
        return rows

    pred_rows, ref_rows = row_map(predicted_log), row_map(reference_log)
    if pred_rows is not None and ref_rows is not None:
        shared = sorted(set(pred_rows) & set(ref_rows))
        pairs = [(pred_rows[r], ref_rows[r]) for r in shared]
    else:
        def start_map(log):
            return {
                ev.start.item(): ev.activity
                for case in log.cases
                for ev in case.events
            }

        pred_starts, ref_starts = start_map(predicted_log), start_map(reference_log)
        shared = sorted(set(pred_starts) & set(ref_starts))
        pairs = [(pred_starts[t], ref_starts[t]) for t in shared]
    if not pairs:
        raise EmptyInstances("the two logs share no rows or instants")
    return [LabeledInstance(p, r) for p, r in pairs]


# --- similarity providers ---------------------------------------------------

class SimilarityProvider:
    """Symmetric, cached label-pair similarity in [0, 1]."""

    kind = "abstract"

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()

    def similarity(self, a: str, b: str) -> float:
        if not a or not b:
            raise ConfigError("similarity needs non-empty labels")
        if a == b:
            # identity axiom: never trust floating-point cosine to land
            # exactly on 1.0 for equal inputs
            return 1.0
        key = (a, b) if a <= b else (b, a)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        score = float(self._score(key[0], key[1]))
        if not 0.0 <= score <= 1.0:
            raise ConfigError(f"provider produced out-of-range score {score}")
        with self._lock:
            self._cache[key] = score
        return score

    def _score(self, a: str, b: str) -> float:
        raise NotImplementedError

    @property
    def cache_size(self) -> int:
        return len(self._cache)


def _trigram_counts(label: str) -> Counter:
    text = label.lower()
    if len(text) < 3:
        # too short for trigrams; the whole label is the one token, so
        # equal short labels still score 1 and different ones 0
        return Counter([text])
    return Counter(text[i : i + 3] for i in range(len(text) - 2))


class LexicalSimilarity(SimilarityProvider):
    """Cosine over character-trigram count vectors of lowercase labels.
    Fully offline and deterministic."""

    kind = "lexical"

    def _score(self, a: str, b: str) -> float:
        ca, cb = _trigram_counts(a), _trigram_counts(b)
        dot = sum(ca[t] * cb[t] for t in ca)
        if dot == 0:
            return 0.0
        norm_sq = sum(v * v for v in ca.values()) * sum(v * v for v in cb.values())
        return min(1.0, dot / math.sqrt(norm_sq))


class EmbeddingSimilarity(SimilarityProvider):
    """Cosine of embedding vectors, clamped to [0, 1]. The embedding
    function is injected; without one every lookup raises
    ProviderUnavailable so callers can fall back to the lexical provider."""

    kind = "embedding-cosine"

    def __init__(self, embed: Optional[Callable] = None):
        super().__init__()
        self._embed = embed

    def _score(self, a: str, b: str) -> float:
        if self._embed is None:
            raise ProviderUnavailable("no embedding backend configured")
        va = np.asarray(self._embed(a), dtype=np.float64)
        vb = np.asarray(self._embed(b), dtype=np.float64)
        denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
        if denom == 0.0:
            return 0.0
        cos = float(va @ vb) / denom
        return min(1.0, max(0.0, cos))


def make_provider(kind: str, embed: Optional[Callable] = None) -> SimilarityProvider:
    if kind == "lexical":
        return LexicalSimilarity()
    if kind in ("embedding", "embedding-cosine"):
        return EmbeddingSimilarity(embed=embed)
    raise ConfigError(f"unknown similarity provider {kind!r}")


def similarity(a: str, b: str, provider: SimilarityProvider) -> float:
    return provider.similarity(a, b)


# --- similarity-weighted accuracy -------------------------------------------

@dataclass(frozen=True)
class SwaResult:
    swa: float
    threshold: float
    n: int
    per_instance_scores: tuple

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [0, 1]")
        if self.n != len(self.per_instance_scores):
            raise ConfigError("n disagrees with per_instance_scores length")
        expected = (
            sum(s for s in self.per_instance_scores if s >= self.threshold) / self.n
            if self.n
            else 0.0
        )
        if abs(expected - self.swa) > CONSISTENCY_TOL:
            raise ConfigError(
                f"swa {self.swa} inconsistent with per-instance scores "
                f"(recomputed {expected})"
            )

    def to_json(self) -> dict:
        return {
            "swa": self.swa,
            "threshold": self.threshold,
            "n": self.n,
            "per_instance_scores": list(self.per_instance_scores),
        }


def swa(
    instances: Sequence,
    threshold: float,
    provider: SimilarityProvider,
) -> SwaResult:
    """Mean of per-instance similarities that clear the threshold
    (inclusive); sub-threshold similarities contribute zero."""
    if len(instances) == 0:
        raise EmptyInstances("cannot score zero instances")
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold {threshold} outside [0, 1]")
    scores = tuple(
        provider.similarity(inst.predicted, inst.reference) for inst in instances
    )
    value = sum(s for s in scores if s >= threshold) / len(scores)
    return SwaResult(
        swa=value,
        threshold=threshold,
        n=len(scores),
        per_instance_scores=scores,
    )


# --- alignment matrix -------------------------------------------------------

@dataclass(frozen=True)
class AlignmentMatrix:
    """Rows = predicted labels, columns = reference labels, both ordered by
    frequency (descending, label as tie-break). cells = similarity x
    co-occurrence frequency; frequencies alone sum to 1."""

    predicted_labels: tuple
    reference_labels: tuple
    cells: np.ndarray
    frequencies: np.ndarray

    def to_json(self) -> dict:
        return {
            "predicted_labels": list(self.predicted_labels),
            "reference_labels": list(self.reference_labels),
            "cells": [[float(v) for v in row] for row in self.cells],
            "frequencies": [[float(v) for v in row] for row in self.frequencies],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["predicted\\reference", *self.reference_labels])
        for label, row in zip(self.predicted_labels, self.cells):
            writer.writerow([label, *(f"{v:.10g}" for v in row)])
        return buf.getvalue()


def alignment_matrix(
    instances: Sequence,
    provider: SimilarityProvider,
) -> AlignmentMatrix:
    if len(instances) == 0:
        raise EmptyInstances("cannot align zero instances")
    n = len(instances)
    pair_counts = Counter((i.predicted, i.reference) for i in instances)
    pred_totals = Counter(i.predicted for i in instances)
    ref_totals = Counter(i.reference for i in instances)
    pred_labels = sorted(pred_totals, key=lambda l: (-pred_totals[l], l))
    ref_labels = sorted(ref_totals, key=lambda l: (-ref_totals[l], l))
    cells = np.zeros((len(pred_labels), len(ref_labels)))
    freqs = np.zeros_like(cells)
    for (p, r), count in pair_counts.items():
        i, j = pred_labels.index(p), ref_labels.index(r)
        freqs[i, j] = count / n
        cells[i, j] = provider.similarity(p, r) * freqs[i, j]
    return AlignmentMatrix(
        predicted_labels=tuple(pred_labels),
        reference_labels=tuple(ref_labels),
        cells=cells,
        frequencies=freqs,
    )


# --- sweep aggregation ------------------------------------------------------

@dataclass(frozen=True)
class SweepRun:
    tier: int
    temperature: float
    run_index: int
    result: SwaResult


@dataclass(frozen=True)
class GroupSummary:
    tier: int
    temperature: float
    runs: int
    mean: float
    std: float
    se: float
    min: float
    max: float

    def to_json(self) -> dict:
        return {
            "tier": self.tier,
            "temperature": self.temperature,
            "runs": self.runs,
            "mean": self.mean,
            "std": self.std,
            "se": self.se,
            "min": self.min,
            "max": self.max,
        }


def aggregate_sweep(runs: Sequence) -> list:
    """Per (tier, temperature) group: mean, sample std (0 for a single
    run), standard error of the mean, min, max. Sorted by tier then
    temperature."""
    if len(runs) == 0:
        raise EmptyInstances("no sweep runs to aggregate")
    groups = {}
    for run in runs:
        groups.setdefault((run.tier, run.temperature), []).append(run.result.swa)
    out = []
    for (tier, temperature) in sorted(groups):
        values = groups[(tier, temperature)]
        count = len(values)
        mean = sum(values) / count
        if count > 1:
            std = math.sqrt(sum((v - mean) ** 2 for v in values) / (count - 1))
        else:
            std = 0.0
        out.append(
            GroupSummary(
                tier=tier,
                temperature=temperature,
                runs=count,
                mean=mean,
                std=std,
                se=std / math.sqrt(count),
                min=min(values),
                max=max(values),
            )
        )
    return out


def label_diversity(label_maps: Sequence) -> int:
    """Distinct label count across maps, after sanitization and
    case-folding."""
    if len(label_maps) == 0:
        raise ConfigError("label_diversity needs at least one label map")
    seen = set()
    for lm in label_maps:
        entries = lm.entries if isinstance(lm, LabelMap) else lm
        for label in entries.values():
            seen.add(sanitize_label(label).casefold())
    return len(seen)


# --- reports ----------------------------------------------------------------

def swa_report(
    result: SwaResult,
    provider: SimilarityProvider,
    groups: Optional[Sequence] = None,
) -> dict:
    report = {
        "swa": result.swa,
        "threshold": result.threshold,
        "n": result.n,
        "provider": provider.kind,
    }
    if groups is not None:
        report["per_group"] = [g.to_json() for g in groups]
    return report


def write_swa_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
