"""Tiered prompt construction, label backends, and response parsing.

Tier 1 sends the task and the cluster-profile JSON alone; tier 2 adds a
labeling-instructions block (example activity names, the no-"or" rule);
tier 3 prepends free-text operational context supplied by the user. The
tier-1 block is byte-identical inside every tier, so prompt hashes
compose predictably.

Backends: an HTTP client speaking the chat-completions wire format
(bearer token from the environment), and a deterministic offline mock
that ranks clusters by a channel's mean and reads labels off a table,
with temperature-scaled synonym substitution so sweep statistics have
something to measure.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import httpx
import numpy as np

from .errors import (
    AmbiguousLabel,
    AuthError,
    BackendError,
    BackendTimeout,
    ConfigError,
    DuplicateCluster,
    EmptyAfterSanitize,
    MalformedResponse,
    MissingCluster,
    MissingContext,
    RateLimited,
    UnparseableResponse,
)
from .profiling import ClusterProfile, profiles_to_json

MAX_LABEL_LENGTH = 60

TASK_TEMPLATE = """You are given statistical profiles of operating-state clusters found \
in multi-sensor time series recorded on an industrial machine. Each profile \
lists per-sensor min, max, mean, median, standard deviation and quartiles, \
plus the cluster's share of all samples.

Assign each cluster a short activity label describing what the machine is \
doing while in that state.

Cluster profiles:
{PROFILES_JSON}

Answer with exactly one line per cluster, in the form:
cluster <id>: <label>
"""

INSTRUCTIONS_BLOCK = """Labeling instructions:
- Use short, concrete activity names such as "Idling", "Loading", \
"Hauling Loaded", "Dumping", "Returning Empty", "Stopped".
- Never produce an ambiguous label; in particular do not use the word \
"or" inside a label.
- Judge each cluster by its sensor statistics (speeds, pressures, rates), \
not by its id or ordering.
- Give clusters with clearly different statistics different labels.
"""

CONTEXT_TEMPLATE = """Operational context provided by the machine operator:
{USER_CONTEXT}
"""


@dataclass(frozen=True)
class PromptTier:
    tier: int
    user_context: str = ""

    def __post_init__(self):
        if self.tier not in (1, 2, 3):
            raise ConfigError(f"tier must be 1, 2 or 3, got {self.tier}")


@dataclass(frozen=True)
class LlmOptions:
    model: str = "gpt-4"
    temperature: float = 0.0
    max_tokens: int = 600
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    timeout: float = 60.0
    retries: int = 3

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ConfigError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")


@dataclass(frozen=True)
class LabelMap:
    entries: dict  # cluster_id -> sanitized label
    provenance: dict = field(default_factory=dict)
    ambiguous: frozenset = frozenset()

    def require_unambiguous(self) -> "LabelMap":
        if self.ambiguous:
            flagged = {cid: self.entries[cid] for cid in sorted(self.ambiguous)}
            raise AmbiguousLabel(f"ambiguous labels in strict mode: {flagged}")
        return self

    def to_document(self) -> dict:
        return {
            "entries": {str(cid): label for cid, label in sorted(self.entries.items())},
            "ambiguous": sorted(self.ambiguous),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "LabelMap":
        try:
            return cls(
                entries={int(cid): label for cid, label in doc["entries"].items()},
                ambiguous=frozenset(int(c) for c in doc.get("ambiguous", ())),
                provenance=dict(doc.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed label map document: {exc}") from exc


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def build_prompt(profiles: Sequence[ClusterProfile], tier: PromptTier) -> str:
    """Deterministic prompt text for the given tier.

    Profiles must exclude the noise pseudo-cluster: it is never labeled
    by a model (the pipeline names it directly).
    """
    if not profiles:
        raise ConfigError("profiles must be non-empty")
    if any(p.cluster_id < 0 for p in profiles):
        raise ConfigError("noise pseudo-cluster must not be sent for labeling")
    if tier.tier == 3 and not tier.user_context.strip():
        raise MissingContext("tier 3 requires non-empty user context")
    parts = []
    if tier.tier >= 3:
        parts.append(CONTEXT_TEMPLATE.format(USER_CONTEXT=tier.user_context.strip()))
    if tier.tier >= 2:
        parts.append(INSTRUCTIONS_BLOCK)
    parts.append(TASK_TEMPLATE.format(PROFILES_JSON=profiles_to_json(profiles)))
    return "\n".join(parts)


# --- sanitization ----------------------------------------------------------

_QUOTE_CHARS = "\"'`“”‘’"
_AMBIGUOUS_RE = re.compile(r"\bor\b", re.IGNORECASE)


def sanitize_label(label: str) -> str:
    """Trim whitespace/quotes, collapse internal whitespace, truncate to
    60 characters at a word boundary. Idempotent."""
    text = label
    while True:
        stripped = text.strip().strip(_QUOTE_CHARS)
        if stripped == text:
            break
        text = stripped
    text = re.sub(r"\s+", " ", text)
    if len(text) > MAX_LABEL_LENGTH:
        cut = text.rfind(" ", 0, MAX_LABEL_LENGTH + 1)
        text = text[:cut] if cut > 0 else text[:MAX_LABEL_LENGTH]
        text = text.rstrip()
    if not text:
        raise EmptyAfterSanitize(f"label {label!r} is empty after sanitization")
    return text


def is_ambiguous_label(label: str) -> bool:
    """True when the standalone token "or" appears (word-boundary match,
    so "Tramming" is fine but "Load-or-Dump" is flagged)."""
    return _AMBIGUOUS_RE.search(label) is not None


# --- parsing ---------------------------------------------------------------

_LINE_RE = re.compile(
    r"^\s*(?:\d+[.)]\s+)?\W*cluster\s+(\d+)\s*(?:\*\*|__|[*_`])?\s*:\s*(.+?)\s*$",
    re.IGNORECASE,
)
_MARKUP_CHARS = "*_`"


def parse_label_response(
    text: str,
    expected_cluster_ids: Sequence[int],
    provenance: Optional[dict] = None,
) -> LabelMap:
    """Extract ``cluster <id>: <label>`` lines into a LabelMap.

    Tolerates list markers and bold/italic markup; ignores prose lines
    and labels for unexpected IDs. Labels are sanitized; ambiguity flags
    are recorded, not enforced (see LabelMap.require_unambiguous).
    """
    if not text.strip():
        raise UnparseableResponse("empty response")
    expected = set(int(c) for c in expected_cluster_ids)
    found: dict = {}
    matched_any = False
    for line in text.splitlines():
        match = _LINE_RE.match(line)
        if match is None:
            continue
        matched_any = True
        cid = int(match.group(1))
        raw = match.group(2).strip().strip(_MARKUP_CHARS).strip()
        if cid not in expected:
            continue
        if cid in found:
            raise DuplicateCluster(cid)
        found[cid] = sanitize_label(raw)
    if not matched_any:
        raise UnparseableResponse(f"no 'cluster <id>: <label>' lines in {text[:200]!r}")
    for cid in sorted(expected):
        if cid not in found:
            raise MissingCluster(cid)
    ambiguous = frozenset(cid for cid, label in found.items() if is_ambiguous_label(label))
    return LabelMap(entries=found, provenance=dict(provenance or {}), ambiguous=ambiguous)


def render_label_map(label_map: LabelMap) -> str:
    """Canonical lines, one per cluster in ID order (parse round-trips)."""
    return "\n".join(
        f"cluster {cid}: {label}" for cid, label in sorted(label_map.entries.items())
    )


# --- backends --------------------------------------------------------------

class HttpBackend:
    """Chat-completions wire format over HTTP; bearer token from the
    environment (IOTMINER_API_KEY by default)."""

    name = "http"

    def __init__(
        self,
        api_key: Optional[str] = None,
        api_key_env: str = "IOTMINER_API_KEY",
        transport: Optional[httpx.BaseTransport] = None,
    ):
        import os

        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        self._transport = transport

    def complete(self, prompt: str, options: LlmOptions) -> dict:
        """Single attempt. Returns {text, usage} or raises a typed
        BackendError subclass."""
        body = {
            "model": options.model,
            "temperature": options.temperature,
            "max_tokens": options.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        try:
            with httpx.Client(transport=self._transport, timeout=options.timeout) as client:
                response = client.post(options.endpoint, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"request timed out after {options.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"authentication rejected (HTTP {response.status_code})")
        if response.status_code == 429:
            raise RateLimited("rate limited (HTTP 429)")
        if response.status_code >= 500:
            raise BackendError(f"server error (HTTP {response.status_code})")
        if response.status_code != 200:
            raise MalformedResponse(f"unexpected HTTP {response.status_code}: {response.text[:200]}")
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"cannot extract completion text: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("completion content is not text")
        return {"text": text, "usage": payload.get("usage")}


#: Base label table for the mock backend, in ascending order of the
#: ranking channel's mean. Extra clusters get generic state names.
MOCK_LABELS = (
    "Stopped",
    "Idling",
    "Dumping",
    "Returning Empty",
    "Loading",
    "Hauling Loaded",
)

MOCK_SYNONYMS = {
    "Stopped": ("Parked", "Shut Down"),
    "Idling": ("Idle", "Engine Idling"),
    "Dumping": ("Unloading", "Tipping"),
    "Returning Empty": ("Empty Travel", "Tramming Empty"),
    "Loading": ("Bucket Loading", "Filling"),
    "Hauling Loaded": ("Loaded Travel", "Tramming Loaded"),
}


class MockBackend:
    """Deterministic offline labeler.

    Reads the profiles JSON back out of the prompt, ranks clusters by the
    mean of a designated channel (first profiled channel by default), and
    assigns labels from a fixed table. With temperature > 0 a seeded RNG
    (hash of prompt + temperature + run_index) swaps labels for synonyms
    with probability proportional to temperature, which gives sweeps a
    real diversity signal; at temperature 0 output is invariant across
    runs.
    """

    name = "mock"

    def __init__(self, rank_channel: Optional[str] = None, run_index: int = 0):
        self.rank_channel = rank_channel
        self.run_index = run_index

    def _extract_profiles(self, prompt: str) -> list:
        start = prompt.find("Cluster profiles:")
        if start == -1:
            raise MalformedResponse("prompt has no profiles block")
        open_bracket = prompt.find("[", start)
        depth = 0
        end = -1
        for i in range(open_bracket, len(prompt)):
            if prompt[i] == "[":
                depth += 1
            elif prompt[i] == "]":
                depth -= 1
                if depth == 0:
                    end = i + 1
                    break
        if open_bracket == -1 or end == -1:
            raise MalformedResponse("prompt profiles block is not a JSON array")
        try:
            return json.loads(prompt[open_bracket:end])
        except ValueError as exc:
            raise MalformedResponse(f"profiles block is not valid JSON: {exc}") from exc

    def complete(self, prompt: str, options: LlmOptions) -> dict:
        profiles = self._extract_profiles(prompt)
        if not profiles:
            raise MalformedResponse("no profiles to label")
        channel = self.rank_channel
        first_stats = profiles[0].get("stats", {})
        if channel is None or channel not in first_stats:
            if not first_stats:
                raise MalformedResponse("profiles carry no stats")
            channel = next(iter(first_stats))
        ranked = sorted(profiles, key=lambda p: p["stats"][channel]["mean"])
        seed_material = f"{prompt}|{options.temperature:.6f}|{self.run_index}"
        digest = hashlib.sha256(seed_material.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng(seed)
        lines = []
        assignments = {}
        for rank, profile in enumerate(ranked):
            if rank < len(MOCK_LABELS):
                base = MOCK_LABELS[rank]
            else:
                base = f"State {rank + 1}"
            label = base
            synonyms = MOCK_SYNONYMS.get(base, ())
            if synonyms and rng.random() < 0.6 * options.temperature:
                label = synonyms[int(rng.integers(len(synonyms)))]
            assignments[int(profile["cluster_id"])] = label
        for cid in sorted(assignments):
            lines.append(f"cluster {cid}: {assignments[cid]}")
        return {"text": "\n".join(lines), "usage": None}


def request_labels(
    prompt: str,
    options: LlmOptions,
    backend,
    attempts_out: Optional[list] = None,
    backoff_base: float = 0.5,
    sleep=time.sleep,
) -> str:
    """Run backend.complete with exponential-backoff retries on transient
    failures (up to options.retries extra attempts). Appends one record
    per attempt to ``attempts_out`` when given: {attempt, outcome,
    latency_s, usage}."""
    last_error: Optional[BackendError] = None
    for attempt in range(options.retries + 1):
        started = time.monotonic()
        try:
            result = backend.complete(prompt, options)
        except BackendError as exc:
            if attempts_out is not None:
                attempts_out.append(
                    {
                        "attempt": attempt,
                        "outcome": type(exc).__name__,
                        "latency_s": time.monotonic() - started,
                        "usage": None,
                    }
                )
            if not exc.retryable:
                raise
            last_error = exc
            if attempt < options.retries:
                sleep(backoff_base * (2**attempt))
            continue
        if attempts_out is not None:
            attempts_out.append(
                {
                    "attempt": attempt,
                    "outcome": "ok",
                    "latency_s": time.monotonic() - started,
                    "usage": result.get("usage"),
                }
            )
        return result["text"]
    raise last_error


def label_clusters(
    profiles: Sequence[ClusterProfile],
    tier: PromptTier,
    options: LlmOptions,
    backend,
    run_index: int = 0,
    attempts_out: Optional[list] = None,
    backoff_base: float = 0.5,
    sleep=time.sleep,
) -> LabelMap:
    """Prompt, request, parse: one LabelMap for the non-noise profiles."""
    labeled = [p for p in profiles if p.cluster_id >= 0]
    prompt = build_prompt(labeled, tier)
    if isinstance(backend, MockBackend):
        backend = MockBackend(rank_channel=backend.rank_channel, run_index=run_index)
    raw = request_labels(
        prompt, options, backend,
        attempts_out=attempts_out, backoff_base=backoff_base, sleep=sleep,
    )
    provenance = {
        "model": options.model,
        "temperature": options.temperature,
        "prompt_hash": prompt_hash(prompt),
        "run_index": run_index,
        "backend": getattr(backend, "name", type(backend).__name__),
    }
    return parse_label_response(raw, [p.cluster_id for p in labeled], provenance)
