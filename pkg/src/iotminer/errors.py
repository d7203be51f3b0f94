"""Exception hierarchy.

Exit-code mapping used by the CLI: ConfigError -> 1, stage errors -> 2,
backend errors (auth / rate limit / timeout / provider down) -> 3.
"""


class IotMinerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IotMinerError):
    """Invalid configuration; raised before any stage runs."""


# --- ingestion ---

class NoDelimiterFound(IotMinerError):
    pass


class NoTimestampColumn(IotMinerError):
    pass


class TimestampParseError(IotMinerError):
    def __init__(self, row_index, value, pattern):
        self.row_index = row_index
        self.value = value
        self.pattern = pattern
        super().__init__(f"row {row_index}: cannot parse timestamp {value!r} with pattern {pattern!r}")


class RaggedRow(IotMinerError):
    def __init__(self, row_index, expected, got):
        self.row_index = row_index
        self.expected = expected
        self.got = got
        super().__init__(f"row {row_index}: expected {expected} fields, got {got}")


class NoSensorColumns(IotMinerError):
    pass


# --- featurization ---

class SeriesTooShort(IotMinerError):
    pass


class NonPositiveDt(IotMinerError):
    pass


class EmptySeries(IotMinerError):
    pass


class ColumnCountMismatch(IotMinerError):
    pass


class UnrepairedMissing(IotMinerError):
    """A channel entering feature construction still contains missing values."""


# --- clustering ---

class KExceedsN(IotMinerError):
    pass


class UndefinedIndex(IotMinerError):
    """Validity index undefined (fewer than 2 clusters, or n <= k for CH)."""


class AllConfigsDegenerate(IotMinerError):
    """No grid configuration produced at least 2 clusters."""


# --- labeling ---

class MissingContext(IotMinerError):
    pass


class BackendError(IotMinerError):
    """Base for label/embedding backend failures. ``retryable`` marks
    transient classes worth an exponential-backoff retry."""

    retryable = True


class AuthError(BackendError):
    retryable = False


class RateLimited(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class MalformedResponse(BackendError):
    retryable = False


class MissingCluster(IotMinerError):
    def __init__(self, cluster_id):
        self.cluster_id = cluster_id
        super().__init__(f"response contains no label for cluster {cluster_id}")


class DuplicateCluster(IotMinerError):
    def __init__(self, cluster_id):
        self.cluster_id = cluster_id
        super().__init__(f"response labels cluster {cluster_id} more than once")


class UnparseableResponse(IotMinerError):
    pass


class EmptyAfterSanitize(IotMinerError):
    pass


class AmbiguousLabel(IotMinerError):
    """Strict mode rejects labels flagged as ambiguous (standalone "or")."""


# --- event log ---

class UnlabeledCluster(IotMinerError):
    def __init__(self, cluster_id):
        self.cluster_id = cluster_id
        super().__init__(f"no label for cluster {cluster_id}")


class EmptyTimeline(IotMinerError):
    pass


# --- evaluation ---

class ProviderUnavailable(BackendError):
    pass


class EmptyInstances(IotMinerError):
    pass


# --- pipeline ---

class StageFailure(IotMinerError):
    """A pipeline stage failed; carries the stage name and the artifact
    being produced, with the original error as __cause__."""

    def __init__(self, stage, message, artifact=None):
        self.stage = stage
        self.artifact = artifact
        where = f" (artifact {artifact})" if artifact else ""
        super().__init__(f"stage {stage!r} failed{where}: {message}")
