"""
GUIM Exception Hierarchy.

Structured exception classes for corpus handling, modelling, training and
evaluation. All exceptions inherit from GUIMError for easy catching.

Exception Hierarchy:
    GUIMError (base)
    ├── CorpusError
    │   ├── OrderingError
    │   ├── TimeRangeError
    │   └── CorpusParseError
    ├── ConfigError
    │   ├── ConfigNotFoundError
    │   ├── ConfigParseError
    │   └── ConfigKeyError
    ├── ModelError
    │   ├── LookupRangeError
    │   └── ShapeError
    ├── ObjectiveError
    │   ├── ZeroNormError
    │   ├── WeightConstraintError
    │   ├── InsufficientNegativesError
    │   └── NegativeExhaustionError
    ├── TrainingError
    │   ├── NonFiniteError
    │   └── CheckpointError
    │       └── CheckpointVersionError
    └── EvaluationError
        ├── EmptyIndexError
        ├── NoEligibleUsersError
        └── SingleClassError
"""

from typing import Any


class GUIMError(Exception):
    """
    Base exception for all GUIM errors.

    Attributes:
        message: Human-readable error message
        code: Error code for programmatic handling
        details: Additional error context
    """

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code or "GUIM_ERROR"
        self.details = details or {}

    def __str__(self) -> str:
        if self.details:
            return f"[{self.code}] {self.message} - {self.details}"
        return f"[{self.code}] {self.message}"

    def to_dict(self) -> dict[str, Any]:
        """Convert exception to dictionary for serialization."""
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details,
        }


# =============================================================================
# Corpus Errors
# =============================================================================


class CorpusError(GUIMError):
    """Base error for interaction corpus operations."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "CORPUS_ERROR", details)


class OrderingError(CorpusError):
    """Interactions are not in chronological order."""

    def __init__(
        self,
        user_id: int,
        position: int,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["user_id"] = user_id
        details["position"] = position
        super().__init__(
            f"Interactions of user {user_id} are not sorted at position {position}",
            "ORDERING_ERROR",
            details,
        )


class TimeRangeError(CorpusError):
    """Timestamp lies outside the bucketable window."""

    def __init__(
        self,
        timestamp: int,
        message: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["timestamp"] = timestamp
        super().__init__(
            message or f"Timestamp {timestamp} is outside the history window",
            "TIME_RANGE_ERROR",
            details,
        )


class CorpusParseError(CorpusError):
    """A corpus file record could not be parsed."""

    def __init__(
        self,
        path: str,
        line: int,
        field: str | None = None,
        parse_error: str | None = None,
    ) -> None:
        details: dict[str, Any] = {"path": path, "line": line}
        if field:
            details["field"] = field
        if parse_error:
            details["parse_error"] = parse_error
        where = f" (field '{field}')" if field else ""
        super().__init__(
            f"Malformed record at {path}:{line}{where}",
            "CORPUS_PARSE_ERROR",
            details,
        )
        self.line = line
        self.field = field


# =============================================================================
# Config Errors
# =============================================================================


class ConfigError(GUIMError):
    """Base error for configuration operations."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "CONFIG_ERROR", details)


class ConfigNotFoundError(ConfigError):
    """Configuration file not found."""

    def __init__(
        self,
        path: str,
        message: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["config_path"] = path
        super().__init__(
            message or f"Config file not found: {path}",
            "CONFIG_NOT_FOUND",
            details,
        )


class ConfigParseError(ConfigError):
    """Configuration parsing failed."""

    def __init__(
        self,
        path: str,
        message: str | None = None,
        parse_error: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["config_path"] = path
        if parse_error:
            details["parse_error"] = parse_error
        super().__init__(
            message or f"Failed to parse config: {path}",
            "CONFIG_PARSE_ERROR",
            details,
        )


class ConfigKeyError(ConfigError):
    """Unknown or ill-typed configuration key."""

    def __init__(
        self,
        key: str,
        message: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["key"] = key
        super().__init__(
            message or f"Invalid config key: {key}",
            "CONFIG_KEY_ERROR",
            details,
        )
        self.key = key


# =============================================================================
# Model Errors
# =============================================================================


class ModelError(GUIMError):
    """Base error for model construction and forward passes."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "MODEL_ERROR", details)


class LookupRangeError(ModelError):
    """Embedding lookup index outside its table."""

    def __init__(
        self,
        table: str,
        index: int,
        rows: int,
    ) -> None:
        super().__init__(
            f"Index {index} out of range for table '{table}' with {rows} rows",
            "LOOKUP_RANGE_ERROR",
            {"table": table, "index": index, "rows": rows},
        )


class ShapeError(ModelError):
    """Tensor shapes or dimensions are inconsistent."""

    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, "SHAPE_ERROR", details)


# =============================================================================
# Objective Errors
# =============================================================================


class ObjectiveError(GUIMError):
    """Base error for scores, sampling and losses."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "OBJECTIVE_ERROR", details)


class ZeroNormError(ObjectiveError):
    """Cosine requested for a zero vector."""

    def __init__(self, message: str = "Cosine is undefined for a zero vector") -> None:
        super().__init__(message, "ZERO_NORM_ERROR")


class WeightConstraintError(ObjectiveError):
    """Mixture weights are negative or do not sum to one."""

    def __init__(self, total: float, minimum: float) -> None:
        super().__init__(
            "Mixture weights must be non-negative and sum to 1",
            "WEIGHT_CONSTRAINT_ERROR",
            {"sum": total, "min": minimum},
        )


class InsufficientNegativesError(ObjectiveError):
    """Mini-batch cannot supply in-batch negatives."""

    def __init__(
        self,
        message: str,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, "INSUFFICIENT_NEGATIVES", details)


class NegativeExhaustionError(ObjectiveError):
    """Every foreign occurrence collides with the positive item."""

    def __init__(self, user_index: int, positive: int, retries: int) -> None:
        super().__init__(
            f"Could not draw negatives distinct from item row {positive}",
            "NEGATIVE_EXHAUSTION",
            {"user_index": user_index, "positive": positive, "retries": retries},
        )


# =============================================================================
# Training Errors
# =============================================================================


class TrainingError(GUIMError):
    """Base error for training operations."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "TRAINING_ERROR", details)


class NonFiniteError(TrainingError):
    """Loss or gradient became NaN or infinite."""

    def __init__(self, block: str, step: int | None = None) -> None:
        details: dict[str, Any] = {"block": block}
        if step is not None:
            details["step"] = step
        super().__init__(
            f"Non-finite value in parameter block '{block}'",
            "NON_FINITE",
            details,
        )
        self.block = block


class CheckpointError(TrainingError):
    """Checkpoint file is unreadable or truncated."""

    def __init__(
        self,
        path: str,
        message: str | None = None,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        details = details or {}
        details["path"] = path
        super().__init__(
            message or f"Invalid checkpoint: {path}",
            code or "CHECKPOINT_ERROR",
            details,
        )


class CheckpointVersionError(CheckpointError):
    """Checkpoint magic bytes or format version mismatch."""

    def __init__(self, path: str, found: str, expected: str) -> None:
        super().__init__(
            path,
            f"Unsupported checkpoint version {found} (expected {expected})",
            "CHECKPOINT_VERSION_ERROR",
            {"found": found, "expected": expected},
        )


# =============================================================================
# Evaluation Errors
# =============================================================================


class EvaluationError(GUIMError):
    """Base error for downstream evaluation."""

    def __init__(
        self,
        message: str,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message, code or "EVALUATION_ERROR", details)


class EmptyIndexError(EvaluationError):
    """Retrieval requested from an index without items."""

    def __init__(self) -> None:
        super().__init__("Candidate index is empty", "EMPTY_INDEX")


class NoEligibleUsersError(EvaluationError):
    """No user qualifies for the requested protocol."""

    def __init__(self, protocol: str) -> None:
        super().__init__(
            f"No eligible users for protocol {protocol}",
            "NO_ELIGIBLE_USERS",
            {"protocol": protocol},
        )


class SingleClassError(EvaluationError):
    """Classifier training labels contain a single class."""

    def __init__(self, label: int) -> None:
        super().__init__(
            "Training labels contain a single class",
            "SINGLE_CLASS",
            {"label": label},
        )

