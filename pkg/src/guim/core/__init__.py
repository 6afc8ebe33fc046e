"""
GUIM Core Layer.

Core infrastructure components:
- Config: Layered configuration with presets and overrides
- Exceptions: Structured exception hierarchy
- Logging: structlog-based structured logging
- Models: Shared enumerations and result records
"""

from .config import (
    EvalConfig,
    GradcheckConfig,
    GUIMConfig,
    ModelConfig,
    SyntheticConfig,
    TrainConfig,
    build_config,
    get_config,
    load_config,
    reset_config,
)
from .exceptions import (
    CheckpointError,
    ConfigError,
    CorpusError,
    EvaluationError,
    GUIMError,
    ModelError,
    ObjectiveError,
    TrainingError,
)
from .models import EpochSummary, EvalRecord, ModelVariant, Precision, StepMetrics

__all__ = [
    # Config
    "GUIMConfig",
    "ModelConfig",
    "TrainConfig",
    "EvalConfig",
    "SyntheticConfig",
    "GradcheckConfig",
    "build_config",
    "get_config",
    "load_config",
    "reset_config",
    # Exceptions
    "GUIMError",
    "CorpusError",
    "ConfigError",
    "ModelError",
    "ObjectiveError",
    "TrainingError",
    "CheckpointError",
    "EvaluationError",
    # Models
    "ModelVariant",
    "Precision",
    "StepMetrics",
    "EpochSummary",
    "EvalRecord",
]
