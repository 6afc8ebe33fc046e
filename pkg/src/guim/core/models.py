"""
GUIM shared data classes.

Enumerations and result records exchanged between the capability layers
and the service layer.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any


class ModelVariant(str, Enum):
    """Model family: multi-CLS mixture, widened single vector, or multi-head."""

    GUIM = "guim"
    GUI_EDI = "gui_edi"
    GUIM_MH = "guim_mh"


class Precision(int, Enum):
    """Floating point width of parameters and training."""

    FLOAT32 = 32
    FLOAT64 = 64


@dataclass
class StepMetrics:
    """Loss values of one optimisation step (one metrics log line)."""

    step: int
    epoch: int
    matching_loss: float
    mlm_loss: float
    total_loss: float
    wall_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        """Convert metrics to dictionary for serialization."""
        return asdict(self)


@dataclass
class EpochSummary:
    """Per-epoch training and validation summary."""

    epoch: int
    train_loss: float
    validation_loss: float
    steps: int
    improved: bool = False


@dataclass
class EvalRecord:
    """One results-file entry for a CMP or CPP run."""

    protocol: str
    m: int | None
    num_vectors: int
    variant: str
    seed: int
    mean: float
    users: int
    excluded: int = 0
    quantiles: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """Convert record to dictionary for serialization."""
        return asdict(self)
