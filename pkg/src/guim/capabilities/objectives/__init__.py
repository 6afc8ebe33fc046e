"""Association scores, in-batch negatives and the InfoNCE objectives."""

from .losses import LossBreakdown, info_nce, matching_loss, mlm_loss, total_loss
from .sampling import BatchPlan, NegativeSampler, draw_plan
from .scores import cosine, score_max, score_mixture

__all__ = [
    "cosine",
    "score_mixture",
    "score_max",
    "NegativeSampler",
    "BatchPlan",
    "draw_plan",
    "info_nce",
    "matching_loss",
    "mlm_loss",
    "total_loss",
    "LossBreakdown",
]
