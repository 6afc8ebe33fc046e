"""
InfoNCE losses: matching, MLM and their plain sum.

Negatives are drawn beforehand into a BatchPlan (see sampling), so these
functions only score the candidates the forward pass already embedded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import torch
from torch import Tensor

from guim.capabilities.objectives.scores import DEFAULT_ALPHA, context_scores, max_scores

if TYPE_CHECKING:
    from guim.capabilities.networks.model import ForwardOutput


def info_nce(pos_score: Tensor, neg_scores: Tensor) -> tuple[Tensor, Tensor]:
    """
    Negative log posterior of the positive among K+1 candidates.

    Computes ``log(1 + sum_k exp(s_k - s_0))`` with the largest difference
    factored out, and log1p when no negative outscores the positive, so tiny
    losses keep full relative precision.

    Args:
        pos_score: [...] positive scores s_0
        neg_scores: [..., K] negative scores

    Returns:
        (loss [...], posterior [..., K+1] with the positive first)
    """
    diff = neg_scores - pos_score.unsqueeze(-1)
    top = diff.max(dim=-1).values.clamp(min=0.0)
    shifted = torch.exp(diff - top.unsqueeze(-1)).sum(dim=-1)
    loss = torch.where(
        top > 0,
        top + torch.log(torch.exp(-top) + shifted),
        torch.log1p(shifted),
    )
    posterior = torch.softmax(torch.cat([pos_score.unsqueeze(-1), neg_scores], dim=-1), dim=-1)
    return loss, posterior


def matching_loss(output: ForwardOutput, alpha: float = DEFAULT_ALPHA) -> tuple[Tensor, Tensor]:
    """
    Sum over users and their post-cutoff items of the max-score InfoNCE loss.

    Users without post-cutoff items contribute 0.

    Returns:
        (loss, argmax [B, P, K+1] of the winning user vector per candidate)
    """
    scores, best = max_scores(output.user_rep, output.match_targets, alpha)
    loss, _ = info_nce(scores[..., 0], scores[..., 1:])
    return torch.where(output.post_valid, loss, torch.zeros_like(loss)).sum(), best


def mlm_loss(output: ForwardOutput, alpha: float = DEFAULT_ALPHA) -> Tensor:
    """Sum over masked positions of the InfoNCE loss scored by ``alpha * cos(o_n, v)``."""
    scores = context_scores(output.item_contexts, output.mlm_targets, alpha)
    loss, _ = info_nce(scores[..., 0], scores[..., 1:])
    return torch.where(output.masked, loss, torch.zeros_like(loss)).sum()


@dataclass
class LossBreakdown:
    """Matching, MLM and total loss of one batch."""

    matching: Tensor
    mlm: Tensor
    total: Tensor
    match_argmax: Tensor

    def values(self) -> tuple[float, float, float]:
        return float(self.matching), float(self.mlm), float(self.total)


def total_loss(output: ForwardOutput, alpha: float = DEFAULT_ALPHA) -> LossBreakdown:
    """Unweighted sum of the matching and MLM losses."""
    matching, best = matching_loss(output, alpha)
    mlm = mlm_loss(output, alpha)
    return LossBreakdown(matching=matching, mlm=mlm, total=matching + mlm, match_argmax=best)
