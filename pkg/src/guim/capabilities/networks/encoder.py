"""
Masking & Time Fusion Layer and Transformer Encoder.

BERT-style post-layer-norm encoder without position embeddings; the daily
time embedding fused into every CLS and pre-cutoff item plays that role.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
import torch
from torch import Tensor, nn

from guim.capabilities.networks.embedder import gelu
from guim.core.exceptions import ShapeError
from guim.core.logging import get_logger

logger = get_logger(__name__)

LAYER_NORM_EPS = 1e-12

T = TypeVar("T")


@dataclass(frozen=True)
class EncoderConfig:
    """Transformer stack shape.

    Attributes:
        num_layers: L, number of transformer layers
        d_model: Hidden width (d, or C·d for the widened baseline)
        num_heads: Attention heads
        max_len: Maximum encoded positions, CLS tokens included
        mask_prob: Per-item MLM masking probability
        intermediate: FFN inner width, 4·d_model unless given
    """

    num_layers: int
    d_model: int
    num_heads: int
    max_len: int = 64
    mask_prob: float = 0.15
    intermediate: int = field(default=0)

    def __post_init__(self) -> None:
        if self.intermediate == 0:
            object.__setattr__(self, "intermediate", 4 * self.d_model)
        if self.num_heads <= 0 or self.d_model % self.num_heads:
            raise ShapeError(
                f"d_model {self.d_model} is not divisible by {self.num_heads} heads",
                {"d_model": self.d_model, "num_heads": self.num_heads},
            )
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ShapeError("mask_prob must lie in [0, 1]", {"mask_prob": self.mask_prob})


# =============================================================================
# Masking & Time Fusion
# =============================================================================


def draw_mask(valid: np.ndarray, mask_prob: float, rng: np.random.Generator) -> np.ndarray:
    """
    Choose MLM positions: each valid item position independently with ``mask_prob``.

    One uniform draw is consumed per position (valid or not), so the
    generator advances identically for any mask_prob.
    """
    return (rng.random(valid.shape) < mask_prob) & valid


class MaskingLayer(nn.Module):
    """Holds the learned MASK row and substitutes it at masked positions."""

    def __init__(self, d_model: int) -> None:
        super().__init__()
        self.mask = nn.Parameter(torch.zeros(d_model))

    def forward(self, items: Tensor, masked: Tensor) -> Tensor:
        return torch.where(masked.unsqueeze(-1), self.mask.expand_as(items), items)


def apply_masking(
    items: Tensor,
    valid: np.ndarray,
    mask_row: Tensor,
    mask_prob: float,
    rng: np.random.Generator,
) -> tuple[Tensor, np.ndarray]:
    """
    Replace randomly chosen pre-cutoff items with the MASK embedding.

    Args:
        items: [B, N, D] item embeddings (CLS positions are not part of it)
        valid: [B, N] true at real, unpadded items
        mask_row: [D] MASK embedding
        mask_prob: Masking probability in [0, 1]
        rng: Generator supplying the Bernoulli draws

    Returns:
        (masked inputs, [B, N] boolean masked positions)
    """
    masked = draw_mask(valid, mask_prob, rng)
    substituted = torch.where(
        torch.from_numpy(masked).unsqueeze(-1), mask_row.expand_as(items), items
    )
    return substituted, masked


def fuse_time(position_embedding: Tensor, time_embedding: Tensor) -> Tensor:
    """Add the time embedding to a CLS or item embedding."""
    if position_embedding.shape != time_embedding.shape:
        raise ShapeError(
            "Time embedding shape differs from the embedding it is fused with",
            {
                "embedding": list(position_embedding.shape),
                "time": list(time_embedding.shape),
            },
        )
    return position_embedding + time_embedding


def truncate_history(pre: Sequence[T], max_len: int, num_cls: int) -> tuple[list[T], int]:
    """
    Keep the most recent ``max_len - num_cls`` pre-cutoff interactions.

    Returns:
        (kept interactions, number dropped)
    """
    budget = max_len - num_cls
    if budget <= 0:
        raise ShapeError("max_len leaves no room for items", {"max_len": max_len, "num_cls": num_cls})
    if len(pre) <= budget:
        return list(pre), 0
    dropped = len(pre) - budget
    logger.debug("history truncated", kept=budget, dropped=dropped)
    return list(pre[-budget:]), dropped


# =============================================================================
# Transformer
# =============================================================================


def attention(
    query: Tensor,
    key: Tensor,
    value: Tensor,
    key_mask: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """
    Scaled dot-product attention.

    Args:
        query: [..., Lq, dh]
        key: [..., Lk, dh]
        value: [..., Lk, dv]
        key_mask: broadcastable to [..., Lq, Lk], false at padded keys

    Returns:
        (context [..., Lq, dv], attention weights [..., Lq, Lk])
    """
    scores = query @ key.transpose(-2, -1) / math.sqrt(query.shape[-1])
    if key_mask is not None:
        scores = scores.masked_fill(~key_mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ value, weights


class SelfAttention(nn.Module):
    """Multi-head self-attention with the BERT Q/K/V/output projections."""

    def __init__(self, d_model: int, num_heads: int) -> None:
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.query = nn.Linear(d_model, d_model)
        self.key = nn.Linear(d_model, d_model)
        self.value = nn.Linear(d_model, d_model)
        self.output = nn.Linear(d_model, d_model)

    def _split(self, x: Tensor) -> Tensor:
        b, length, _ = x.shape
        return x.view(b, length, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        b, length, d_model = x.shape
        key_mask = mask[:, None, None, :]
        context, _ = attention(
            self._split(self.query(x)),
            self._split(self.key(x)),
            self._split(self.value(x)),
            key_mask,
        )
        context = context.transpose(1, 2).reshape(b, length, d_model)
        return self.output(context)


class BertLayer(nn.Module):
    """Post-LN transformer layer: attention and FFN, each with residual + LayerNorm."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.attention = SelfAttention(config.d_model, config.num_heads)
        self.attention_norm = nn.LayerNorm(config.d_model, eps=LAYER_NORM_EPS)
        self.intermediate = nn.Linear(config.d_model, config.intermediate)
        self.output = nn.Linear(config.intermediate, config.d_model)
        self.output_norm = nn.LayerNorm(config.d_model, eps=LAYER_NORM_EPS)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        x = self.attention_norm(x + self.attention(x, mask))
        return self.output_norm(x + self.output(gelu(self.intermediate(x))))


class TransformerEncoder(nn.Module):
    """Stack of L BertLayers; with L = 0 the input passes through unchanged."""

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(BertLayer(config) for _ in range(config.num_layers))

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        """
        Encode fused inputs.

        Args:
            x: [B, L, d_model] fused CLS and item inputs
            mask: [B, L] true at non-padded positions

        Raises:
            ShapeError: If the sequence exceeds max_len
        """
        if x.shape[1] > self.config.max_len:
            raise ShapeError(
                f"Sequence of {x.shape[1]} positions exceeds max_len {self.config.max_len}",
                {"length": x.shape[1], "max_len": self.config.max_len},
            )
        for layer in self.layers:
            x = layer(x, mask)
        return x


# =============================================================================
# Output Projections
# =============================================================================


class OutputHeads(nn.Module):
    """f_o for item positions and f_u for user vectors, each Linear + GELU."""

    def __init__(self, d_model: int) -> None:
        super().__init__()
        self.f_o = nn.Linear(d_model, d_model)
        self.f_u = nn.Linear(d_model, d_model)

    def item_contexts(self, h_items: Tensor) -> Tensor:
        return gelu(self.f_o(h_items))

    def user_vectors(self, h_user: Tensor) -> Tensor:
        return gelu(self.f_u(h_user))


def project_outputs(h: Tensor, num_cls: int, heads: OutputHeads) -> tuple[Tensor, Tensor]:
    """
    Split encoder output into CLS and item positions and project them.

    Returns:
        (o [B, N, d] via f_o, u [B, C, d] via f_u)
    """
    return heads.item_contexts(h[:, num_cls:]), heads.user_vectors(h[:, :num_cls])


class MultiHeadUserHead(nn.Module):
    """
    Extra H-head self-attention layer read out at the CLS position.

    Each head has full d×d query, key, value and output projections, so the
    H head outputs are H user vectors of width d. No FFN sub-layer follows.
    """

    def __init__(self, d: int, num_heads: int) -> None:
        super().__init__()
        if num_heads <= 0:
            raise ShapeError("Multi-head user head needs at least one head", {"heads": num_heads})
        self.d = d
        self.num_heads = num_heads
        self.query = nn.Linear(d, num_heads * d)
        self.key = nn.Linear(d, num_heads * d)
        self.value = nn.Linear(d, num_heads * d)
        self.output_weight = nn.Parameter(torch.zeros(num_heads, d, d))
        self.output_bias = nn.Parameter(torch.zeros(num_heads, d))

    def forward(self, h: Tensor, mask: Tensor) -> Tensor:
        """
        Args:
            h: [B, L, d] final encoder output, CLS at position 0
            mask: [B, L] true at non-padded positions

        Returns:
            [B, H, d] head outputs at the CLS position
        """
        b, length, _ = h.shape
        q = self.query(h[:, :1]).view(b, 1, self.num_heads, self.d).transpose(1, 2)
        k = self.key(h).view(b, length, self.num_heads, self.d).transpose(1, 2)
        v = self.value(h).view(b, length, self.num_heads, self.d).transpose(1, 2)
        context, _ = attention(q, k, v, mask[:, None, None, :])
        return torch.einsum("bhd,hde->bhe", context[:, :, 0], self.output_weight) + self.output_bias
