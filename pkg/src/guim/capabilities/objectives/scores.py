"""
Mixture-of-representation scores.

Scalar functions work on numpy vectors in float64 and are used for
reference scoring; the tensor functions are the batched training path.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import torch
from numpy.typing import ArrayLike
from torch import Tensor

from guim.core.exceptions import ShapeError, WeightConstraintError, ZeroNormError

DEFAULT_ALPHA = 20.0
WEIGHT_TOLERANCE = 1e-9


def cosine(u: ArrayLike, v: ArrayLike) -> float:
    """
    Cosine similarity of two vectors, clamped to [-1, 1].

    Raises:
        ZeroNormError: If either vector has zero norm
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("cosine needs vectors of equal length", {"u": a.shape, "v": b.shape})
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError()
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _cosines(u_set: Sequence[ArrayLike], v: ArrayLike) -> np.ndarray:
    if len(u_set) == 0:
        raise ShapeError("User representation needs at least one vector")
    return np.asarray([cosine(u, v) for u in u_set], dtype=np.float64)


def score_mixture(
    u_set: Sequence[ArrayLike],
    v: ArrayLike,
    weights: ArrayLike,
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """
    Weighted association score ``alpha * sum_c pi_c * cos(u_c, v)``.

    Raises:
        WeightConstraintError: If weights are negative or do not sum to 1
    """
    pi = np.asarray(weights, dtype=np.float64)
    if pi.shape != (len(u_set),):
        raise ShapeError("One weight per user vector is required", {"weights": pi.shape})
    total = float(pi.sum())
    if pi.min() < 0.0 or abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise WeightConstraintError(total, float(pi.min()))
    cos = _cosines(u_set, v)
    mixed = float(sum(float(p) * float(c) for p, c in zip(pi, cos, strict=True)))
    return float(np.clip(alpha * mixed, -alpha, alpha))


def best_vector(u_set: Sequence[ArrayLike], v: ArrayLike) -> int:
    """Index of the user vector closest to v; ties go to the smaller index."""
    return int(np.argmax(_cosines(u_set, v)))


def score_max(
    u_set: Sequence[ArrayLike],
    v: ArrayLike,
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """Max association score ``alpha * max_c cos(u_c, v)``."""
    cos = _cosines(u_set, v)
    return float(np.clip(alpha * cos[int(np.argmax(cos))], -alpha, alpha))


# =============================================================================
# Batched Scores
# =============================================================================


def normalize(x: Tensor) -> Tensor:
    """Scale vectors along the last dimension to unit length."""
    return x / x.norm(dim=-1, keepdim=True)


def max_scores(users: Tensor, items: Tensor, alpha: float) -> tuple[Tensor, Tensor]:
    """
    Max-of-cosines scores of candidate items against each user's vector set.

    Args:
        users: [B, V, D] user vectors
        items: [B, P, K, D] candidate item embeddings

    Returns:
        (scores [B, P, K], argmax [B, P, K] index of the winning user vector)
    """
    cos = torch.einsum("bpkd,bvd->bpkv", normalize(items), normalize(users)).clamp(-1.0, 1.0)
    # argmax returns the first maximal index
    best = cos.argmax(dim=-1)
    winning = cos.gather(-1, best.unsqueeze(-1)).squeeze(-1)
    return alpha * winning, best


def context_scores(contexts: Tensor, items: Tensor, alpha: float) -> Tensor:
    """
    MLM scores ``alpha * cos(o_n, v)``.

    Args:
        contexts: [B, N, D] item-position outputs o_n
        items: [B, N, K, D] candidate item embeddings
    """
    cos = torch.einsum("bnkd,bnd->bnk", normalize(items), normalize(contexts))
    return alpha * cos.clamp(-1.0, 1.0)
