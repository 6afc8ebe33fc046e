"""
In-batch negative sampling and per-batch randomness.

All random choices of one training step (MLM mask, matching negatives, MLM
negatives) are drawn up front into a BatchPlan, so the loss of a batch is a
deterministic function of the parameters. Draw order: mask, then matching
negatives user by user, then MLM negatives user by user.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from guim.capabilities.networks.batching import EncodedBatch
from guim.capabilities.networks.encoder import draw_mask
from guim.core.exceptions import InsufficientNegativesError, NegativeExhaustionError

MAX_RETRIES = 100


class NegativeSampler:
    """
    Draws negatives for user i uniformly over item occurrences of the other users.

    Occurrences are counted with multiplicity, so an item bought three times
    elsewhere in the batch is three times as likely as one bought once.
    """

    def __init__(self, occurrences: Sequence[ArrayLike], max_retries: int = MAX_RETRIES) -> None:
        if len(occurrences) < 2:
            raise InsufficientNegativesError(
                "In-batch negatives need at least two sequences",
                {"batch_size": len(occurrences)},
            )
        self.occurrences = [np.asarray(o, dtype=np.int64) for o in occurrences]
        self.max_retries = max_retries

    def pool(self, user: int) -> np.ndarray:
        """Item occurrences of every user except ``user``."""
        others = [o for i, o in enumerate(self.occurrences) if i != user]
        return np.concatenate(others) if others else np.zeros(0, dtype=np.int64)

    def sample(
        self,
        user: int,
        positives: ArrayLike,
        k: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """
        Draw k negatives for each positive of one user.

        Draws equal to their positive are redrawn, up to ``max_retries``
        rounds.

        Returns:
            [len(positives), k] negative item references

        Raises:
            InsufficientNegativesError: If the other users have no items
            NegativeExhaustionError: If collisions persist after all retries
        """
        pos = np.asarray(positives, dtype=np.int64)
        pool = self.pool(user)
        if pool.size == 0:
            raise InsufficientNegativesError(
                "Other sequences in the batch hold no items", {"user_index": user}
            )
        draws = pool[rng.integers(0, pool.size, size=(pos.size, k))]
        for _ in range(self.max_retries):
            clash = draws == pos[:, None]
            n_clash = int(clash.sum())
            if n_clash == 0:
                return draws
            draws[clash] = pool[rng.integers(0, pool.size, size=n_clash)]
        first = int(pos[np.flatnonzero((draws == pos[:, None]).any(axis=1))[0]])
        raise NegativeExhaustionError(user, first, self.max_retries)


def sample_in_batch_negatives(
    batch: Sequence[ArrayLike],
    user_index: int,
    positive: int,
    k: int,
    rng: np.random.Generator,
    max_retries: int = MAX_RETRIES,
) -> np.ndarray:
    """
    Draw k negatives for one (user, positive item) pair.

    Args:
        batch: Item occurrences of every sequence in the mini-batch
        user_index: Position of the user in the batch
        positive: Positive item reference
        k: Number of negatives K
        rng: Generator
    """
    return NegativeSampler(batch, max_retries).sample(user_index, [positive], k, rng)[0]


@dataclass(frozen=True)
class BatchPlan:
    """
    Random choices for one mini-batch.

    Attributes:
        masked: [B, N] MLM positions
        match_candidates: [B, P, K+1] catalog rows, column 0 the positive
        mlm_candidates: [B, N, K+1] catalog rows, column 0 the masked item
    """

    masked: np.ndarray
    match_candidates: np.ndarray
    mlm_candidates: np.ndarray

    @property
    def num_negatives(self) -> int:
        return int(self.match_candidates.shape[-1]) - 1


def _candidates(
    sampler: NegativeSampler,
    positives: np.ndarray,
    select: np.ndarray,
    k: int,
    rng: np.random.Generator,
) -> np.ndarray:
    out = np.zeros((*positives.shape, k + 1), dtype=np.int64)
    out[..., 0] = positives
    for user in range(positives.shape[0]):
        chosen = positives[user][select[user]]
        if chosen.size:
            out[user, select[user], 1:] = sampler.sample(user, chosen, k, rng)
    return out


def draw_plan(
    batch: EncodedBatch,
    mask_prob: float,
    k: int,
    rng: np.random.Generator,
) -> BatchPlan:
    """Draw the MLM mask and all negatives of a batch from one generator."""
    masked = draw_mask(batch.valid, mask_prob, rng)
    sampler = NegativeSampler([batch.occurrences(i) for i in range(batch.size)])
    return BatchPlan(
        masked=masked,
        match_candidates=_candidates(sampler, batch.post_rows, batch.post_valid, k, rng),
        mlm_candidates=_candidates(sampler, batch.item_rows, masked, k, rng),
    )
