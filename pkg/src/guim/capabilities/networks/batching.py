"""
Batch preprocessing: catalog feature tensors and padded user batches.

Item references inside a batch are catalog rows, so every item embedding
v_j can be computed from CatalogFeatures by row index.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from guim.capabilities.networks.embedder import ItemVocab
from guim.capabilities.networks.encoder import truncate_history
from guim.core.config import ModelConfig
from guim.core.exceptions import CorpusError
from guim.core.logging import get_logger
from guim.domain.corpus import (
    InteractionSequence,
    ItemRecord,
    day_bucket,
    history_window,
    split_at_cutoff,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class CatalogFeatures:
    """f_j inputs for every catalog item, indexed by catalog row."""

    item_ids: np.ndarray
    categories: Tensor
    item_indices: Tensor
    tokens: Tensor
    token_mask: Tensor
    row_of: dict[int, int]

    @classmethod
    def build(cls, catalog: Sequence[ItemRecord], vocab: ItemVocab) -> CatalogFeatures:
        width = max((len(item.title_tokens) for item in catalog), default=0)
        width = max(width, 1)
        tokens = np.zeros((len(catalog), width), dtype=np.int64)
        mask = np.zeros((len(catalog), width), dtype=bool)
        for row, item in enumerate(catalog):
            n = len(item.title_tokens)
            tokens[row, :n] = item.title_tokens
            mask[row, :n] = True
        return cls(
            item_ids=np.asarray([item.item_id for item in catalog], dtype=np.int64),
            categories=torch.tensor([item.category_id for item in catalog], dtype=torch.long),
            item_indices=torch.tensor(
                [vocab.lookup(item.item_id) for item in catalog], dtype=torch.long
            ),
            tokens=torch.from_numpy(tokens),
            token_mask=torch.from_numpy(mask),
            row_of={item.item_id: row for row, item in enumerate(catalog)},
        )

    def __len__(self) -> int:
        return len(self.item_ids)

    def rows(self, item_ids: Sequence[int]) -> np.ndarray:
        """Catalog rows of the given item ids."""
        try:
            return np.asarray([self.row_of[i] for i in item_ids], dtype=np.int64)
        except KeyError as e:
            raise CorpusError(f"Item {e.args[0]} is not in the catalog") from e

    def select(self, rows: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """f_j inputs of the given rows."""
        return (
            self.categories[rows],
            self.item_indices[rows],
            self.tokens[rows],
            self.token_mask[rows],
        )


@dataclass
class EncodedBatch:
    """
    A padded mini-batch of user sequences.

    Attributes:
        user_ids: Users in batch order
        item_rows: [B, N] catalog rows of pre-cutoff items (0 at padding)
        time_buckets: [B, N] daily time rows of those items
        valid: [B, N] true at real items
        post_rows: [B, P] catalog rows of post-cutoff items
        post_valid: [B, P] true at real post-cutoff items
        num_cls: CLS tokens prepended by the model
        truncated: Pre-cutoff items dropped to respect max_len
    """

    user_ids: list[int]
    item_rows: np.ndarray
    time_buckets: np.ndarray
    valid: np.ndarray
    post_rows: np.ndarray
    post_valid: np.ndarray
    num_cls: int
    truncated: int = 0

    @property
    def size(self) -> int:
        return len(self.user_ids)

    def attention_mask(self) -> Tensor:
        """[B, C + N] mask, true at CLS tokens and real items."""
        cls = np.ones((self.size, self.num_cls), dtype=bool)
        return torch.from_numpy(np.concatenate([cls, self.valid], axis=1))

    def occurrences(self, user: int) -> np.ndarray:
        """All item rows (pre and post) of one user, in sequence order."""
        return np.concatenate(
            [self.item_rows[user][self.valid[user]], self.post_rows[user][self.post_valid[user]]]
        )


def _pad(rows: list[np.ndarray], width: int) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros((len(rows), width), dtype=np.int64)
    valid = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
        valid[i, : len(r)] = True
    return out, valid


def build_batch(
    sequences: Sequence[InteractionSequence],
    features: CatalogFeatures,
    config: ModelConfig,
    *,
    cutoff: int | None = None,
    include_post: bool = True,
) -> EncodedBatch:
    """
    Vocab-map, time-bucket and pad a batch of sequences.

    Only interactions in ``[cutoff - D1, cutoff)`` enter the encoder input,
    truncated to the most recent ``max_len - C``. Post-cutoff items become
    matching targets unless ``include_post`` is false.

    Args:
        sequences: User sequences
        features: Catalog features for row lookup
        config: Resolved model configuration
        cutoff: Inference cutoff overriding each sequence's own T
        include_post: Keep post-cutoff targets
    """
    pre_rows: list[np.ndarray] = []
    bucket_rows: list[np.ndarray] = []
    post_rows: list[np.ndarray] = []
    truncated = 0
    for seq in sequences:
        boundary = seq.cutoff if cutoff is None else cutoff
        history, dropped = truncate_history(
            history_window(seq, boundary), config.max_len, config.num_cls
        )
        truncated += dropped
        pre_rows.append(features.rows([a.item_id for a in history]))
        bucket_rows.append(
            np.asarray(
                [
                    day_bucket(a.timestamp, boundary, seq.window[0], config.time_rows)
                    for a in history
                ],
                dtype=np.int64,
            )
        )
        if include_post:
            _, post = split_at_cutoff(seq)
            horizon = [a for a in post if a.timestamp < seq.horizon_end]
            post_rows.append(features.rows([a.item_id for a in horizon]))
        else:
            post_rows.append(np.zeros(0, dtype=np.int64))

    width = max((len(r) for r in pre_rows), default=0)
    items, valid = _pad(pre_rows, width)
    buckets, _ = _pad(bucket_rows, width)
    posts, post_valid = _pad(post_rows, max((len(r) for r in post_rows), default=0))
    if truncated:
        logger.info("long histories truncated", dropped=truncated, max_len=config.max_len)
    return EncodedBatch(
        user_ids=[seq.user_id for seq in sequences],
        item_rows=items,
        time_buckets=buckets,
        valid=valid,
        post_rows=posts,
        post_valid=post_valid,
        num_cls=config.num_cls,
        truncated=truncated,
    )
