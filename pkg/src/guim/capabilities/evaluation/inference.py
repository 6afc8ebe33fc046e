"""
Inference-time embedding extraction.

Only interactions before the inference cutoff reach the encoder, and no
position is masked. Item embeddings are f_j outputs for catalog items.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from guim.capabilities.networks.batching import CatalogFeatures, build_batch
from guim.capabilities.networks.model import GUIMModel
from guim.core.logging import get_logger
from guim.domain.corpus import InteractionSequence, history_window

logger = get_logger(__name__)

DEFAULT_INFERENCE_BATCH = 256


@dataclass(frozen=True)
class InferenceResult:
    """
    User representations of one inference run.

    Attributes:
        user_ids: Users with a non-empty history, in input order
        vectors: [U, V, D] float64 user vectors
        skipped: Users dropped for an empty pre-cutoff history
    """

    user_ids: tuple[int, ...]
    vectors: np.ndarray
    skipped: int = 0

    def by_user(self) -> dict[int, np.ndarray]:
        return {user: self.vectors[i] for i, user in enumerate(self.user_ids)}


def infer_embeddings(
    model: GUIMModel,
    features: CatalogFeatures,
    sequences: Sequence[InteractionSequence],
    cutoff: int | None = None,
    batch_size: int = DEFAULT_INFERENCE_BATCH,
) -> InferenceResult:
    """
    Encode users from their pre-cutoff history only.

    Args:
        model: Trained model
        features: Catalog features built with the model's vocabulary
        sequences: Users to encode
        cutoff: Inference cutoff; each sequence's own T when omitted
        batch_size: Users per forward pass

    Returns:
        InferenceResult; users without pre-cutoff interactions are skipped
    """
    model.eval()
    kept = [
        seq
        for seq in sequences
        if history_window(seq, seq.cutoff if cutoff is None else cutoff)
    ]
    skipped = len(sequences) - len(kept)
    if skipped:
        logger.warning("users without history skipped", skipped=skipped)

    width = model.config.d_model
    chunks: list[np.ndarray] = []
    for start in range(0, len(kept), batch_size):
        chunk = kept[start : start + batch_size]
        batch = build_batch(chunk, features, model.config, cutoff=cutoff, include_post=False)
        users = model.encode_users(features, batch)
        chunks.append(users.detach().cpu().numpy().astype(np.float64))

    vectors = (
        np.concatenate(chunks)
        if chunks
        else np.zeros((0, model.config.user_vectors, width), dtype=np.float64)
    )
    return InferenceResult(tuple(seq.user_id for seq in kept), vectors, skipped)


def item_embeddings(
    model: GUIMModel,
    features: CatalogFeatures,
    item_ids: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    f_j embeddings of catalog items.

    Returns:
        (item ids, [M, D] float64 embeddings); the whole catalog when
        ``item_ids`` is omitted
    """
    model.eval()
    ids = features.item_ids if item_ids is None else np.asarray(item_ids, dtype=np.int64)
    rows = features.rows(ids.tolist())
    vectors = model.item_embeddings(features, rows).detach().cpu().numpy()
    return ids.copy(), vectors.astype(np.float64)
