"""
Consumer matching prediction (CMP): recall@M of top-M retrieval.

Protocols over the horizon ``[T, T + horizon)``:
    L: every distinct item purchased in the horizon
    S: items purchased on the first day after T
    N: the first item purchased after T
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from guim.capabilities.evaluation.index import CandidateIndex, top_m_retrieve
from guim.capabilities.evaluation.inference import infer_embeddings, item_embeddings
from guim.capabilities.networks.batching import CatalogFeatures
from guim.capabilities.networks.model import GUIMModel
from guim.core.config import EvalConfig
from guim.core.exceptions import EvaluationError, NoEligibleUsersError
from guim.core.logging import get_logger, logging_context
from guim.domain.corpus import InteractionSequence, history_window, horizon_window

logger = get_logger(__name__)

CMP_PROTOCOLS = ("L", "S", "N")
QUANTILES = (0.25, 0.5, 0.75)


def protocol_positives(seq: InteractionSequence, protocol: str, horizon_days: int) -> list[int]:
    """Ground-truth item ids of one user under a CMP protocol, first occurrence order."""
    if protocol == "L":
        window = horizon_window(seq, horizon_days)
    elif protocol == "S":
        window = horizon_window(seq, min(1, horizon_days))
    elif protocol == "N":
        window = horizon_window(seq, horizon_days)[:1]
    else:
        raise EvaluationError(f"Unknown CMP protocol {protocol!r}", "UNKNOWN_PROTOCOL")
    return list(dict.fromkeys(a.item_id for a in window))


def pre_cutoff_popularity(sequences: Iterable[InteractionSequence]) -> dict[int, int]:
    """Purchase counts from history windows only."""
    counts: dict[int, int] = {}
    for seq in sequences:
        for a in history_window(seq):
            counts[a.item_id] = counts.get(a.item_id, 0) + 1
    return counts


@dataclass(frozen=True)
class CmpDataset:
    """
    Users, candidate items and positives of one CMP protocol.

    Attributes:
        protocol: L, S or N
        users: Eligible sequences
        candidates: Candidate item ids, sorted
        positives: user id -> positive item ids (all inside candidates)
        excluded: Users without positives or without history
    """

    protocol: str
    users: list[InteractionSequence]
    candidates: np.ndarray
    positives: dict[int, list[int]]
    excluded: int = 0


def build_cmp_dataset(
    sequences: Sequence[InteractionSequence],
    protocol: str,
    catalog_ids: Iterable[int],
    popularity: Mapping[int, int],
    horizon_days: int = 30,
    candidate_pool: int | None = None,
) -> CmpDataset:
    """
    Assemble a CMP dataset.

    The candidate set is the ``candidate_pool`` most popular catalog items
    (ties toward the smaller id) plus every positive, or the whole catalog
    when no pool size is given.

    Raises:
        NoEligibleUsersError: If no user has both history and positives
    """
    protocol = protocol.upper()
    users: list[InteractionSequence] = []
    positives: dict[int, list[int]] = {}
    for seq in sequences:
        items = protocol_positives(seq, protocol, horizon_days)
        if items and history_window(seq):
            users.append(seq)
            positives[seq.user_id] = items
    excluded = len(sequences) - len(users)
    if not users:
        raise NoEligibleUsersError(protocol)

    catalog = sorted(set(catalog_ids))
    if candidate_pool is None:
        pool = set(catalog)
    else:
        ranked = sorted(catalog, key=lambda i: (-popularity.get(i, 0), i))
        pool = set(ranked[:candidate_pool])
    for items in positives.values():
        pool.update(items)
    return CmpDataset(
        protocol=protocol,
        users=users,
        candidates=np.asarray(sorted(pool), dtype=np.int64),
        positives=positives,
        excluded=excluded,
    )


def recall_at_m(retrieved: Iterable[int], positives: Iterable[int]) -> float:
    """
    Share of positives found among the retrieved items.

    Raises:
        EvaluationError: If there are no positives
    """
    truth = set(positives)
    if not truth:
        raise EvaluationError("recall@M needs at least one positive", "EMPTY_POSITIVES")
    return len(truth.intersection(retrieved)) / len(truth)


@dataclass
class CmpResult:
    """Per-user and mean recall@M of one protocol run."""

    protocol: str
    m: int
    per_user: dict[int, float] = field(default_factory=dict)
    excluded: int = 0

    @property
    def users(self) -> int:
        return len(self.per_user)

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_user.values()))) if self.per_user else 0.0

    def quantiles(self) -> dict[str, float]:
        if not self.per_user:
            return {}
        values = np.quantile(list(self.per_user.values()), QUANTILES)
        return {f"q{int(q * 100)}": float(v) for q, v in zip(QUANTILES, values, strict=True)}


def run_cmp(
    model: GUIMModel,
    features: CatalogFeatures,
    sequences: Sequence[InteractionSequence],
    protocol: str,
    config: EvalConfig,
    popularity: Mapping[int, int] | None = None,
) -> CmpResult:
    """
    Evaluate recall@M for one protocol.

    Users are encoded from their pre-cutoff history, candidates by f_j, and
    each user's vectors query the index independently before merging.

    Raises:
        NoEligibleUsersError: If no user qualifies
        EvaluationError: If M exceeds the candidate count
    """
    protocol = protocol.upper()
    with logging_context(protocol=protocol):
        dataset = build_cmp_dataset(
            sequences,
            protocol,
            features.item_ids.tolist(),
            popularity if popularity is not None else pre_cutoff_popularity(sequences),
            config.horizon_days,
            config.candidate_pool,
        )
        if config.m > dataset.candidates.size:
            raise EvaluationError(
                f"M={config.m} exceeds the index size {dataset.candidates.size}",
                "M_EXCEEDS_INDEX",
                {"m": config.m, "index_size": int(dataset.candidates.size)},
            )
        ids, vectors = item_embeddings(model, features, dataset.candidates.tolist())
        index = CandidateIndex(
            ids,
            vectors,
            backend=config.backend,
            n_lists=config.n_lists,
            n_probe=config.n_probe,
            seed=model.config.seed,
        )
        inferred = infer_embeddings(
            model, features, dataset.users, batch_size=config.inference_batch_size
        )
        result = CmpResult(protocol=protocol, m=config.m, excluded=dataset.excluded)
        for user, vectors_c in zip(inferred.user_ids, inferred.vectors, strict=True):
            retrieved, _ = top_m_retrieve(vectors_c, index, config.m)
            result.per_user[user] = recall_at_m(retrieved.tolist(), dataset.positives[user])
        logger.info(
            "cmp finished",
            m=config.m,
            users=result.users,
            excluded=result.excluded,
            mean_recall=result.mean,
        )
    return result
