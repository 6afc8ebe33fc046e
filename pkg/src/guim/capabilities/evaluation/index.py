"""
Cosine candidate index and multi-vector top-M retrieval.

The exact backend scores every item; the approximate backend is an
inverted-file index over k-means lists. Ranking order everywhere is score
descending, then item id ascending.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.cluster.vq import kmeans2

from guim.core.exceptions import EmptyIndexError, EvaluationError, ShapeError
from guim.core.logging import get_logger

logger = get_logger(__name__)

BACKENDS = ("exact", "approximate")


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.where(norms == 0.0, 1.0, norms)


def rank_top_m(ids: np.ndarray, scores: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Top ``m`` (id, score) pairs by score descending, then id ascending.

    Items tied with the m-th score all survive the partition step, so the
    tie-break is applied over the full tie group.
    """
    n = scores.size
    if m < n:
        threshold = np.partition(scores, n - m)[n - m]
        keep = np.flatnonzero(scores >= threshold)
        ids, scores = ids[keep], scores[keep]
    order = np.lexsort((ids, -scores))[:m]
    return ids[order], scores[order]


class CandidateIndex:
    """
    Immutable cosine index over item embeddings.

    Args:
        item_ids: Item ids, one per row of ``vectors``
        vectors: [M, D] item embeddings
        backend: "exact" or "approximate"
        n_lists: Inverted lists of the approximate backend
        n_probe: Lists scanned per query
        seed: k-means seed
    """

    def __init__(
        self,
        item_ids: ArrayLike,
        vectors: ArrayLike,
        backend: str = "exact",
        n_lists: int = 32,
        n_probe: int = 4,
        seed: int = 0,
    ) -> None:
        if backend not in BACKENDS:
            raise EvaluationError(f"Unknown index backend {backend!r}", "UNKNOWN_BACKEND")
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != self.item_ids.size:
            raise ShapeError(
                "Index needs one vector per item id",
                {"ids": int(self.item_ids.size), "vectors": list(vectors.shape)},
            )
        self.unit = _unit_rows(vectors)
        self.backend = backend
        self.n_probe = n_probe
        self.centroids: np.ndarray | None = None
        self.lists: list[np.ndarray] = []
        if backend == "approximate" and self.size:
            self._build_lists(min(n_lists, self.size), seed)

    @property
    def size(self) -> int:
        return int(self.item_ids.size)

    @property
    def dim(self) -> int:
        return int(self.unit.shape[1])

    def _build_lists(self, n_lists: int, seed: int) -> None:
        with warnings.catch_warnings():
            # empty clusters are harmless: their lists stay empty
            warnings.simplefilter("ignore")
            centroids, labels = kmeans2(self.unit, n_lists, minit="++", seed=seed)
        self.centroids = _unit_rows(np.asarray(centroids, dtype=np.float64))
        self.lists = [np.flatnonzero(labels == i) for i in range(n_lists)]
        logger.debug("inverted lists built", lists=n_lists, items=self.size)

    def cosines(self, query: ArrayLike) -> np.ndarray:
        """Cosine of every indexed item with ``query``, clamped to [-1, 1]."""
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ShapeError("Query width differs from the index", {"query": list(q.shape)})
        norm = np.linalg.norm(q)
        q = q / norm if norm > 0.0 else q
        return np.clip(self.unit @ q, -1.0, 1.0)

    def _candidate_rows(self, query: np.ndarray) -> np.ndarray:
        if self.backend == "exact" or self.centroids is None:
            return np.arange(self.size)
        closeness = self.centroids @ query
        probe = np.argsort(-closeness, kind="stable")[: self.n_probe]
        return np.sort(np.concatenate([self.lists[i] for i in probe]))

    def search(self, query: ArrayLike, m: int) -> tuple[np.ndarray, np.ndarray]:
        """
        Top-m item ids and cosines for one query vector.

        The approximate backend may return fewer than ``m`` items when the
        probed lists are small.

        Raises:
            EmptyIndexError: If the index holds no items
        """
        if self.size == 0:
            raise EmptyIndexError()
        scores = self.cosines(query)
        rows = self._candidate_rows(np.asarray(query, dtype=np.float64))
        return rank_top_m(self.item_ids[rows], scores[rows], m)

    def self_test(
        self,
        queries: ArrayLike,
        m: int,
        recall_floor: float | None = None,
    ) -> float:
        """
        Mean recall of this index's top-m against exact search.

        Raises:
            EvaluationError: If recall falls below ``recall_floor``
        """
        qs = np.asarray(queries, dtype=np.float64)
        m = min(m, self.size)
        recalls = []
        for q in qs:
            exact, _ = rank_top_m(self.item_ids, self.cosines(q), m)
            found, _ = self.search(q, m)
            recalls.append(np.intersect1d(exact, found).size / m)
        recall = float(np.mean(recalls)) if recalls else 1.0
        logger.info("index self-test", backend=self.backend, recall=recall, queries=len(recalls))
        if recall_floor is not None and recall < recall_floor:
            raise EvaluationError(
                "Approximate index recall below floor",
                "INDEX_RECALL_FLOOR",
                {"recall": recall, "floor": recall_floor},
            )
        return recall


def top_m_retrieve(
    user_vectors: Sequence[ArrayLike] | np.ndarray,
    index: CandidateIndex,
    m: int,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Retrieve the global top-m items for a set of user vectors.

    Issues one top-m query per vector, keeps each item's best cosine across
    the queries and ranks the merged pool. With the exact backend the result
    equals ranking every item by ``max_c cos(u_c, v)``.

    Returns:
        (item ids, max cosines), both of length m for the exact backend

    Raises:
        EmptyIndexError: If the index holds no items
        EvaluationError: If m exceeds the index size
    """
    if index.size == 0:
        raise EmptyIndexError()
    if m > index.size:
        raise EvaluationError(
            f"M={m} exceeds the index size {index.size}",
            "M_EXCEEDS_INDEX",
            {"m": m, "index_size": index.size},
        )
    best: dict[int, float] = {}
    for u in np.asarray(user_vectors, dtype=np.float64):
        ids, scores = index.search(u, m)
        for item, score in zip(ids.tolist(), scores.tolist(), strict=True):
            if score > best.get(item, -np.inf):
                best[item] = score
    ids = np.fromiter(best.keys(), dtype=np.int64, count=len(best))
    scores = np.fromiter(best.values(), dtype=np.float64, count=len(best))
    return rank_top_m(ids, scores, m)


def brute_force_retrieve(
    user_vectors: Sequence[ArrayLike] | np.ndarray,
    index: CandidateIndex,
    m: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Rank every indexed item by its max cosine over the user vectors."""
    scores = np.max([index.cosines(u) for u in np.asarray(user_vectors)], axis=0)
    return rank_top_m(index.item_ids, scores, m)
