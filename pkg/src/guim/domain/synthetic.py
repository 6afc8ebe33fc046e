"""
Synthetic Multi-Interest Corpus.

Stands in for production purchase logs. Every item belongs to one latent
cluster; its category and title words are drawn from that cluster, and users
buy from a handful of clusters with Zipf-skewed popularity inside each one.
"""

from __future__ import annotations

import numpy as np

from guim.core.config import SyntheticConfig
from guim.core.logging import get_logger
from guim.domain.corpus import (
    SECONDS_PER_DAY,
    Corpus,
    Interaction,
    InteractionSequence,
    ItemRecord,
)

logger = get_logger(__name__)


def _streams(config: SyntheticConfig) -> list[np.random.Generator]:
    """Independent catalog, popularity and user generators for one seed."""
    children = np.random.SeedSequence(config.seed).spawn(3)
    return [np.random.default_rng(child) for child in children]


def item_clusters(config: SyntheticConfig) -> np.ndarray:
    """Cluster of every item: a balanced assignment shuffled by the catalog stream."""
    rng = _streams(config)[0]
    return rng.permutation(np.arange(config.num_items) % config.num_clusters)


def item_popularity(config: SyntheticConfig) -> np.ndarray:
    """
    Purchase probability of each item within its own cluster.

    Items of a cluster get Zipf weights ``1 / rank**skew`` over a random rank
    order, normalised so each cluster's weights sum to one.
    """
    clusters = item_clusters(config)
    rng = _streams(config)[1]
    weights = np.zeros(config.num_items, dtype=np.float64)
    for cluster in range(config.num_clusters):
        members = np.flatnonzero(clusters == cluster)
        ranks = rng.permutation(len(members)) + 1
        w = 1.0 / ranks.astype(np.float64) ** config.popularity_skew
        weights[members] = w / w.sum()
    return weights


def _build_catalog(config: SyntheticConfig, clusters: np.ndarray) -> list[ItemRecord]:
    rng = _streams(config)[0]
    # the first draw of this stream is the cluster permutation
    rng.permutation(config.num_items)

    categories = np.arange(config.num_categories)
    words = np.arange(config.stop_words, config.word_vocab_size)
    word_blocks = np.array_split(words, config.num_clusters)
    low, high = config.title_length_range

    catalog: list[ItemRecord] = []
    for item_id, cluster in enumerate(clusters.tolist()):
        owned = categories[categories % config.num_clusters == cluster]
        category = int(rng.choice(owned))
        length = int(rng.integers(low, high + 1))
        stop = rng.random(length) < config.stop_word_rate if config.stop_words else np.zeros(length, bool)
        tokens = np.where(
            stop,
            rng.integers(0, max(config.stop_words, 1), size=length),
            rng.choice(word_blocks[cluster], size=length),
        )
        catalog.append(ItemRecord(item_id, category, tuple(int(t) for t in tokens)))
    return catalog


def _draw_times(
    rng: np.random.Generator, start: int, end: int, count: int
) -> np.ndarray:
    return np.sort(rng.integers(start, end, size=count))


def generate_synthetic(config: SyntheticConfig) -> Corpus:
    """
    Generate a deterministic multi-interest corpus.

    Each user draws k interest clusters (k uniform over ``interests_per_user``)
    with Dirichlet mixing weights. Every purchase picks a cluster by those
    weights and an item by in-cluster popularity. Pre-cutoff timestamps are
    uniform over ``[T - D1, T)`` and post-cutoff ones over ``[T, T + D2)``.

    Raises:
        ConfigError: If the configuration cannot be honoured
    """
    config.check_feasible()
    clusters = item_clusters(config)
    popularity = item_popularity(config)
    catalog = _build_catalog(config, clusters)

    members = [np.flatnonzero(clusters == c) for c in range(config.num_clusters)]
    member_probs = [popularity[m] for m in members]

    rng = _streams(config)[2]
    cutoff = config.cutoff_ts
    d1, d2 = config.window_days
    start, end = cutoff - d1 * SECONDS_PER_DAY, cutoff + d2 * SECONDS_PER_DAY

    sequences: list[InteractionSequence] = []
    profiles: dict[int, dict[str, object]] = {}
    for user_id in range(config.num_users):
        k = int(rng.integers(config.interests_per_user[0], config.interests_per_user[1] + 1))
        interests = rng.choice(config.num_clusters, size=k, replace=False)
        mix = rng.dirichlet(np.ones(k))
        n_pre = int(rng.integers(config.seq_length_range[0], config.seq_length_range[1] + 1))
        n_post = int(rng.integers(config.post_length_range[0], config.post_length_range[1] + 1))

        picks = rng.choice(interests, size=n_pre + n_post, p=mix)
        items = [int(rng.choice(members[c], p=member_probs[c])) for c in picks.tolist()]
        stamps = np.concatenate(
            [
                _draw_times(rng, start, cutoff, n_pre),
                _draw_times(rng, cutoff, end, n_post),
            ]
        )
        interactions = tuple(
            Interaction(item, int(ts)) for item, ts in zip(items, stamps.tolist(), strict=True)
        )
        sequences.append(
            InteractionSequence(user_id, interactions, cutoff, (d1, d2))
        )
        profiles[user_id] = {
            "interests": sorted(int(c) for c in interests),
            "dominant_cluster": int(interests[int(np.argmax(mix))]),
        }

    logger.info(
        "synthetic corpus generated",
        users=config.num_users,
        items=config.num_items,
        clusters=config.num_clusters,
        seed=config.seed,
    )
    return Corpus(
        catalog=catalog,
        sequences=sequences,
        num_categories=config.num_categories,
        word_vocab_size=config.word_vocab_size,
        profiles=profiles,
    )


def item_cluster_map(config: SyntheticConfig) -> dict[int, int]:
    """Map item id to its latent cluster (used by planted-label checks)."""
    return {i: int(c) for i, c in enumerate(item_clusters(config).tolist())}
