"""Tests for guim.domain.synthetic module."""

import numpy as np
import pytest
from scipy.stats import spearmanr

from guim.core.config import SyntheticConfig
from guim.core.exceptions import ConfigError
from guim.domain.corpus import SECONDS_PER_DAY, split_at_cutoff
from guim.domain.synthetic import generate_synthetic, item_cluster_map, item_popularity


class TestGenerateSynthetic:
    """Test cases for the multi-interest generator."""

    def test_deterministic(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that one seed always gives the same corpus."""
        assert generate_synthetic(tiny_synth_config) == generate_synthetic(tiny_synth_config)

    def test_seed_changes_corpus(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that another seed gives another corpus."""
        other = tiny_synth_config.model_copy(update={"seed": 1})
        assert generate_synthetic(other).sequences != generate_synthetic(tiny_synth_config).sequences

    def test_sizes(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test catalog, user and profile counts."""
        corpus = generate_synthetic(tiny_synth_config)
        assert len(corpus.catalog) == tiny_synth_config.num_items
        assert len(corpus.sequences) == tiny_synth_config.num_users
        assert set(corpus.profiles) == set(range(tiny_synth_config.num_users))

    def test_windows_and_lengths(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that purchases fall in their windows with the configured counts."""
        corpus = generate_synthetic(tiny_synth_config)
        d1, d2 = tiny_synth_config.window_days
        for seq in corpus.sequences:
            pre, post = split_at_cutoff(seq)
            low, high = tiny_synth_config.seq_length_range
            assert low <= len(pre) <= high
            low, high = tiny_synth_config.post_length_range
            assert low <= len(post) <= high
            assert all(a.timestamp >= seq.cutoff - d1 * SECONDS_PER_DAY for a in pre)
            assert all(a.timestamp < seq.cutoff + d2 * SECONDS_PER_DAY for a in post)

    def test_purchases_follow_interests(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that users only buy from their planted interest clusters."""
        corpus = generate_synthetic(tiny_synth_config)
        clusters = item_cluster_map(tiny_synth_config)
        for seq in corpus.sequences:
            profile = corpus.profiles[seq.user_id]
            assert profile["dominant_cluster"] in profile["interests"]
            assert {clusters[a.item_id] for a in seq.interactions} <= set(profile["interests"])

    def test_items_follow_clusters(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that categories and non-stop title words come from the item's cluster."""
        corpus = generate_synthetic(tiny_synth_config)
        clusters = item_cluster_map(tiny_synth_config)
        words = np.arange(tiny_synth_config.stop_words, tiny_synth_config.word_vocab_size)
        blocks = np.array_split(words, tiny_synth_config.num_clusters)
        for item in corpus.catalog:
            cluster = clusters[item.item_id]
            assert item.category_id % tiny_synth_config.num_clusters == cluster
            for token in item.title_tokens:
                assert token < tiny_synth_config.stop_words or token in set(blocks[cluster].tolist())

    def test_popularity_sums_per_cluster(self, tiny_synth_config: SyntheticConfig) -> None:
        """Test that in-cluster popularity is a distribution."""
        weights = item_popularity(tiny_synth_config)
        clusters = item_cluster_map(tiny_synth_config)
        for cluster in range(tiny_synth_config.num_clusters):
            members = [i for i, c in clusters.items() if c == cluster]
            assert weights[members].sum() == pytest.approx(1.0)

    def test_infeasible_config(self) -> None:
        """Test that more interests than clusters is rejected."""
        with pytest.raises(ConfigError):
            generate_synthetic(SyntheticConfig(num_clusters=2, interests_per_user=(1, 3)))


class TestPopularityLaw:
    """Test cases for Zipf-skewed item frequencies."""

    def test_frequencies_follow_zipf_ranks(self) -> None:
        """Test rank correlation above 0.95 between 10^5 purchases and the Zipf weights."""
        config = SyntheticConfig(
            num_users=4000,
            num_items=100,
            num_categories=1,
            num_clusters=1,
            interests_per_user=(1, 1),
            popularity_skew=1.0,
            seq_length_range=(20, 20),
            post_length_range=(5, 5),
            seed=3,
        )
        corpus = generate_synthetic(config)
        counts = np.zeros(config.num_items)
        for seq in corpus.sequences:
            for interaction in seq.interactions:
                counts[interaction.item_id] += 1
        assert counts.sum() == 100_000

        rho, _ = spearmanr(counts, item_popularity(config))
        assert rho > 0.95
