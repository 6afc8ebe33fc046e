"""
Test Configuration - Global pytest fixtures.

Shared fixtures for the GUIM test suite.

Fixture Principles:
1. Build real objects on tiny inputs instead of mocking the model
2. Touch the filesystem only through tmp_path
3. Seed every random source explicitly
4. Use 64-bit precision wherever a test compares numbers exactly

What to Fake vs What to Use Real:
- Use Real: corpora (small synthetic ones), models, samplers, losses, indexes
- Build by Hand: sequences whose expected statistics or windows are known
- Never Fake: the function under test or the numerics it relies on
"""

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from guim.capabilities.networks.batching import CatalogFeatures, EncodedBatch, build_batch
from guim.capabilities.networks.embedder import ItemVocab, build_item_vocab
from guim.capabilities.networks.model import GUIMModel, build_model, resolve_model_config
from guim.capabilities.objectives.sampling import BatchPlan, draw_plan
from guim.core.config import ModelConfig, SyntheticConfig, TrainConfig, reset_config
from guim.core.logging import clear_context, reset_logging
from guim.core.models import Precision
from guim.domain.corpus import (
    SECONDS_PER_DAY,
    Corpus,
    Interaction,
    InteractionSequence,
    purchase_counts,
)
from guim.domain.synthetic import generate_synthetic

CUTOFF = 1_565_913_600


# ============================================================================
# Isolation Fixtures
# ============================================================================


@pytest.fixture(autouse=True)
def isolate_global_state(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """Clear GUIM_* variables, the cached config and logging setup around every test."""
    import os

    for key in list(os.environ):
        if key.startswith("GUIM_"):
            monkeypatch.delenv(key)
    reset_config()
    yield
    reset_config()
    reset_logging()
    clear_context()


# ============================================================================
# Corpus Fixtures
# ============================================================================


@pytest.fixture
def tiny_synth_config() -> SyntheticConfig:
    """A corpus small enough for per-test model training."""
    return SyntheticConfig(
        num_users=40,
        num_items=30,
        num_categories=8,
        num_clusters=4,
        interests_per_user=(1, 2),
        seq_length_range=(4, 10),
        post_length_range=(1, 3),
        title_length_range=(1, 4),
        word_vocab_size=64,
        stop_words=4,
        window_days=(30, 7),
        seed=0,
    )


@pytest.fixture
def tiny_corpus(tiny_synth_config: SyntheticConfig) -> Corpus:
    """Deterministic 40-user synthetic corpus."""
    return generate_synthetic(tiny_synth_config)


def make_sequence(
    user_id: int,
    pre_days: list[float],
    post_days: list[float],
    items: list[int] | None = None,
    window: tuple[int, int] = (365, 30),
) -> InteractionSequence:
    """
    Hand-built sequence with purchases at day offsets from the cutoff.

    ``pre_days`` are days before T (positive numbers), ``post_days`` days
    after T. Items default to 0, 1, 2, ... in chronological order.
    """
    stamps = sorted(CUTOFF - int(d * SECONDS_PER_DAY) for d in pre_days) + sorted(
        CUTOFF + int(d * SECONDS_PER_DAY) for d in post_days
    )
    ids = items if items is not None else list(range(len(stamps)))
    interactions = tuple(Interaction(i, ts) for i, ts in zip(ids, stamps, strict=True))
    return InteractionSequence(user_id, interactions, CUTOFF, window)


@pytest.fixture
def sequence_factory():
    """Factory for hand-built sequences around a fixed cutoff."""
    return make_sequence


# ============================================================================
# Model Fixtures
# ============================================================================


@pytest.fixture
def tiny_model_config(tiny_corpus: Corpus) -> ModelConfig:
    """Two-vector, one-layer GUIM resolved against the tiny corpus."""
    config = ModelConfig(
        d=8,
        num_vectors=2,
        num_layers=1,
        num_heads=2,
        d_c=8,
        d_i=8,
        d_w=4,
        top_x=20,
        max_len=16,
        seed=0,
    )
    return resolve_model_config(config, tiny_corpus)


@pytest.fixture
def tiny_vocab(tiny_corpus: Corpus, tiny_model_config: ModelConfig) -> ItemVocab:
    return build_item_vocab(
        tiny_corpus.catalog, purchase_counts(tiny_corpus.sequences), tiny_model_config.top_x
    )


@pytest.fixture
def tiny_features(tiny_corpus: Corpus, tiny_vocab: ItemVocab) -> CatalogFeatures:
    return CatalogFeatures.build(tiny_corpus.catalog, tiny_vocab)


@pytest.fixture
def tiny_model(tiny_model_config: ModelConfig) -> GUIMModel:
    """Float64 model, so exact comparisons are meaningful."""
    return build_model(tiny_model_config, precision=Precision.FLOAT64)


@pytest.fixture
def tiny_batch(
    tiny_corpus: Corpus, tiny_features: CatalogFeatures, tiny_model_config: ModelConfig
) -> EncodedBatch:
    """First eight users of the tiny corpus."""
    return build_batch(tiny_corpus.sequences[:8], tiny_features, tiny_model_config)


@pytest.fixture
def tiny_plan(tiny_batch: EncodedBatch) -> BatchPlan:
    """Plan with a generous mask rate so MLM positions exist."""
    return draw_plan(tiny_batch, 0.3, 3, np.random.default_rng(0))


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        batch_size=8,
        negatives=3,
        epochs=2,
        learning_rate=1e-2,
        log_every=1,
        precision=Precision.FLOAT64,
        seed=0,
    )


# ============================================================================
# Filesystem Fixtures
# ============================================================================


@pytest.fixture
def run_dir(tmp_path: Path) -> Path:
    """Empty output directory for CLI runs."""
    path = tmp_path / "run"
    path.mkdir()
    return path


# ============================================================================
# Marker Registration
# ============================================================================


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")
