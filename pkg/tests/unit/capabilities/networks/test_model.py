"""Tests for guim.capabilities.networks.model module."""

import dataclasses

import numpy as np
import pytest
import torch

from guim.capabilities.networks.batching import build_batch
from guim.capabilities.networks.model import (
    GUIMModel,
    build_model,
    count_parameters,
    parameter_block,
    resolve_model_config,
    tally_parameters,
)
from guim.core.config import ModelConfig, build_config, load_config
from guim.core.exceptions import ConfigError
from guim.core.models import ModelVariant, Precision
from guim.domain.corpus import Interaction


def small_config(variant: ModelVariant = ModelVariant.GUIM, vectors: int = 2) -> ModelConfig:
    return ModelConfig(
        variant=variant,
        d=8,
        num_vectors=vectors,
        num_layers=2,
        num_heads=2,
        d_c=8,
        d_i=8,
        d_w=4,
        top_x=20,
        num_categories=8,
        word_vocab_size=64,
        time_rows=31,
        max_len=16,
    )


@pytest.fixture
def production() -> ModelConfig:
    return build_config(load_config(preset="production", search=False)).model


class TestCountParameters:
    """Test cases for the weights-only parameter breakdown."""

    def test_single_vector_total(self, production: ModelConfig) -> None:
        """Test the production single-vector total."""
        report = count_parameters(production)
        assert report.total == 706_432
        assert report.components["transformer"] == 589_824
        assert report.components["f_t"] == 46_848

    def test_input_tables(self, production: ModelConfig) -> None:
        """Test the separately reported input tables."""
        tables = count_parameters(production).input_tables
        assert tables["category_table"] == 1_280_000
        assert tables["word_table"] == 16_960_000
        assert tables["item_id_table"] == 25_600_128

    def test_widened_baseline_total(self, production: ModelConfig) -> None:
        """Test GUI-EDI with four times the hidden size."""
        config = production.model_copy(update={"variant": ModelVariant.GUI_EDI, "num_vectors": 4})
        assert count_parameters(config).total == 10_296_832

    def test_cls_rows_grow_with_vectors(self, production: ModelConfig) -> None:
        """Test that GUIM adds one d-wide CLS row per extra vector."""
        config = production.model_copy(update={"num_vectors": 4})
        assert count_parameters(config).total == 706_432 + 3 * 128

    def test_multi_head_layer(self, production: ModelConfig) -> None:
        """Test that GUIM-MH adds 4 H d^2 weights."""
        config = production.model_copy(update={"variant": ModelVariant.GUIM_MH, "num_vectors": 4})
        report = count_parameters(config)
        assert report.components["mh_head"] == 262_144
        assert report.total == 968_576

    @pytest.mark.parametrize("variant", list(ModelVariant))
    def test_tally_matches_analytic(self, variant: ModelVariant) -> None:
        """Test that walking a built model gives the analytic counts."""
        config = small_config(variant)
        model = build_model(config)
        tallied, analytic = tally_parameters(model), count_parameters(config)
        assert dict(tallied.components) == dict(analytic.components)
        assert dict(tallied.input_tables) == dict(analytic.input_tables)


class TestBuildModel:
    """Test cases for construction and initialization."""

    def test_unresolved_config(self) -> None:
        """Test that a model needs resolved vocabulary sizes."""
        with pytest.raises(ConfigError):
            GUIMModel(ModelConfig())

    def test_resolve_from_corpus(self, tiny_corpus) -> None:
        """Test that unset sizes come from the corpus and window."""
        resolved = resolve_model_config(ModelConfig(), tiny_corpus)
        assert resolved.num_categories == tiny_corpus.num_categories
        assert resolved.word_vocab_size == tiny_corpus.word_vocab_size
        assert resolved.time_rows == 31

    def test_deterministic_init(self) -> None:
        """Test that one seed gives identical parameters."""
        a = build_model(small_config(), seed=3, precision=Precision.FLOAT64)
        b = build_model(small_config(), seed=3, precision=Precision.FLOAT64)
        c = build_model(small_config(), seed=4, precision=Precision.FLOAT64)
        for (name, pa), pb, pc in zip(
            a.named_parameters(), b.parameters(), c.parameters(), strict=True
        ):
            assert torch.equal(pa, pb), name
        assert not torch.equal(a.embeddings.cls.weight, c.embeddings.cls.weight)

    def test_init_scheme(self) -> None:
        """Test biases, LayerNorm and embedding ranges after initialization."""
        model = build_model(small_config(), precision=Precision.FLOAT64)
        layer = model.encoder.layers[0]
        assert torch.count_nonzero(layer.attention.query.bias) == 0
        assert torch.equal(layer.attention_norm.weight, torch.ones(8, dtype=torch.float64))
        assert float(model.embeddings.time.weight.abs().max()) <= 0.02
        assert float(model.masking.mask.abs().max()) <= 0.02

    def test_precision(self) -> None:
        """Test that the requested precision is applied."""
        assert build_model(small_config()).embeddings.cls.weight.dtype == torch.float32
        model = build_model(small_config(), precision=Precision.FLOAT64)
        assert model.embeddings.cls.weight.dtype == torch.float64

    def test_parameter_blocks(self) -> None:
        """Test the block names used by gradient checks and error reports."""
        assert parameter_block("encoder.layers.0.attention.query.weight") == "attention"
        assert parameter_block("encoder.layers.0.attention_norm.weight") == "layer_norm"
        assert parameter_block("encoder.layers.1.intermediate.bias") == "ffn"
        assert parameter_block("embeddings.item.words.weight") == "word_table"
        assert parameter_block("masking.mask") == "mask"
        assert parameter_block("embeddings.cls.weight") == "f_cls"


class TestForward:
    """Test cases for the forward pass."""

    def test_shapes(self, tiny_model, tiny_features, tiny_batch, tiny_plan) -> None:
        """Test the output shapes for a two-vector model."""
        out = tiny_model(tiny_features, tiny_batch, tiny_plan)
        b, n = tiny_batch.item_rows.shape
        p = tiny_batch.post_rows.shape[1]
        assert out.user_rep.shape == (b, 2, 8)
        assert out.item_contexts.shape == (b, n, 8)
        assert out.match_targets.shape == (b, p, 4, 8)
        assert out.mlm_targets.shape == (b, n, 4, 8)

    def test_multi_head_user_vectors(self, tiny_corpus, tiny_features) -> None:
        """Test that GUIM-MH returns H vectors from one CLS."""
        config = resolve_model_config(
            small_config(ModelVariant.GUIM_MH, 3).model_copy(
                update={"num_categories": None, "word_vocab_size": None, "time_rows": None}
            ),
            tiny_corpus,
        )
        model = build_model(config, precision=Precision.FLOAT64)
        batch = build_batch(tiny_corpus.sequences[:4], tiny_features, config, include_post=False)
        assert model.encode_users(tiny_features, batch).shape == (4, 3, 8)

    def test_single_vector_variants_coincide(self, tiny_corpus, tiny_features) -> None:
        """Test that GUIM and GUI-EDI are the same model when C = 1."""
        base = small_config(vectors=1).model_copy(update={"time_rows": 31})
        guim = build_model(base, precision=Precision.FLOAT64)
        edi = build_model(
            base.model_copy(update={"variant": ModelVariant.GUI_EDI}), precision=Precision.FLOAT64
        )
        for (name, a), (_, b) in zip(
            guim.state_dict().items(), edi.state_dict().items(), strict=True
        ):
            assert torch.equal(a, b), name
        batch = build_batch(tiny_corpus.sequences[:4], tiny_features, base, include_post=False)
        assert torch.equal(
            guim.encode_users(tiny_features, batch), edi.encode_users(tiny_features, batch)
        )

    def test_post_cutoff_items_do_not_leak(self, tiny_model, tiny_corpus, tiny_features) -> None:
        """Test that changing purchases after T leaves user vectors bitwise unchanged."""
        seq = tiny_corpus.sequences[0]
        pre = [a for a in seq.interactions if a.timestamp < seq.cutoff]
        other_item = next(
            i.item_id for i in tiny_corpus.catalog if i.item_id not in {a.item_id for a in pre}
        )
        altered = dataclasses.replace(
            seq, interactions=(*pre, Interaction(other_item, seq.cutoff + 5))
        )
        config = tiny_model.config
        a = tiny_model.encode_users(
            tiny_features, build_batch([seq], tiny_features, config, include_post=False)
        )
        b = tiny_model.encode_users(
            tiny_features, build_batch([altered], tiny_features, config, include_post=False)
        )
        assert torch.equal(a, b)

    def test_batch_composition_does_not_matter(
        self, tiny_model, tiny_corpus, tiny_features
    ) -> None:
        """Test that a user's vectors do not depend on the other users in the batch."""
        config = tiny_model.config
        seqs = tiny_corpus.sequences[:6]
        together = tiny_model.encode_users(
            tiny_features, build_batch(seqs, tiny_features, config, include_post=False)
        )
        alone = tiny_model.encode_users(
            tiny_features, build_batch(seqs[2:3], tiny_features, config, include_post=False)
        )
        assert np.allclose(together[2].numpy(), alone[0].numpy(), rtol=0.0, atol=1e-10)
