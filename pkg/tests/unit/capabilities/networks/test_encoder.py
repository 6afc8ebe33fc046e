"""Tests for guim.capabilities.networks.encoder module."""

import numpy as np
import pytest
import torch

from guim.capabilities.networks.encoder import (
    EncoderConfig,
    MaskingLayer,
    MultiHeadUserHead,
    OutputHeads,
    TransformerEncoder,
    apply_masking,
    attention,
    draw_mask,
    fuse_time,
    project_outputs,
    truncate_history,
)
from guim.core.exceptions import ShapeError


@pytest.fixture
def encoder() -> TransformerEncoder:
    torch.manual_seed(0)
    config = EncoderConfig(num_layers=2, d_model=8, num_heads=2, max_len=10)
    return TransformerEncoder(config).double()


class TestMasking:
    """Test cases for MLM position selection and substitution."""

    def test_mask_rate(self) -> None:
        """Test that about 15% of 10^5 positions are masked."""
        valid = np.ones((1000, 100), dtype=bool)
        masked = draw_mask(valid, 0.15, np.random.default_rng(0))
        assert abs(masked.mean() - 0.15) <= 0.01

    def test_only_valid_positions(self) -> None:
        """Test that padding is never masked."""
        valid = np.zeros((50, 20), dtype=bool)
        valid[:, :5] = True
        masked = draw_mask(valid, 1.0, np.random.default_rng(1))
        assert np.array_equal(masked, valid)

    def test_generator_advance_independent_of_rate(self) -> None:
        """Test that the generator state after drawing does not depend on the rate."""
        valid = np.ones((4, 6), dtype=bool)
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        draw_mask(valid, 0.0, a)
        draw_mask(valid, 0.9, b)
        assert a.random() == b.random()

    def test_apply_masking(self) -> None:
        """Test that masked positions take the MASK row and others are untouched."""
        items = torch.arange(24, dtype=torch.float64).view(2, 3, 4)
        valid = np.array([[True, True, False], [True, False, False]])
        mask_row = torch.full((4,), -1.0, dtype=torch.float64)
        out, masked = apply_masking(items, valid, mask_row, 1.0, np.random.default_rng(0))
        assert np.array_equal(masked, valid)
        assert torch.equal(out[0, 0], mask_row)
        assert torch.equal(out[0, 2], items[0, 2])
        assert torch.equal(out[1, 1], items[1, 1])

    def test_masking_layer(self) -> None:
        """Test the module form of the substitution."""
        layer = MaskingLayer(4).double()
        items = torch.ones(1, 2, 4, dtype=torch.float64)
        out = layer(items, torch.tensor([[True, False]]))
        assert torch.equal(out[0, 0], layer.mask.detach())
        assert torch.equal(out[0, 1], items[0, 1])


class TestFusionAndTruncation:
    """Test cases for time fusion and history truncation."""

    def test_fuse_time_adds(self) -> None:
        """Test that fusion is elementwise addition."""
        a, b = torch.ones(2, 3), torch.full((2, 3), 2.0)
        assert torch.equal(fuse_time(a, b), torch.full((2, 3), 3.0))

    def test_fuse_time_shape_mismatch(self) -> None:
        """Test that mismatched shapes are rejected."""
        with pytest.raises(ShapeError):
            fuse_time(torch.ones(2, 3), torch.ones(2, 4))

    def test_truncate_keeps_most_recent(self) -> None:
        """Test that the newest max_len - C interactions survive."""
        kept, dropped = truncate_history(list(range(20)), max_len=8, num_cls=3)
        assert kept == [15, 16, 17, 18, 19]
        assert dropped == 15

    def test_truncate_short_history(self) -> None:
        """Test that short histories pass through."""
        assert truncate_history([1, 2], max_len=8, num_cls=3) == ([1, 2], 0)

    def test_truncate_without_room(self) -> None:
        """Test that max_len must exceed the CLS count."""
        with pytest.raises(ShapeError):
            truncate_history([1], max_len=3, num_cls=3)


class TestAttention:
    """Test cases for scaled dot-product attention."""

    def test_weights_sum_to_one(self) -> None:
        """Test that attention weights are a distribution over keys."""
        q, k, v = (torch.randn(2, 3, 4, dtype=torch.float64) for _ in range(3))
        _, weights = attention(q, k, v)
        assert torch.allclose(weights.sum(-1), torch.ones(2, 3, dtype=torch.float64))

    def test_masked_keys_get_zero_weight(self) -> None:
        """Test that padded keys receive no attention."""
        q, k, v = (torch.randn(1, 2, 4, dtype=torch.float64) for _ in range(3))
        mask = torch.tensor([[[True, False]]])
        _, weights = attention(q, k, v, mask)
        assert torch.equal(weights[..., 1], torch.zeros(1, 2, dtype=torch.float64))


class TestTransformerEncoder:
    """Test cases for the post-LN encoder stack."""

    def test_config_rejects_bad_heads(self) -> None:
        """Test that d_model must be divisible by the head count."""
        with pytest.raises(ShapeError):
            EncoderConfig(num_layers=1, d_model=6, num_heads=4)

    def test_intermediate_default(self) -> None:
        """Test that the FFN width defaults to 4 d_model."""
        assert EncoderConfig(num_layers=1, d_model=8, num_heads=2).intermediate == 32

    def test_zero_layers_is_identity(self) -> None:
        """Test that L = 0 passes inputs through."""
        stack = TransformerEncoder(EncoderConfig(num_layers=0, d_model=8, num_heads=2))
        x = torch.randn(2, 5, 8)
        assert torch.equal(stack(x, torch.ones(2, 5, dtype=torch.bool)), x)

    def test_padding_invariance(self, encoder: TransformerEncoder) -> None:
        """Test that padded positions never influence real ones."""
        x = torch.randn(1, 6, 8, dtype=torch.float64)
        mask = torch.tensor([[True, True, True, True, False, False]])
        y = x.clone()
        y[0, 4:] = 100.0
        a, b = encoder(x, mask)[0, :4], encoder(y, mask)[0, :4]
        assert torch.allclose(a, b, rtol=0.0, atol=1e-12)

    def test_layer_norm_output(self, encoder: TransformerEncoder) -> None:
        """Test that every position leaves the last LayerNorm with zero mean."""
        out = encoder(torch.randn(2, 4, 8, dtype=torch.float64), torch.ones(2, 4, dtype=torch.bool))
        assert torch.allclose(out.mean(-1), torch.zeros(2, 4, dtype=torch.float64), atol=1e-12)

    def test_max_len(self, encoder: TransformerEncoder) -> None:
        """Test that sequences beyond max_len are rejected."""
        with pytest.raises(ShapeError):
            encoder(torch.zeros(1, 11, 8, dtype=torch.float64), torch.ones(1, 11, dtype=torch.bool))


class TestOutputHeads:
    """Test cases for f_o, f_u and the multi-head user layer."""

    def test_project_outputs_split(self) -> None:
        """Test the split into C user vectors and N item contexts."""
        heads = OutputHeads(8)
        items, users = project_outputs(torch.randn(3, 7, 8), 2, heads)
        assert items.shape == (3, 5, 8)
        assert users.shape == (3, 2, 8)

    def test_multi_head_shape(self) -> None:
        """Test that H heads give H user vectors of width d."""
        head = MultiHeadUserHead(8, 3)
        out = head(torch.randn(2, 5, 8), torch.ones(2, 5, dtype=torch.bool))
        assert out.shape == (2, 3, 8)

    def test_multi_head_needs_heads(self) -> None:
        """Test that zero heads are rejected."""
        with pytest.raises(ShapeError):
            MultiHeadUserHead(8, 0)
