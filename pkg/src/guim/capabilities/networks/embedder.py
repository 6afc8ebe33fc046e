"""
Item & Time Embedding Layer.

- ItemVocab: top-X item-id vocabulary with one shared OOV index
- ItemEmbedder: f_j, concat(category, item id, mean title word) -> Linear -> GELU
- EmbeddingLayer: f_j together with the f_t daily time table and f_cls table
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from guim.core.config import ModelConfig
from guim.core.exceptions import ConfigError, LookupRangeError
from guim.domain.corpus import ItemRecord


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the erf-based Gaussian CDF."""
    return F.gelu(x, approximate="none")


# =============================================================================
# Item Vocabulary
# =============================================================================


@dataclass(frozen=True)
class ItemVocab:
    """
    Item-id vocabulary for the item-id embedding table.

    Attributes:
        item_ids: Item ids owning their own row, in row order
        top_x: Vocabulary cap X; index X is the OOV row
    """

    item_ids: tuple[int, ...]
    top_x: int
    _index: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {item: i for i, item in enumerate(self.item_ids)})

    @property
    def oov_index(self) -> int:
        return self.top_x

    def lookup(self, item_id: int) -> int:
        """Row of ``item_id`` in the item-id table (OOV row when not kept)."""
        return self._index.get(item_id, self.top_x)

    def __len__(self) -> int:
        return len(self.item_ids)


def build_item_vocab(
    catalog: Iterable[ItemRecord],
    purchase_counts: Mapping[int, int],
    top_x: int,
) -> ItemVocab:
    """
    Keep the ``top_x`` most purchased items; everything else shares the OOV row.

    Ties are broken toward the smaller item id. Catalog items missing from
    ``purchase_counts`` count as never purchased.

    Raises:
        ConfigError: If top_x is not positive
    """
    if top_x <= 0:
        raise ConfigError(f"top_x must be positive, got {top_x}", details={"top_x": top_x})
    ranked = sorted(
        {item.item_id for item in catalog},
        key=lambda item_id: (-purchase_counts.get(item_id, 0), item_id),
    )
    return ItemVocab(tuple(ranked[:top_x]), top_x)


# =============================================================================
# Embedding Modules
# =============================================================================


@dataclass(frozen=True)
class EmbedderConfig:
    """Table sizes and widths of the embedding layer.

    ``d`` is the output width of f_j, f_t and f_cls, which is d_model (C·d
    for the widened baseline).
    """

    d_c: int
    d_i: int
    d_w: int
    d: int
    top_x: int
    num_categories: int
    word_vocab_size: int
    time_rows: int
    num_cls: int

    @property
    def concat_width(self) -> int:
        return self.d_c + self.d_i + self.d_w

    @classmethod
    def from_model_config(cls, config: ModelConfig) -> EmbedderConfig:
        """Derive the embedder shape from a resolved model configuration."""
        missing = [
            name
            for name in ("num_categories", "word_vocab_size", "time_rows")
            if getattr(config, name) is None
        ]
        if missing:
            raise ConfigError(
                "Vocabulary sizes must be resolved before building the model",
                details={"missing": missing},
            )
        return cls(
            d_c=config.d_c,
            d_i=config.d_i,
            d_w=config.d_w,
            d=config.d_model,
            top_x=config.top_x,
            num_categories=config.num_categories,  # type: ignore[arg-type]
            word_vocab_size=config.word_vocab_size,  # type: ignore[arg-type]
            time_rows=config.time_rows,  # type: ignore[arg-type]
            num_cls=config.num_cls,
        )


def check_range(table: str, indices: Tensor, rows: int) -> None:
    """Raise LookupRangeError if any index falls outside ``[0, rows)``."""
    if indices.numel() == 0:
        return
    low, high = int(indices.min()), int(indices.max())
    if low < 0:
        raise LookupRangeError(table, low, rows)
    if high >= rows:
        raise LookupRangeError(table, high, rows)


class ItemEmbedder(nn.Module):
    """f_j: item embedding from category, item-id and averaged title words."""

    def __init__(self, config: EmbedderConfig) -> None:
        super().__init__()
        self.config = config
        self.category = nn.Embedding(config.num_categories, config.d_c)
        self.item_id = nn.Embedding(config.top_x + 1, config.d_i)
        self.words = nn.Embedding(config.word_vocab_size, config.d_w)
        self.projection = nn.Linear(config.concat_width, config.d)

    def forward(
        self,
        categories: Tensor,
        item_indices: Tensor,
        tokens: Tensor,
        token_mask: Tensor,
    ) -> Tensor:
        """
        Embed a flat batch of items.

        Args:
            categories: [R] category ids
            item_indices: [R] vocabulary rows (OOV row included)
            tokens: [R, T] title word ids, padded
            token_mask: [R, T] true for real tokens

        Returns:
            [R, d] item embeddings v
        """
        check_range("category", categories, self.config.num_categories)
        check_range("item_id", item_indices, self.config.top_x + 1)
        check_range("word", tokens[token_mask], self.config.word_vocab_size)

        weights = token_mask.to(self.words.weight.dtype)
        words = self.words(tokens) * weights.unsqueeze(-1)
        counts = weights.sum(-1, keepdim=True).clamp(min=1.0)
        mean_words = words.sum(1) / counts

        concat = torch.cat(
            [self.category(categories), self.item_id(item_indices), mean_words], dim=-1
        )
        return gelu(self.projection(concat))


class EmbeddingLayer(nn.Module):
    """f_j, f_t and f_cls for one model."""

    def __init__(self, config: EmbedderConfig) -> None:
        super().__init__()
        self.config = config
        self.item = ItemEmbedder(config)
        self.time = nn.Embedding(config.time_rows, config.d)
        self.cls = nn.Embedding(config.num_cls, config.d)

    def embed_time(self, buckets: Tensor) -> Tensor:
        """Look up daily time embeddings; bucket 0 is the t_0 row."""
        check_range("time", buckets, self.config.time_rows)
        return self.time(buckets)

    def embed_cls(self, indices: Tensor) -> Tensor:
        """Look up CLS token embeddings."""
        check_range("cls", indices, self.config.num_cls)
        return self.cls(indices)

    def forward(
        self,
        categories: Tensor,
        item_indices: Tensor,
        tokens: Tensor,
        token_mask: Tensor,
    ) -> Tensor:
        return self.item(categories, item_indices, tokens, token_mask)


def embed_item(
    layer: EmbeddingLayer,
    item: ItemRecord,
    vocab: ItemVocab,
) -> Tensor:
    """Embed a single item record with f_j (length-d vector)."""
    tokens = torch.tensor([list(item.title_tokens) or [0]], dtype=torch.long)
    mask = torch.tensor([[True] * len(item.title_tokens) or [False]])
    out = layer(
        torch.tensor([item.category_id]),
        torch.tensor([vocab.lookup(item.item_id)]),
        tokens,
        mask,
    )
    return out[0]


def vocab_item_array(vocab: ItemVocab) -> np.ndarray:
    """Item ids of the vocabulary as an int64 array (checkpoint payload)."""
    return np.asarray(vocab.item_ids, dtype=np.int64)
