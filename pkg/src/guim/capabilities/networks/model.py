"""
GUIM Model Assembly.

Builds GUIM, GUI-EDI and GUIM-MH from the embedding layer and the encoder,
runs the forward pass and accounts parameters.

Parameter counting convention: weights only. Biases, LayerNorm scale/shift
and the MASK row are excluded; the category, item-id and word tables are
reported separately from the model total.
"""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Iterator
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import torch
from torch import Tensor, nn

from guim.capabilities.networks.batching import CatalogFeatures, EncodedBatch
from guim.capabilities.networks.embedder import EmbedderConfig, EmbeddingLayer
from guim.capabilities.networks.encoder import (
    EncoderConfig,
    MaskingLayer,
    MultiHeadUserHead,
    OutputHeads,
    TransformerEncoder,
    fuse_time,
)
from guim.core.config import ModelConfig
from guim.core.logging import get_logger
from guim.core.models import ModelVariant, Precision
from guim.domain.corpus import Corpus

if TYPE_CHECKING:
    from guim.capabilities.objectives.sampling import BatchPlan

logger = get_logger(__name__)

EMBEDDING_INIT_RANGE = 0.02

INPUT_TABLES = ("category_table", "item_id_table", "word_table")
COMPONENT_ORDER = ("f_j", "f_t", "f_cls", "transformer", "f_u", "f_o", "mh_head")
COMPONENT_LABELS = {
    "f_j": "Projection matrix in f_j()",
    "f_t": "Embedding table in f_t()",
    "f_cls": "Embedding table in f_cls()",
    "transformer": "Transformer layers",
    "f_u": "Projection matrix in f_u()",
    "f_o": "Projection matrix in f_o()",
    "mh_head": "Multi-head attention layer",
}

_BLOCK_PREFIXES = (
    ("embeddings.item.category.", "category_table"),
    ("embeddings.item.item_id.", "item_id_table"),
    ("embeddings.item.words.", "word_table"),
    ("embeddings.item.projection.", "f_j"),
    ("embeddings.time.", "f_t"),
    ("embeddings.cls.", "f_cls"),
    ("masking.", "mask"),
    ("heads.f_o.", "f_o"),
    ("heads.f_u.", "f_u"),
    ("mh_head.", "mh_head"),
)


def parameter_block(name: str) -> str:
    """Block of a named parameter (tables, attention, ffn, layer_norm, projections)."""
    for prefix, block in _BLOCK_PREFIXES:
        if name.startswith(prefix):
            return block
    if name.startswith("encoder."):
        if "_norm." in name:
            return "layer_norm"
        if ".attention." in name:
            return "attention"
        return "ffn"
    return name.split(".")[0]


def dtype_for(precision: Precision) -> torch.dtype:
    return torch.float64 if precision == Precision.FLOAT64 else torch.float32


def resolve_model_config(config: ModelConfig, corpus: Corpus) -> ModelConfig:
    """Fill vocabulary sizes and time rows left unset from the corpus."""
    window = corpus.sequences[0].window[0] if corpus.sequences else 365
    updates = {
        "num_categories": config.num_categories or corpus.num_categories,
        "word_vocab_size": config.word_vocab_size or corpus.word_vocab_size,
        "time_rows": config.time_rows or window + 1,
    }
    return config.model_copy(update=updates)


@dataclass
class ForwardOutput:
    """
    Outputs of one forward pass over a batch.

    Attributes:
        user_rep: [B, V, D] user vectors (V = C, H or 1)
        item_contexts: [B, N, D] o_n at every item position
        match_targets: [B, P, K+1, D] f_j of positives and matching negatives
        mlm_targets: [B, N, K+1, D] f_j of masked items and MLM negatives
        post_valid: [B, P] real post-cutoff positives
        masked: [B, N] masked positions
    """

    user_rep: Tensor
    item_contexts: Tensor
    match_targets: Tensor
    mlm_targets: Tensor
    post_valid: Tensor
    masked: Tensor


class GUIMModel(nn.Module):
    """Multi-CLS transformer user model and its two baselines."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.embedder_config = EmbedderConfig.from_model_config(config)
        self.encoder_config = EncoderConfig(
            num_layers=config.num_layers,
            d_model=config.d_model,
            num_heads=config.encoder_heads,
            max_len=config.max_len,
            mask_prob=config.mask_prob,
        )
        self.embeddings = EmbeddingLayer(self.embedder_config)
        self.masking = MaskingLayer(config.d_model)
        self.encoder = TransformerEncoder(self.encoder_config)
        self.heads = OutputHeads(config.d_model)
        self.mh_head: MultiHeadUserHead | None = None
        if config.variant == ModelVariant.GUIM_MH:
            self.mh_head = MultiHeadUserHead(config.d, config.num_vectors)

    @property
    def num_cls(self) -> int:
        return self.config.num_cls

    def embed_rows(self, features: CatalogFeatures, rows: Tensor) -> Tensor:
        """f_j of catalog rows, computed once per distinct row."""
        flat = rows.reshape(-1)
        unique, inverse = torch.unique(flat, return_inverse=True)
        v = self.embeddings(*features.select(unique))
        return v[inverse].view(*rows.shape, v.shape[-1])

    def encode(
        self,
        features: CatalogFeatures,
        batch: EncodedBatch,
        masked: np.ndarray | None = None,
    ) -> tuple[Tensor, Tensor]:
        """
        Masking & time fusion followed by the transformer stack.

        Returns:
            (h [B, C+N, D], attention mask [B, C+N])
        """
        b = batch.size
        items = self.embed_rows(features, torch.from_numpy(batch.item_rows))
        if masked is not None:
            items = self.masking(items, torch.from_numpy(masked))
        items = fuse_time(items, self.embeddings.embed_time(torch.from_numpy(batch.time_buckets)))

        cls_index = torch.arange(self.num_cls)
        cls = fuse_time(
            self.embeddings.embed_cls(cls_index),
            self.embeddings.embed_time(torch.zeros_like(cls_index)),
        )
        x = torch.cat([cls.unsqueeze(0).expand(b, -1, -1), items], dim=1)
        mask = batch.attention_mask()
        return self.encoder(x, mask), mask

    def user_vectors(self, h: Tensor, mask: Tensor) -> Tensor:
        """[B, V, D] user representation from the encoder output."""
        if self.mh_head is not None:
            return self.heads.user_vectors(self.mh_head(h, mask))
        return self.heads.user_vectors(h[:, : self.num_cls])

    def forward(
        self,
        features: CatalogFeatures,
        batch: EncodedBatch,
        plan: BatchPlan,
    ) -> ForwardOutput:
        h, mask = self.encode(features, batch, plan.masked)
        b, p, k1 = plan.match_candidates.shape
        n = batch.item_rows.shape[1]
        rows = torch.from_numpy(
            np.concatenate([plan.match_candidates.ravel(), plan.mlm_candidates.ravel()])
        )
        targets = self.embed_rows(features, rows)
        d = targets.shape[-1]
        split = b * p * k1
        return ForwardOutput(
            user_rep=self.user_vectors(h, mask),
            item_contexts=self.heads.item_contexts(h[:, self.num_cls :]),
            match_targets=targets[:split].view(b, p, k1, d),
            mlm_targets=targets[split:].view(b, n, k1, d),
            post_valid=torch.from_numpy(batch.post_valid),
            masked=torch.from_numpy(plan.masked),
        )

    @torch.no_grad()
    def encode_users(self, features: CatalogFeatures, batch: EncodedBatch) -> Tensor:
        """User representations without MLM masking (inference)."""
        h, mask = self.encode(features, batch)
        return self.user_vectors(h, mask)

    @torch.no_grad()
    def item_embeddings(self, features: CatalogFeatures, rows: np.ndarray) -> Tensor:
        """f_j of catalog rows (inference)."""
        return self.embed_rows(features, torch.from_numpy(np.asarray(rows, dtype=np.int64)))

    def blocks(self) -> Iterator[tuple[str, str, nn.Parameter]]:
        """(block, name, parameter) in declared order."""
        for name, param in self.named_parameters():
            yield parameter_block(name), name, param


# =============================================================================
# Construction and Initialization
# =============================================================================


def initialize(model: GUIMModel, seed: int) -> None:
    """
    Deterministic initialization from a numpy generator.

    Embedding tables and the MASK row: uniform(-0.02, 0.02). Weight matrices:
    Xavier uniform. Biases: 0. LayerNorm: scale 1, shift 0.
    """
    rng = np.random.default_rng(seed)
    for module in model.modules():
        for pname, param in module.named_parameters(recurse=False):
            shape = tuple(param.shape)
            if isinstance(module, nn.LayerNorm):
                values = np.ones(shape) if pname == "weight" else np.zeros(shape)
            elif isinstance(module, (nn.Embedding, MaskingLayer)):
                values = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=shape)
            elif pname.endswith("bias"):
                values = np.zeros(shape)
            else:
                fan_in, fan_out = shape[-1], shape[-2]
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                values = rng.uniform(-bound, bound, size=shape)
            with torch.no_grad():
                param.copy_(torch.from_numpy(np.asarray(values, dtype=np.float64)))


def build_model(
    config: ModelConfig,
    seed: int | None = None,
    precision: Precision = Precision.FLOAT32,
) -> GUIMModel:
    """
    Build and initialize a model for a resolved configuration.

    GUI-EDI widens d_model, the FFN, f_j's projection and the time/CLS tables
    to C·d while the category, item-id and word tables keep d_c, d_i, d_w.
    """
    model = GUIMModel(config).to(dtype_for(precision))
    initialize(model, config.seed if seed is None else seed)
    logger.debug(
        "model built",
        variant=config.variant.value,
        vectors=config.num_vectors,
        d_model=config.d_model,
        layers=config.num_layers,
    )
    return model


# =============================================================================
# Parameter Accounting
# =============================================================================


@dataclass(frozen=True)
class ParameterReport:
    """Per-component weight counts and the separately reported input tables."""

    variant: ModelVariant
    num_vectors: int
    components: OrderedDict[str, int]
    input_tables: OrderedDict[str, int]

    @property
    def total(self) -> int:
        return sum(self.components.values())

    @property
    def table_total(self) -> int:
        return sum(self.input_tables.values())


def count_parameters(config: ModelConfig) -> ParameterReport:
    """
    Analytic weights-only parameter counts.

    f_j projection (d_c+d_i+d_w)·d_model, f_t rows·d_model, f_cls
    C·d_model (one row for the widened baseline), 12·d_model²·L for the
    transformer, d_model² for each of f_u and f_o, and 4·H·d² for the
    multi-head attention layer of GUIM-MH.
    """
    cfg = EmbedderConfig.from_model_config(config)
    d_model = config.d_model
    components: OrderedDict[str, int] = OrderedDict()
    components["f_j"] = cfg.concat_width * d_model
    components["f_t"] = cfg.time_rows * d_model
    components["f_cls"] = config.num_cls * d_model
    components["transformer"] = 12 * d_model * d_model * config.num_layers
    components["f_u"] = d_model * d_model
    components["f_o"] = d_model * d_model
    if config.variant == ModelVariant.GUIM_MH:
        components["mh_head"] = 4 * config.num_vectors * config.d * config.d

    tables: OrderedDict[str, int] = OrderedDict()
    tables["category_table"] = cfg.num_categories * cfg.d_c
    tables["item_id_table"] = (cfg.top_x + 1) * cfg.d_i
    tables["word_table"] = cfg.word_vocab_size * cfg.d_w
    return ParameterReport(config.variant, config.num_vectors, components, tables)


def tally_parameters(model: GUIMModel) -> ParameterReport:
    """Weights-only counts obtained by walking the model's stored parameters."""
    counts: dict[str, int] = {}
    for block, name, param in model.blocks():
        if param.dim() < 2 or name.endswith("bias"):
            continue
        group = "transformer" if block in ("attention", "ffn") else block
        counts[group] = counts.get(group, 0) + param.numel()

    keys = [key for key in COMPONENT_ORDER if key != "mh_head" or key in counts]
    components: OrderedDict[str, int] = OrderedDict((key, counts.get(key, 0)) for key in keys)
    tables: OrderedDict[str, int] = OrderedDict((key, counts[key]) for key in INPUT_TABLES)
    config = model.config
    return ParameterReport(config.variant, config.num_vectors, components, tables)
