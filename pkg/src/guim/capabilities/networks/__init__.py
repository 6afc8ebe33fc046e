"""Embedding layer, transformer encoder and the assembled user models."""

from .batching import CatalogFeatures, EncodedBatch, build_batch
from .embedder import EmbeddingLayer, ItemVocab, build_item_vocab
from .encoder import TransformerEncoder
from .model import ForwardOutput, GUIMModel, build_model, count_parameters, tally_parameters

__all__ = [
    "CatalogFeatures",
    "EncodedBatch",
    "build_batch",
    "EmbeddingLayer",
    "ItemVocab",
    "build_item_vocab",
    "TransformerEncoder",
    "ForwardOutput",
    "GUIMModel",
    "build_model",
    "count_parameters",
    "tally_parameters",
]
