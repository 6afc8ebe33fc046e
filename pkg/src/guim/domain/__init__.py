"""
GUIM Domain Layer.

Interaction corpora: records, cutoff partitioning, time buckets, the
on-disk format and the synthetic multi-interest generator.
"""

from .corpus import (
    Corpus,
    Interaction,
    InteractionSequence,
    ItemRecord,
    day_bucket,
    load_corpus,
    save_corpus,
    split_at_cutoff,
)
from .synthetic import generate_synthetic

__all__ = [
    "Corpus",
    "Interaction",
    "InteractionSequence",
    "ItemRecord",
    "day_bucket",
    "split_at_cutoff",
    "load_corpus",
    "save_corpus",
    "generate_synthetic",
]
