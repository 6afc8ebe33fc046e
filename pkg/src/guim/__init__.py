"""
GUIM - multi-vector general user representations from purchase histories.

This package provides:
- Synthetic multi-interest corpora and a line-delimited corpus format
- A multi-CLS transformer user model with GUI-EDI and multi-head baselines
- InfoNCE pre-training (matching + MLM) with resumable checkpoints
- Finite-difference gradient verification
- Retrieval (recall@M) and profile-classification evaluation
- CLI: ``guim synth | pretrain | gradcheck | params | eval | export | sweep``

Version: 0.1.0
"""

from .capabilities.networks.model import GUIMModel, build_model, count_parameters
from .capabilities.training.trainer import Trainer, pretrain
from .core.config import GUIMConfig, get_config, load_config
from .domain.corpus import Corpus, load_corpus, save_corpus
from .domain.synthetic import generate_synthetic

__all__ = [
    # Model
    "GUIMModel",
    "build_model",
    "count_parameters",
    # Training
    "Trainer",
    "pretrain",
    # Configuration
    "GUIMConfig",
    "get_config",
    "load_config",
    # Corpus
    "Corpus",
    "load_corpus",
    "save_corpus",
    "generate_synthetic",
]

__version__ = "0.1.0"
