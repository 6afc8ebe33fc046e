"""
GUIM Capabilities Layer.

- networks: Embedder, encoder and model assembly
- objectives: Scores, negative sampling and InfoNCE losses
- training: Trainer, checkpoints and gradient checks
- evaluation: Inference, retrieval index, CMP and CPP
"""

__all__ = ["networks", "objectives", "training", "evaluation"]
