"""Pre-training loop, checkpoints and finite-difference gradient checks."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradcheckReport, grad_check, run_gradcheck
from .trainer import Trainer, pretrain, train_step

__all__ = [
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "GradcheckReport",
    "grad_check",
    "run_gradcheck",
    "Trainer",
    "pretrain",
    "train_step",
]
