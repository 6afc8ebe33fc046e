"""
Mini-batch pre-training.

- train_step: one forward, backward and Adam update
- Trainer: shuffled epochs, validation, early stopping, resumable state
- pretrain: user split, vocabulary, model construction and the epoch loop
- MetricsLogWriter: JSON-lines metrics log, one line per logging step
"""

from __future__ import annotations

import json
import time
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from types import TracebackType
from typing import Any, TextIO

import numpy as np
import torch

from guim.capabilities.networks.batching import CatalogFeatures, build_batch
from guim.capabilities.networks.embedder import ItemVocab, build_item_vocab
from guim.capabilities.networks.model import (
    GUIMModel,
    build_model,
    parameter_block,
    resolve_model_config,
)
from guim.capabilities.objectives.losses import LossBreakdown, total_loss
from guim.capabilities.objectives.sampling import draw_plan
from guim.capabilities.training.checkpoint import (
    Checkpoint,
    collect_arrays,
    load_checkpoint,
    restore_model,
    restore_optimizer,
    save_checkpoint,
)
from guim.core.config import ModelConfig, TrainConfig
from guim.core.exceptions import CorpusError, NonFiniteError
from guim.core.logging import get_logger, logging_context
from guim.core.models import EpochSummary, StepMetrics
from guim.domain.corpus import Corpus, InteractionSequence, purchase_counts, split_users

logger = get_logger(__name__)

VALIDATION_STREAM = 7


# =============================================================================
# Metrics Log
# =============================================================================


class MetricsLogWriter:
    """Append StepMetrics as JSON lines; usable as a context manager."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._file: TextIO | None = None

    def __enter__(self) -> MetricsLogWriter:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "a", encoding="utf-8", newline="\n")
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()

    def write(self, metrics: StepMetrics) -> None:
        if self._file is None:
            self.__enter__()
        assert self._file is not None
        self._file.write(json.dumps(metrics.to_dict(), sort_keys=True) + "\n")
        self._file.flush()

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


def read_metrics_log(path: Path) -> list[StepMetrics]:
    """Read a metrics log back into StepMetrics records."""
    with open(path, encoding="utf-8") as f:
        return [StepMetrics(**json.loads(line)) for line in f if line.strip()]


# =============================================================================
# Single Step
# =============================================================================


def check_finite(model: GUIMModel, losses: LossBreakdown, step: int) -> None:
    """
    Raise NonFiniteError naming the first block with a non-finite value.

    Checks the loss terms, then every gradient, then every parameter.
    """
    for name, value in (("matching_loss", losses.matching), ("mlm_loss", losses.mlm)):
        if not torch.isfinite(value).all():
            raise NonFiniteError(name, step)
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NonFiniteError(parameter_block(name), step)
    for name, param in model.named_parameters():
        if not torch.isfinite(param).all():
            raise NonFiniteError(parameter_block(name), step)


def train_step(
    model: GUIMModel,
    optimizer: torch.optim.Optimizer,
    features: CatalogFeatures,
    sequences: Sequence[InteractionSequence],
    config: TrainConfig,
    rng: np.random.Generator,
    step: int = 0,
) -> LossBreakdown:
    """
    One optimisation step on a mini-batch.

    Draws the batch plan from ``rng``, computes the total loss, backpropagates
    and applies one optimizer update.

    Raises:
        NonFiniteError: If a loss or gradient is not finite
    """
    model.train()
    batch = build_batch(sequences, features, model.config)
    plan = draw_plan(batch, model.config.mask_prob, config.negatives, rng)

    optimizer.zero_grad(set_to_none=True)
    losses = total_loss(model(features, batch, plan), model.config.alpha)
    if not torch.isfinite(losses.total):
        check_finite(model, losses, step)
        raise NonFiniteError("total_loss", step)
    losses.total.backward()
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NonFiniteError(parameter_block(name), step)
    if config.grad_clip_norm is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
    optimizer.step()
    return losses


def make_optimizer(model: GUIMModel, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )


# =============================================================================
# Trainer
# =============================================================================


@dataclass
class EarlyStopState:
    """Best validation loss seen and epochs since it improved."""

    best_loss: float = float("inf")
    bad_epochs: int = 0
    stopped: bool = False

    def update(self, loss: float, patience: int) -> bool:
        """Record an epoch's validation loss; return True if it improved."""
        improved = loss < self.best_loss
        if improved:
            self.best_loss = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            self.stopped = self.bad_epochs >= patience
        return improved

    def to_dict(self) -> dict[str, Any]:
        best = None if self.best_loss == float("inf") else self.best_loss
        return {"best_loss": best, "bad_epochs": self.bad_epochs, "stopped": self.stopped}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EarlyStopState:
        best = data.get("best_loss")
        return cls(
            best_loss=float("inf") if best is None else float(best),
            bad_epochs=int(data.get("bad_epochs", 0)),
            stopped=bool(data.get("stopped", False)),
        )


@dataclass
class Trainer:
    """
    Epoch loop over shuffled user batches with validation and early stopping.

    Batch order of epoch e comes from ``default_rng([seed, e])``; MLM masks
    and negatives come from one generator seeded with ``seed`` whose state is
    checkpointed, so a resumed run continues the same trajectory.
    """

    model: GUIMModel
    features: CatalogFeatures
    vocab: ItemVocab
    config: TrainConfig
    metrics: MetricsLogWriter | None = None
    step: int = 0
    epoch: int = 0
    early_stop: EarlyStopState = field(default_factory=EarlyStopState)
    history: list[StepMetrics] = field(default_factory=list)
    summaries: list[EpochSummary] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.optimizer = make_optimizer(self.model, self.config)
        self.rng = np.random.default_rng(self.config.seed)

    def batches(
        self, sequences: Sequence[InteractionSequence], epoch: int
    ) -> Iterator[list[InteractionSequence]]:
        """Shuffled mini-batches; a trailing batch of fewer than 2 users is dropped."""
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(sequences))
        size = self.config.batch_size
        for start in range(0, len(order), size):
            chunk = [sequences[i] for i in order[start : start + size]]
            if len(chunk) >= 2:
                yield chunk

    def steps_per_epoch(self, sequences: Sequence[InteractionSequence]) -> int:
        full, rest = divmod(len(sequences), self.config.batch_size)
        return full + (1 if rest >= 2 else 0)

    @torch.no_grad()
    def validation_loss(self, sequences: Sequence[InteractionSequence], epoch: int) -> float:
        """Mean total loss per validation user, with a fixed per-epoch generator."""
        if len(sequences) < 2:
            return float("nan")
        self.model.eval()
        rng = np.random.default_rng([self.config.seed, epoch, VALIDATION_STREAM])
        total = 0.0
        users = 0
        size = self.config.batch_size
        for start in range(0, len(sequences), size):
            chunk = list(sequences[start : start + size])
            if len(chunk) < 2:
                continue
            batch = build_batch(chunk, self.features, self.model.config)
            plan = draw_plan(batch, self.model.config.mask_prob, self.config.negatives, rng)
            losses = total_loss(self.model(self.features, batch, plan), self.model.config.alpha)
            total += float(losses.total)
            users += len(chunk)
        return total / max(users, 1)

    def fit(
        self,
        train: Sequence[InteractionSequence],
        validation: Sequence[InteractionSequence],
        max_steps: int | None = None,
    ) -> list[EpochSummary]:
        """
        Train until the epoch budget, early stopping or ``max_steps``.

        Resumes mid-epoch from ``self.step`` and ``self.epoch``.
        """
        per_epoch = self.steps_per_epoch(train)
        while self.epoch < self.config.epochs and not self.early_stop.stopped:
            epoch = self.epoch
            done = self.step - epoch * per_epoch
            epoch_loss = 0.0
            epoch_steps = 0
            with logging_context(epoch=epoch):
                for index, chunk in enumerate(self.batches(train, epoch)):
                    if index < done:
                        continue
                    if max_steps is not None and self.step >= max_steps:
                        return self.summaries
                    started = time.perf_counter()
                    losses = train_step(
                        self.model, self.optimizer, self.features, chunk, self.config, self.rng, self.step
                    )
                    matching, mlm, total = losses.values()
                    record = StepMetrics(
                        self.step, epoch, matching, mlm, total, time.perf_counter() - started
                    )
                    self.history.append(record)
                    epoch_loss += total
                    epoch_steps += 1
                    if self.metrics is not None and self.step % self.config.log_every == 0:
                        self.metrics.write(record)
                    self.step += 1
                val = self.validation_loss(validation, epoch)
                improved = (
                    self.early_stop.update(val, self.config.patience) if np.isfinite(val) else False
                )
                summary = EpochSummary(
                    epoch=epoch,
                    train_loss=epoch_loss / max(epoch_steps, 1),
                    validation_loss=val,
                    steps=epoch_steps,
                    improved=improved,
                )
                self.summaries.append(summary)
                logger.info(
                    "epoch finished",
                    train_loss=summary.train_loss,
                    validation_loss=val,
                    improved=improved,
                )
            self.epoch += 1
        if self.early_stop.stopped:
            logger.info("early stop", epoch=self.epoch, best_loss=self.early_stop.best_loss)
        return self.summaries

    # -------------------------------------------------------------------------
    # Checkpointing
    # -------------------------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        arrays, adam_step = collect_arrays(self.model, self.optimizer, self.vocab)
        return Checkpoint(
            model_config=self.model.config.model_dump(mode="json"),
            train_config=self.config.model_dump(mode="json"),
            step=self.step,
            epoch=self.epoch,
            early_stop=self.early_stop.to_dict(),
            rng_state=self.rng.bit_generator.state,
            adam_step=adam_step,
            arrays=arrays,
        )

    def save(self, path: Path) -> None:
        save_checkpoint(path, self.checkpoint())

    @classmethod
    def resume(
        cls,
        path: Path,
        features: CatalogFeatures | None = None,
        corpus: Corpus | None = None,
        config: TrainConfig | None = None,
        metrics: MetricsLogWriter | None = None,
    ) -> Trainer:
        """
        Rebuild a trainer from a checkpoint, ready to continue ``fit``.

        ``config`` may extend the epoch budget; other settings should match
        the saved run for bit-exact continuation.
        """
        ckpt = load_checkpoint(path)
        model = restore_model(ckpt)
        vocab = ckpt.vocab()
        if features is None:
            if corpus is None:
                raise CorpusError("Resuming needs the catalog or prebuilt features")
            features = CatalogFeatures.build(corpus.catalog, vocab)
        train_config = config or TrainConfig.model_validate(ckpt.train_config)
        trainer = cls(
            model=model,
            features=features,
            vocab=vocab,
            config=train_config,
            metrics=metrics,
            step=ckpt.step,
            epoch=ckpt.epoch,
            early_stop=EarlyStopState.from_dict(ckpt.early_stop),
        )
        restore_optimizer(trainer.optimizer, model, ckpt)
        if ckpt.rng_state is not None:
            trainer.rng.bit_generator.state = ckpt.rng_state
        return trainer


# =============================================================================
# Pre-training Entry Point
# =============================================================================


@dataclass
class PretrainResult:
    """Outcome of a pre-training run."""

    trainer: Trainer
    train_users: list[int]
    validation_users: list[int]

    @property
    def model(self) -> GUIMModel:
        return self.trainer.model

    @property
    def summaries(self) -> list[EpochSummary]:
        return self.trainer.summaries


def prepare_training(
    corpus: Corpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> tuple[ModelConfig, ItemVocab, CatalogFeatures, list[InteractionSequence], list[InteractionSequence]]:
    """Split users, build the vocabulary from training purchases and resolve the model config."""
    if not corpus.sequences:
        raise CorpusError("Cannot pre-train on an empty corpus")
    train, validation = split_users(
        corpus.sequences, 1.0 - train_config.validation_ratio, train_config.seed
    )
    resolved = resolve_model_config(model_config, corpus)
    vocab = build_item_vocab(corpus.catalog, purchase_counts(train), resolved.top_x)
    features = CatalogFeatures.build(corpus.catalog, vocab)
    return resolved, vocab, features, train, validation


def pretrain(
    corpus: Corpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    *,
    checkpoint_path: Path | None = None,
    metrics_path: Path | None = None,
) -> PretrainResult:
    """
    Pre-train a model on a corpus.

    Users are split 9:1 (by default) into training and validation sets; the
    item vocabulary is built from training purchases. With zero epochs the
    initial parameters are returned.

    Raises:
        CorpusError: If the corpus is empty
    """
    resolved, vocab, features, train, validation = prepare_training(
        corpus, model_config, train_config
    )
    model = build_model(resolved, precision=train_config.precision)
    metrics = MetricsLogWriter(metrics_path) if metrics_path is not None else None
    trainer = Trainer(model=model, features=features, vocab=vocab, config=train_config, metrics=metrics)

    with logging_context(variant=resolved.variant.value, vectors=resolved.num_vectors):
        logger.info(
            "pre-training started",
            train_users=len(train),
            validation_users=len(validation),
            epochs=train_config.epochs,
        )
        try:
            trainer.fit(train, validation)
        finally:
            if metrics is not None:
                metrics.close()
        if checkpoint_path is not None:
            trainer.save(checkpoint_path)

    return PretrainResult(
        trainer=trainer,
        train_users=[s.user_id for s in train],
        validation_users=[s.user_id for s in validation],
    )
