"""
Finite-difference verification of the analytic gradients.

Compares autograd gradients of the total loss against central differences
``(f(θ+ε) - f(θ-ε)) / 2ε`` on coordinates sampled from every parameter
block. Runs in 64-bit precision on a tiny synthetic batch whose random
choices are frozen in a BatchPlan, so the loss is a deterministic function
of the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from guim.capabilities.networks.batching import CatalogFeatures, EncodedBatch, build_batch
from guim.capabilities.networks.embedder import build_item_vocab
from guim.capabilities.networks.model import GUIMModel, build_model, resolve_model_config
from guim.capabilities.objectives.losses import total_loss
from guim.capabilities.objectives.sampling import BatchPlan, draw_plan
from guim.core.config import GUIMConfig, ModelConfig, SyntheticConfig
from guim.core.exceptions import TrainingError
from guim.core.logging import get_logger
from guim.core.models import ModelVariant, Precision
from guim.domain.corpus import purchase_counts
from guim.domain.synthetic import generate_synthetic

logger = get_logger(__name__)

NONZERO_SHARE = 0.75
GRADCHECK_MASK_PROB = 0.25
MAX_PLAN_DRAWS = 50


@dataclass
class GradcheckReport:
    """Worst relative error overall and per parameter block."""

    max_rel_error: float = 0.0
    worst_block: str = ""
    worst_name: str = ""
    per_block: dict[str, float] = field(default_factory=dict)
    samples: int = 0
    skipped: int = 0

    def record(self, block: str, name: str, error: float) -> None:
        self.samples += 1
        self.per_block[block] = max(self.per_block.get(block, 0.0), error)
        if error >= self.max_rel_error:
            self.max_rel_error = error
            self.worst_block = block
            self.worst_name = name

    def passed(self, threshold: float) -> bool:
        return self.max_rel_error < threshold


@dataclass
class GradcheckSetup:
    """A float64 model with one fixed batch and plan."""

    model: GUIMModel
    features: CatalogFeatures
    batch: EncodedBatch
    plan: BatchPlan


def gradcheck_model_config(config: GUIMConfig) -> ModelConfig:
    """Tiny GUIM configuration described by the gradcheck section."""
    g = config.gradcheck
    return ModelConfig(
        variant=ModelVariant.GUIM,
        d=g.model_dim,
        num_vectors=g.vectors,
        num_layers=g.layers,
        num_heads=2,
        d_c=g.model_dim,
        d_i=g.model_dim,
        d_w=max(g.model_dim // 2, 1),
        top_x=8,
        mask_prob=GRADCHECK_MASK_PROB,
        max_len=g.seq_len + g.vectors,
        seed=config.seed,
    )


def _gradcheck_corpus_config(config: GUIMConfig) -> SyntheticConfig:
    g = config.gradcheck
    return SyntheticConfig(
        num_users=g.batch_users,
        num_items=24,
        num_categories=8,
        num_clusters=2,
        interests_per_user=(1, 2),
        seq_length_range=(max(g.seq_len // 2, 1), g.seq_len),
        post_length_range=(1, 3),
        title_length_range=(1, 4),
        word_vocab_size=32,
        stop_words=4,
        window_days=(30, 7),
        seed=config.seed,
    )


def build_gradcheck_setup(config: GUIMConfig) -> GradcheckSetup:
    """
    Build the tiny corpus, float64 model, batch and plan for grad_check.

    The plan is redrawn until at least one position is masked so the MASK
    row receives a gradient.

    Raises:
        TrainingError: If no plan with a masked position could be drawn
    """
    corpus = generate_synthetic(_gradcheck_corpus_config(config))
    model_config = resolve_model_config(gradcheck_model_config(config), corpus)
    vocab = build_item_vocab(corpus.catalog, purchase_counts(corpus.sequences), model_config.top_x)
    features = CatalogFeatures.build(corpus.catalog, vocab)
    model = build_model(model_config, precision=Precision.FLOAT64)
    batch = build_batch(corpus.sequences, features, model_config)

    rng = np.random.default_rng(config.seed)
    for _ in range(MAX_PLAN_DRAWS):
        plan = draw_plan(batch, model_config.mask_prob, config.gradcheck.num_negatives, rng)
        if plan.masked.any():
            return GradcheckSetup(model, features, batch, plan)
    raise TrainingError("Could not draw a gradcheck plan with a masked position")


# =============================================================================
# Finite Differences
# =============================================================================


@dataclass
class _Block:
    name: str
    params: list[tuple[str, nn.Parameter]]
    grads: list[np.ndarray]
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def locate(self, flat: int) -> tuple[str, nn.Parameter, int, float]:
        """Parameter, local index and analytic gradient of a block coordinate."""
        i = int(np.searchsorted(self.offsets, flat, side="right")) - 1
        local = flat - int(self.offsets[i])
        name, param = self.params[i]
        return name, param, local, float(self.grads[i][local])

    def nonzero(self) -> np.ndarray:
        flat = np.concatenate([g for g in self.grads])
        return np.flatnonzero(flat != 0.0)


def _blocks(model: GUIMModel) -> list[_Block]:
    grouped: dict[str, list[tuple[str, nn.Parameter]]] = {}
    for block, name, param in model.blocks():
        grouped.setdefault(block, []).append((name, param))
    blocks = []
    for block, params in grouped.items():
        grads = [
            np.zeros(p.numel()) if p.grad is None else p.grad.detach().reshape(-1).numpy().copy()
            for _, p in params
        ]
        offsets = np.concatenate([[0], np.cumsum([p.numel() for _, p in params])])
        blocks.append(_Block(block, params, grads, offsets))
    return blocks


def _allot(sizes: list[int], samples: int) -> list[int]:
    """Spread ``samples`` over blocks as evenly as their sizes allow."""
    allotment = [0] * len(sizes)
    remaining = samples
    order = sorted(range(len(sizes)), key=lambda i: sizes[i])
    for rank, i in enumerate(order):
        share = remaining // (len(sizes) - rank)
        allotment[i] = min(share, sizes[i])
        remaining -= allotment[i]
    return allotment


def _pick(block: _Block, count: int, rng: np.random.Generator) -> list[int]:
    """Coordinates to test: mostly nonzero-gradient ones, the rest uniform."""
    nonzero = block.nonzero()
    n_nz = min(int(round(NONZERO_SHARE * count)), nonzero.size)
    chosen = rng.choice(nonzero, size=n_nz, replace=False) if n_nz else np.zeros(0, np.int64)
    rest = np.setdiff1d(np.arange(block.size), chosen)
    extra = rng.choice(rest, size=min(count - n_nz, rest.size), replace=False)
    picked = np.concatenate([chosen, extra]).astype(np.int64)
    return picked.tolist()


def _evaluate(setup: GradcheckSetup, alpha: float) -> tuple[float, Tensor]:
    with torch.no_grad():
        losses = total_loss(setup.model(setup.features, setup.batch, setup.plan), alpha)
    return float(losses.total), losses.match_argmax


def grad_check(
    setup: GradcheckSetup,
    epsilon: float = 1e-5,
    samples: int = 200,
    abs_floor: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> GradcheckReport:
    """
    Compare analytic gradients with central differences.

    Coordinates are allotted evenly over parameter blocks (tables, attention,
    FFN, LayerNorm, projections, CLS, MASK). The relative error of one
    coordinate is ``|a - n| / max(|a|, |n|, abs_floor)``. A coordinate whose
    perturbation flips a max-score argmax sits on a nondifferentiable
    boundary; it is skipped and another one from the same block is drawn.

    Args:
        setup: Float64 model, batch and frozen plan
        epsilon: Finite-difference step
        samples: Coordinates to check in total
        abs_floor: Denominator floor for near-zero gradients
        rng: Generator choosing coordinates

    Returns:
        GradcheckReport with the worst error and its block
    """
    model = setup.model
    alpha = model.config.alpha
    rng = rng or np.random.default_rng(0)
    valid = torch.from_numpy(setup.batch.post_valid)

    model.zero_grad(set_to_none=True)
    losses = total_loss(model(setup.features, setup.batch, setup.plan), alpha)
    losses.total.backward()
    base_argmax = losses.match_argmax.detach()

    blocks = _blocks(model)
    report = GradcheckReport()
    for block, count in zip(blocks, _allot([b.size for b in blocks], samples), strict=True):
        queue = _pick(block, count, rng)
        tried = set(queue)
        checked = 0
        while queue and checked < count:
            flat = queue.pop(0)
            name, param, local, analytic = block.locate(flat)
            view = param.data.view(-1)
            original = float(view[local])

            view[local] = original + epsilon
            plus, argmax_plus = _evaluate(setup, alpha)
            view[local] = original - epsilon
            minus, argmax_minus = _evaluate(setup, alpha)
            view[local] = original

            flipped = (argmax_plus != base_argmax) | (argmax_minus != base_argmax)
            if bool((flipped & valid.unsqueeze(-1)).any()):
                report.skipped += 1
                untried = np.setdiff1d(np.arange(block.size), np.fromiter(tried, np.int64))
                if untried.size:
                    replacement = int(rng.choice(untried))
                    tried.add(replacement)
                    queue.append(replacement)
                continue

            numeric = (plus - minus) / (2.0 * epsilon)
            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), abs_floor)
            report.record(block.name, name, error)
            checked += 1

    model.zero_grad(set_to_none=True)
    logger.info(
        "gradient check finished",
        max_rel_error=report.max_rel_error,
        worst_block=report.worst_block,
        samples=report.samples,
        skipped=report.skipped,
    )
    return report


def run_gradcheck(config: GUIMConfig) -> GradcheckReport:
    """Build the tiny setup from ``config`` and check it."""
    g = config.gradcheck
    setup = build_gradcheck_setup(config)
    return grad_check(
        setup,
        epsilon=g.epsilon,
        samples=g.samples,
        abs_floor=g.abs_floor,
        rng=np.random.default_rng([config.seed, 1]),
    )
