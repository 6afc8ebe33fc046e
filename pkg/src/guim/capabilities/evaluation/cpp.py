"""
Consumer profile prediction (CPP).

A three-layer feed-forward classifier reads the concatenated user vectors
(C·d features) as its only input and is scored by held-out accuracy.
Synthetic corpora carry planted labels derived from each user's latent
interest clusters.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import torch
from numpy.typing import ArrayLike
from torch import Tensor, nn

from guim.capabilities.evaluation.inference import infer_embeddings
from guim.capabilities.networks.batching import CatalogFeatures
from guim.capabilities.networks.embedder import gelu
from guim.capabilities.networks.model import GUIMModel
from guim.core.config import EvalConfig
from guim.core.exceptions import EvaluationError, SingleClassError
from guim.core.logging import get_logger
from guim.domain.corpus import InteractionSequence

logger = get_logger(__name__)

CPP_TASKS = ("dominant_cluster", "dominant_parity")
SPLIT_STREAM = 0xC99


class ProfileClassifier(nn.Module):
    """Linear-GELU-Linear-GELU-Linear classifier."""

    def __init__(self, in_features: int, hidden: tuple[int, int], num_classes: int) -> None:
        super().__init__()
        self.hidden1 = nn.Linear(in_features, hidden[0])
        self.hidden2 = nn.Linear(hidden[0], hidden[1])
        self.output = nn.Linear(hidden[1], num_classes)

    def forward(self, x: Tensor) -> Tensor:
        return self.output(gelu(self.hidden2(gelu(self.hidden1(x)))))


def planted_labels(
    profiles: Mapping[int, Mapping[str, Any]],
    user_ids: Sequence[int],
    task: str = "dominant_cluster",
) -> np.ndarray:
    """
    Labels of a planted synthetic profile task.

    dominant_cluster: the user's heaviest interest cluster.
    dominant_parity: that cluster's parity.

    Raises:
        EvaluationError: If the task is unknown or a profile is missing
    """
    if task not in CPP_TASKS:
        raise EvaluationError(f"Unknown CPP task {task!r}", "UNKNOWN_TASK", {"tasks": CPP_TASKS})
    labels = []
    for user in user_ids:
        if user not in profiles:
            raise EvaluationError(f"No profile for user {user}", "MISSING_PROFILE")
        cluster = int(profiles[user]["dominant_cluster"])
        labels.append(cluster if task == "dominant_cluster" else cluster % 2)
    return np.asarray(labels, dtype=np.int64)


@dataclass(frozen=True)
class CppResult:
    """Held-out accuracy of one profile classifier."""

    task: str
    accuracy: float
    input_width: int
    num_classes: int
    train_size: int
    test_size: int


def split_train_test(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random user split; both parts are nonempty when n >= 2."""
    order = np.random.default_rng([seed, SPLIT_STREAM]).permutation(n)
    n_test = int(round(n * test_fraction))
    if n >= 2:
        n_test = min(max(n_test, 1), n - 1)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def _standardize(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (train - mean) / std, (test - mean) / std


def train_cpp_classifier(
    user_vectors: ArrayLike,
    labels: ArrayLike,
    config: EvalConfig,
    seed: int = 0,
    task: str = "dominant_cluster",
    allow_constant: bool = False,
) -> CppResult:
    """
    Train the profile classifier and report held-out accuracy.

    Args:
        user_vectors: [U, V, D] user representations (or [U, F] features)
        labels: [U] integer labels
        config: Hidden widths, epochs, learning rate and test fraction
        seed: Split and initialization seed
        task: Task name recorded in the result
        allow_constant: Score a single-class training set by the constant
            prediction instead of raising

    Raises:
        SingleClassError: If the training labels hold one class
    """
    x = np.asarray(user_vectors, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != y.size:
        raise EvaluationError("One label per user is required", "LABEL_COUNT")
    classes, y_index = np.unique(y, return_inverse=True)
    train_idx, test_idx = split_train_test(y.size, config.test_fraction, seed)

    train_classes = np.unique(y_index[train_idx])
    if train_classes.size < 2:
        if not allow_constant:
            raise SingleClassError(int(classes[train_classes[0]]))
        accuracy = float(np.mean(y_index[test_idx] == train_classes[0]))
        return CppResult(task, accuracy, x.shape[1], int(classes.size), train_idx.size, test_idx.size)

    x_train, x_test = _standardize(x[train_idx], x[test_idx])
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = ProfileClassifier(x.shape[1], config.cpp_hidden, int(classes.size)).double()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.cpp_learning_rate)
    features = torch.from_numpy(x_train)
    targets = torch.from_numpy(y_index[train_idx])
    loss_fn = nn.CrossEntropyLoss()

    model.train()
    for _ in range(config.cpp_epochs):
        optimizer.zero_grad(set_to_none=True)
        loss = loss_fn(model(features), targets)
        loss.backward()
        optimizer.step()

    model.eval()
    with torch.no_grad():
        predicted = model(torch.from_numpy(x_test)).argmax(dim=-1).numpy()
    accuracy = float(np.mean(predicted == y_index[test_idx]))
    logger.info(
        "cpp classifier trained",
        task=task,
        accuracy=accuracy,
        input_width=x.shape[1],
        final_loss=float(loss),
    )
    return CppResult(task, accuracy, x.shape[1], int(classes.size), train_idx.size, test_idx.size)


def run_cpp(
    model: GUIMModel,
    features: CatalogFeatures,
    sequences: Sequence[InteractionSequence],
    profiles: Mapping[int, Mapping[str, Any]],
    config: EvalConfig,
    seed: int = 0,
) -> CppResult:
    """Encode users from their pre-cutoff history and train the classifier on them."""
    inferred = infer_embeddings(model, features, sequences, batch_size=config.inference_batch_size)
    labels = planted_labels(profiles, inferred.user_ids, config.cpp_task)
    return train_cpp_classifier(inferred.vectors, labels, config, seed=seed, task=config.cpp_task)
