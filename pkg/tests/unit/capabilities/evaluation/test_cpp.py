"""Tests for guim.capabilities.evaluation.cpp module."""

import numpy as np
import pytest

from guim.capabilities.evaluation.cpp import (
    planted_labels,
    run_cpp,
    split_train_test,
    train_cpp_classifier,
)
from guim.core.config import EvalConfig
from guim.core.exceptions import EvaluationError, SingleClassError


@pytest.fixture
def fast_config() -> EvalConfig:
    return EvalConfig(protocol="CPP", cpp_hidden=(16, 8), cpp_epochs=200, cpp_learning_rate=1e-2)


class TestPlantedLabels:
    """Test cases for synthetic profile labels."""

    def test_tasks(self) -> None:
        """Test the dominant cluster and its parity."""
        profiles = {1: {"dominant_cluster": 3}, 2: {"dominant_cluster": 2}}
        assert planted_labels(profiles, [2, 1]).tolist() == [2, 3]
        assert planted_labels(profiles, [2, 1], "dominant_parity").tolist() == [0, 1]

    def test_missing_profile(self) -> None:
        """Test that every user needs a profile."""
        with pytest.raises(EvaluationError):
            planted_labels({}, [1])

    def test_unknown_task(self) -> None:
        """Test that unknown tasks are refused."""
        with pytest.raises(EvaluationError):
            planted_labels({1: {"dominant_cluster": 0}}, [1], "age")


class TestSplit:
    """Test cases for the held-out split."""

    def test_disjoint_and_complete(self) -> None:
        """Test that train and test cover every user once."""
        train, test = split_train_test(50, 0.2, 0)
        assert test.size == 10
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(50))

    def test_both_parts_nonempty(self) -> None:
        """Test that two users always split one and one."""
        train, test = split_train_test(2, 0.01, 0)
        assert (train.size, test.size) == (1, 1)


class TestClassifier:
    """Test cases for the profile classifier."""

    def test_input_width(self, fast_config: EvalConfig) -> None:
        """Test that the classifier reads all C d features."""
        rng = np.random.default_rng(0)
        vectors = rng.normal(size=(40, 3, 4))
        labels = (vectors[:, 0, 0] > 0).astype(np.int64)
        result = train_cpp_classifier(vectors, labels, fast_config)
        assert result.input_width == 12
        assert result.num_classes == 2
        assert result.train_size + result.test_size == 40

    def test_learns_separable_labels(self, fast_config: EvalConfig) -> None:
        """Test near-perfect accuracy on linearly separable data."""
        rng = np.random.default_rng(1)
        labels = np.repeat([0, 1], 50)
        vectors = rng.normal(size=(100, 2, 4)) * 0.1
        vectors[:, 1, 2] += np.where(labels == 1, 3.0, -3.0)
        result = train_cpp_classifier(vectors, labels, fast_config)
        assert result.accuracy >= 0.9

    def test_single_class(self, fast_config: EvalConfig) -> None:
        """Test that constant labels are refused by default."""
        vectors = np.zeros((10, 1, 4))
        with pytest.raises(SingleClassError):
            train_cpp_classifier(vectors, np.full(10, 3), fast_config)

    def test_single_class_constant_prediction(self, fast_config: EvalConfig) -> None:
        """Test that the constant predictor scores perfectly on constant labels."""
        vectors = np.zeros((10, 1, 4))
        result = train_cpp_classifier(vectors, np.full(10, 3), fast_config, allow_constant=True)
        assert result.accuracy == 1.0

    def test_label_count(self, fast_config: EvalConfig) -> None:
        """Test that users and labels must pair up."""
        with pytest.raises(EvaluationError):
            train_cpp_classifier(np.zeros((4, 1, 2)), [0, 1], fast_config)

    def test_deterministic(self, fast_config: EvalConfig) -> None:
        """Test that one seed gives one accuracy."""
        rng = np.random.default_rng(2)
        vectors = rng.normal(size=(30, 2, 3))
        labels = rng.integers(0, 3, size=30)
        a = train_cpp_classifier(vectors, labels, fast_config, seed=4)
        b = train_cpp_classifier(vectors, labels, fast_config, seed=4)
        assert a == b


class TestRunCpp:
    """Test cases for CPP on the tiny model."""

    def test_planted_task(self, tiny_model, tiny_features, tiny_corpus, fast_config) -> None:
        """Test an end-to-end run on the synthetic profiles."""
        result = run_cpp(
            tiny_model, tiny_features, tiny_corpus.sequences, tiny_corpus.profiles, fast_config
        )
        assert result.task == "dominant_cluster"
        assert result.input_width == 16
        assert 0.0 <= result.accuracy <= 1.0
