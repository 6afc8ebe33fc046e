"""Fixtures for the training tests."""

from dataclasses import dataclass

import pytest

from guim.capabilities.networks.batching import CatalogFeatures
from guim.capabilities.networks.embedder import ItemVocab
from guim.capabilities.networks.model import build_model
from guim.capabilities.training.trainer import Trainer, prepare_training
from guim.core.config import ModelConfig, TrainConfig
from guim.core.models import Precision
from guim.domain.corpus import Corpus, InteractionSequence


@dataclass
class TrainingSetup:
    model_config: ModelConfig
    vocab: ItemVocab
    features: CatalogFeatures
    train: list[InteractionSequence]
    validation: list[InteractionSequence]

    def trainer(self, config: TrainConfig) -> Trainer:
        model = build_model(self.model_config, precision=Precision.FLOAT64)
        return Trainer(model=model, features=self.features, vocab=self.vocab, config=config)


@pytest.fixture
def training_setup(
    tiny_corpus: Corpus, tiny_model_config: ModelConfig, tiny_train_config: TrainConfig
) -> TrainingSetup:
    """36 training and 4 validation users of the tiny corpus."""
    return TrainingSetup(*prepare_training(tiny_corpus, tiny_model_config, tiny_train_config))
