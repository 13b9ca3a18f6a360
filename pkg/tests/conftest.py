"""Pytest configuration and shared fixtures."""

import logging
from collections.abc import Generator

import numpy as np
import pytest

from compenkit.core.config import Settings, get_settings
from compenkit.core.schemas import ModelConfig, TrainConfig
from compenkit.services.metrics_exporter import get_metrics_exporter, reset_metrics_exporter
from compenkit.simulator import gen_setup, ideal_setup, sampling_images, simulate_dataset
from compenkit.simulator.dataset import SetupDataset

TINY_SIZE = 32


@pytest.fixture(autouse=True)
def fresh_metrics_exporter() -> Generator[None, None, None]:
    """Every test starts from an empty metrics registry."""
    reset_metrics_exporter()
    yield
    reset_metrics_exporter()


@pytest.fixture(autouse=True)
def detach_log_handlers() -> Generator[None, None, None]:
    """CLI runs point the root handler at captured streams that close after the test."""
    yield
    logging.getLogger().handlers.clear()


@pytest.fixture(scope="session")
def test_settings() -> Settings:
    """Get test settings."""
    settings = get_settings()
    settings.environment = "testing"
    return settings


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """Narrow layers so that a forward pass at 32x32 takes milliseconds."""
    return ModelConfig(k=2, refine_widths=(4, 4, 6, 6, 6, 6), panet_widths=(4, 6, 8))


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(iters=6, batch=2, lr=1e-3, log_every=2, seed=0)


@pytest.fixture(scope="session")
def tiny_dataset() -> SetupDataset:
    """Distorted 32x32 setup with 4 training and 2 test pairs."""
    scene = gen_setup(3, (TINY_SIZE, TINY_SIZE), noise_sigma=0.005)
    images = sampling_images(3, 6, (TINY_SIZE, TINY_SIZE))
    return simulate_dataset(scene, images, n_train=4, n_test=2)


@pytest.fixture(scope="session")
def ideal_dataset() -> SetupDataset:
    """Identity simulator: captures equal the quantized projector inputs."""
    scene = ideal_setup((TINY_SIZE, TINY_SIZE))
    images = sampling_images(5, 6, (TINY_SIZE, TINY_SIZE))
    return simulate_dataset(scene, images, n_train=4, n_test=2)


@pytest.fixture
def metrics_exporter():
    return get_metrics_exporter()
