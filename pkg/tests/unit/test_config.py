"""Test configuration management."""

import pytest
from pydantic import ValidationError

from compenkit import __version__
from compenkit.core.config import (
    RunConfig,
    Settings,
    get_settings,
    load_run_config,
    save_run_config,
)
from compenkit.core.schemas import ModelConfig, SimulatorConfig, TrainConfig


def test_settings_creation():
    """Test that settings can be created with defaults."""
    settings = Settings()

    assert settings.app_name == "compenkit"
    assert settings.app_version == __version__
    assert settings.environment in ["development", "testing", "production"]


def test_settings_from_environment(monkeypatch):
    """Test that COMPENKIT_* variables override the defaults."""
    monkeypatch.setenv("COMPENKIT_THREADS", "2")
    monkeypatch.setenv("COMPENKIT_LOG_LEVEL", "DEBUG")

    settings = Settings()

    assert settings.threads == 2
    assert settings.log_level == "DEBUG"


def test_thread_limit_must_be_positive(monkeypatch):
    monkeypatch.setenv("COMPENKIT_THREADS", "0")
    with pytest.raises(ValidationError):
        Settings()


def test_get_settings_cached():
    """Test that get_settings returns cached instance."""
    settings1 = get_settings()
    settings2 = get_settings()

    assert settings1 is settings2


def test_run_config_defaults():
    """Test the default run configuration."""
    config = RunConfig()

    assert config.seed == 7
    assert config.simulator.size == 128
    assert config.model.k == 2
    assert config.train.iters == 300
    assert config.train.loss_terms == ["l1", "l2", "ssim"]


def test_run_config_round_trip(tmp_path):
    """Test that a saved run configuration loads back unchanged."""
    config = RunConfig(
        seed=3,
        simulator=SimulatorConfig(size=64, n_train=8, n_test=2, noiseless=True),
        model=ModelConfig(k=4, use_p2=False),
        train=TrainConfig(iters=50, loss_terms=["l1", "ssim"]),
        dataset_dir=tmp_path / "setup",
    )
    path = tmp_path / "run.json"
    save_run_config(config, path)

    assert load_run_config(path) == config


def test_run_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"seed": 1, "train": {"iters": 5, "momentum": 0.9}}')

    with pytest.raises(ValidationError):
        load_run_config(path)


@pytest.mark.parametrize(
    "section,values",
    [
        ("simulator", {"size": 16}),
        ("simulator", {"noise_sigma": 0.5}),
        ("train", {"loss_terms": []}),
        ("train", {"loss_terms": ["l1", "l1"]}),
        ("train", {"loss_terms": ["l3"]}),
        ("train", {"batch": 0}),
        ("model", {"k": 0}),
    ],
)
def test_out_of_range_values_rejected(section, values):
    with pytest.raises(ValidationError):
        RunConfig.model_validate({section: values})


def test_assignment_is_validated():
    config = RunConfig()
    with pytest.raises(ValidationError):
        config.seed = "not a seed"
