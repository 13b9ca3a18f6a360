"""Configuration management using Pydantic Settings.

Two layers: ``Settings`` holds process-level knobs read from the environment
(``COMPENKIT_*`` variables or a ``.env`` file); ``RunConfig`` is the strict,
file-backed description of one reproducible run and is the single source of
truth the CLI reads with ``--config``.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from compenkit import __version__
from compenkit.core.schemas import ModelConfig, SimulatorConfig, TrainConfig


class Settings(BaseSettings):
    """Process settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="COMPENKIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "compenkit"
    app_version: str = __version__
    environment: Literal["development", "testing", "production"] = "development"
    log_level: str = "INFO"

    # Execution
    threads: Optional[int] = Field(default=None, ge=1, description="BLAS thread limit")
    default_seed: int = 7


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


class RunConfig(BaseModel):
    """File-backed configuration of one run; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    seed: int = Field(7, description="Seed for the scene, sampling images and training")
    simulator: SimulatorConfig = Field(default_factory=SimulatorConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=lambda: TrainConfig(iters=300))
    dataset_dir: Optional[Path] = Field(None, description="Setup directory")
    checkpoint: Optional[Path] = Field(None, description="Model checkpoint path")
    output_dir: Optional[Path] = Field(None, description="Directory for reports and images")


def load_run_config(path: Path) -> RunConfig:
    """
    Load and validate a run configuration file.

    Args:
        path: JSON file written by ``save_run_config`` or by hand

    Returns:
        Validated RunConfig

    Raises:
        pydantic.ValidationError: On unknown keys or out-of-range values
        OSError: If the file cannot be read
    """
    text = Path(path).read_text(encoding="utf-8")
    return RunConfig.model_validate_json(text)


def save_run_config(config: RunConfig, path: Path) -> None:
    """Write a run configuration as indented JSON."""
    payload = json.loads(config.model_dump_json())
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
