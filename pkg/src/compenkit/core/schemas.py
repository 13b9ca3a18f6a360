"""Pydantic schemas for configuration and result records.

These schemas define the structure and validation rules for data flowing
through compenkit: training and model configuration, dataset manifests,
per-iteration training logs and image-quality records. All of them are
strict (``extra="forbid"``) so that misspelled keys in a run configuration
are rejected instead of silently ignored.
"""

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

LossTerm = Literal["l1", "l2", "ssim"]
InitMode = Literal["normal", "scaled"]

MANIFEST_FORMAT_VERSION = 1


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TrainConfig(_StrictModel):
    """Optimizer schedule and loss selection for one training run."""

    lr: float = Field(1e-3, gt=0.0, description="Initial Adam learning rate")
    decay_factor: float = Field(5.0, gt=0.0, description="Step decay divisor")
    decay_every: int = Field(1500, ge=1, description="Iterations between lr decays")
    iters: int = Field(2000, ge=0, description="Number of optimizer steps")
    batch: int = Field(4, ge=1, description="Training pairs per step")
    loss_terms: list[LossTerm] = Field(
        default_factory=lambda: ["l1", "l2", "ssim"],
        description="Unweighted loss terms summed into the objective",
    )
    seed: int = Field(0, description="Seed for initialization and batch sampling")
    init_mode: InitMode = Field(
        "scaled",
        description=(
            "normal: refinement weights ~ N(0, 1); scaled: He init with a small final layer"
        ),
    )
    init_from: Optional[Path] = Field(None, description="Checkpoint to warm-start from")
    log_every: int = Field(25, ge=1, description="Structured-log cadence in iterations")
    adam_betas: tuple[float, float] = Field((0.9, 0.999), description="Adam moment decay rates")
    adam_eps: float = Field(1e-8, gt=0.0, description="Adam denominator epsilon")

    @field_validator("loss_terms")
    @classmethod
    def validate_loss_terms(cls, v: list[str]) -> list[str]:
        """Require at least one term and no duplicates."""
        if not v:
            raise ValueError("loss_terms must name at least one term")
        if len(set(v)) != len(v):
            raise ValueError("loss_terms must not repeat a term")
        return v


class ModelConfig(_StrictModel):
    """Architecture switches and widths of the compensation model."""

    k: int = Field(2, ge=1, description="Pixel shuffle factor")
    channels: int = Field(3, ge=1, description="Image channels")
    refine_widths: tuple[int, int, int, int, int, int] = Field(
        (32, 32, 64, 64, 64, 64), description="Channel widths of the six refinement convs"
    )
    panet_widths: tuple[int, int, int] = Field(
        (32, 64, 128), description="Channel widths of the three encoder convs"
    )
    control_points: int = Field(5, ge=3, description="Number of TPS control points")
    use_refine: bool = Field(True, description="Refine the coarse grid (off = coarse only)")
    use_refine_attention: bool = Field(True, description="Attention gates r1, r2 in refinement")
    use_p1: bool = Field(True, description="Pixel attention after unshuffle")
    use_p2: bool = Field(True, description="Pixel attention after the first encoder conv")

    @field_validator("refine_widths", "panet_widths")
    @classmethod
    def validate_widths(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Ensure every layer has at least one channel."""
        if any(width < 1 for width in v):
            raise ValueError("layer widths must be positive")
        return v


class SimulatorConfig(_StrictModel):
    """Synthetic projector-camera setup and dataset sizes."""

    size: int = Field(128, ge=32, description="Square image side in pixels")
    n_train: int = Field(32, ge=1, description="Training pairs")
    n_test: int = Field(8, ge=1, description="Test pairs")
    noise_sigma: Optional[float] = Field(
        None, ge=0.0, le=0.01, description="Camera noise std override"
    )
    noiseless: bool = Field(False, description="Force camera noise to zero")
    surface_probe: float = Field(0.5, ge=0.0, le=1.0, description="Gray level of the surface probe")


class IterationRecord(_StrictModel):
    """One row of the training log."""

    iter: int
    loss: float
    l1: float
    l2: float
    ssim_term: float
    lr: float


class ImageMetrics(_StrictModel):
    """Image-quality metrics for one image pair (or their mean)."""

    psnr: float = Field(..., description="Peak signal-to-noise ratio in dB")
    rmse: float = Field(..., ge=0.0, description="Root-mean-square error on [0, 1] images")
    ssim: float = Field(..., ge=-1.0, le=1.0, description="Structural similarity")
    delta_e: float = Field(..., ge=0.0, description="Mean CIEDE2000 color difference")


class MetricsRecord(_StrictModel):
    """Per-image metrics and their unweighted mean."""

    per_image: list[ImageMetrics]
    mean: ImageMetrics

    @model_validator(mode="after")
    def validate_not_empty(self) -> "MetricsRecord":
        """A record always describes at least one image."""
        if not self.per_image:
            raise ValueError("a metrics record needs at least one image")
        return self


class PairEntry(_StrictModel):
    """Relative file names of one projector input and its capture."""

    prj: str
    cam: str


class DatasetManifest(_StrictModel):
    """Contents of ``manifest.json`` in a generated setup directory."""

    format_version: int = MANIFEST_FORMAT_VERSION
    seed: int
    scene_kind: Literal["generated", "ideal"] = "generated"
    height: int
    width: int
    k: int
    n_train: int
    n_test: int
    noise_sigma: Optional[float] = None
    noiseless: bool = False
    surface_probe: float = 0.5
    surface: str = "surface.png"
    train: list[PairEntry]
    test: list[PairEntry]

    @model_validator(mode="after")
    def validate_counts(self) -> "DatasetManifest":
        """The recorded counts must match the file lists."""
        if len(self.train) != self.n_train or len(self.test) != self.n_test:
            raise ValueError("manifest pair lists disagree with n_train / n_test")
        return self
