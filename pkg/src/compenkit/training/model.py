"""
The full compensation model and its checkpoint format.

The model warps the captured (or desired) image and the surface image into
the projector frame with GANet, then PANet predicts the projector input.
Checkpoints are ``.npz`` archives holding one array per named parameter plus
a ``__meta__`` entry with the format version and the ModelConfig as JSON.
"""

import json
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError

from compenkit.core.exceptions import DatasetError, InvalidArgumentError, InvalidShapeError
from compenkit.core.logging import get_logger
from compenkit.core.schemas import InitMode, ModelConfig
from compenkit.geometry import GANet, warp_image
from compenkit.photometric import PANet
from compenkit.tensor import Module, Tensor, as_tensor, no_grad

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
META_KEY = "__meta__"


class CompensationModel(Module):
    """GANet + PANet bundle with the shuffle factor recorded in ``config``."""

    def __init__(self, config: ModelConfig, init_mode: InitMode = "scaled", seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.config = config
        self.ganet = GANet(
            control_points=config.control_points,
            refine_widths=config.refine_widths,
            use_refine=config.use_refine,
            use_refine_attention=config.use_refine_attention,
            init_mode=init_mode,
            rng=rng,
        )
        self.panet = PANet(
            k=config.k,
            channels=config.channels,
            widths=config.panet_widths,
            use_p1=config.use_p1,
            use_p2=config.use_p2,
            rng=rng,
        )

    @property
    def k(self) -> int:
        return self.config.k

    def forward(self, images: Tensor, surface: Tensor) -> Tensor:
        """
        Predict projector inputs.

        Args:
            images: (N, C, H, W) captured images during training, desired
                images at inference
            surface: (1, C, H, W) or (N, C, H, W) surface capture

        Returns:
            (N, C, H, W) projector inputs in [0, 1]
        """
        if images.ndim != 4 or surface.ndim != 4 or images.shape[1:] != surface.shape[1:]:
            raise InvalidShapeError(
                "images and surface must be (N, C, H, W) of one size",
                images=images.shape,
                surface=surface.shape,
            )
        grid = self.ganet.grid(images.shape[2], images.shape[3])
        x_warped = warp_image(images, grid)
        s_warped = warp_image(surface, grid)
        return self.panet(x_warped, s_warped)


def build_model(
    config: Optional[ModelConfig] = None, init_mode: InitMode = "scaled", seed: int = 0
) -> CompensationModel:
    return CompensationModel(config if config is not None else ModelConfig(), init_mode, seed)


def count_params(model: Module) -> int:
    """Total scalar parameter count over every registered parameter."""
    return model.count_params()


def compensate(
    model: CompensationModel,
    desired: Any,
    surface: Any,
    batch_size: int = 4,
) -> Tensor:
    """
    Compute projector inputs that should display as ``desired``.

    Args:
        model: Trained compensation model
        desired: (N, C, H, W) or (C, H, W) images in [0, 1]
        surface: Surface capture, (1, C, H, W) or (C, H, W)
        batch_size: Images per forward pass

    Returns:
        (N, C, H, W) tensor in [0, 1]
    """
    dtype = next((t.dtype for _, t in model.named_parameters()), np.dtype(np.float32))
    y = as_tensor(desired, dtype=dtype)
    s = as_tensor(surface, dtype=dtype)
    if y.ndim == 3:
        y = y.reshape(1, *y.shape)
    if s.ndim == 3:
        s = s.reshape(1, *s.shape)
    if s.shape[0] != 1:
        raise InvalidShapeError("surface must be a single image", shape=s.shape)
    if y.ndim != 4 or y.shape[1:] != s.shape[1:]:
        raise InvalidShapeError(
            "desired images and surface differ in size", desired=y.shape, surface=s.shape
        )
    k = model.k
    multiple = 4 * k
    if y.shape[2] % multiple or y.shape[3] % multiple:
        raise InvalidShapeError(
            f"image height and width must be multiples of 4*k = {multiple}",
            shape=y.shape,
            k=k,
        )

    outputs = []
    with no_grad():
        for start in range(0, y.shape[0], batch_size):
            chunk = Tensor(y.data[start : start + batch_size])
            outputs.append(model(chunk, s).data)
    return Tensor(np.concatenate(outputs, axis=0))


def save_checkpoint(model: CompensationModel, path: Union[str, Path]) -> Path:
    """Write parameters and configuration to an ``.npz`` file."""
    path = Path(path)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model": json.loads(model.config.model_dump_json()),
    }
    arrays = model.state_dict()
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            np.savez(handle, **arrays)
    except OSError as exc:
        raise DatasetError("cannot write checkpoint", path=str(path), reason=str(exc)) from exc
    logger.info("checkpoint_saved", path=str(path), params=model.count_params())
    return path


def read_checkpoint(path: Union[str, Path]) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """
    Read the configuration and parameter arrays of a checkpoint.

    Raises:
        DatasetError: If the file is missing or unreadable
        InvalidArgumentError: If the format version or metadata is wrong
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except (OSError, ValueError) as exc:
        raise DatasetError("cannot read checkpoint", path=str(path), reason=str(exc)) from exc
    if META_KEY not in arrays:
        raise InvalidArgumentError("checkpoint has no metadata", path=str(path))
    meta = json.loads(str(arrays.pop(META_KEY)))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidArgumentError(
            "unsupported checkpoint format", path=str(path), version=meta.get("format_version")
        )
    try:
        config = ModelConfig.model_validate(meta["model"])
    except (KeyError, ValidationError) as exc:
        raise InvalidArgumentError("checkpoint model config is invalid", path=str(path)) from exc
    return config, arrays


def load_checkpoint(path: Union[str, Path]) -> CompensationModel:
    """Rebuild a model from a checkpoint; parameters round-trip bit-exactly."""
    config, arrays = read_checkpoint(path)
    model = build_model(config)
    model.load_state_dict(arrays)
    logger.info("checkpoint_loaded", path=str(path), params=model.count_params())
    return model
