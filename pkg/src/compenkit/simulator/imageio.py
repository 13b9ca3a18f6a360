"""8-bit RGB PNG reading and writing with Pillow."""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from compenkit.core.exceptions import DatasetError, InvalidArgumentError, InvalidShapeError

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(3, H, W) floats in [0, 1] -> (H, W, 3) uint8."""
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[0] != 3:
        raise InvalidShapeError("expected a (3, H, W) image", shape=array.shape)
    return np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def quantize(image: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid a PNG round trip would produce."""
    return (np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def write_png(path: PathLike, image: np.ndarray) -> Path:
    path = Path(path)
    try:
        Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise DatasetError("cannot write image", path=str(path), reason=str(exc)) from exc
    return path


def read_png(path: PathLike) -> np.ndarray:
    """
    Read an image file as a (3, H, W) float32 array in [0, 1].

    Raises:
        DatasetError: If the file is missing or not a readable image
    """
    path = Path(path)
    try:
        with Image.open(path) as handle:
            array = np.asarray(handle.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DatasetError("cannot read image", path=str(path), reason=str(exc)) from exc
    return np.ascontiguousarray(array.transpose(2, 0, 1) / 255.0)


def load_image_directory(directory: PathLike, count: int, size: tuple[int, int]) -> np.ndarray:
    """
    Load the first ``count`` images of a directory (sorted by name), resized.

    Returns:
        (count, 3, H, W) float32 array in [0, 1]

    Raises:
        InvalidArgumentError: If the directory holds fewer than ``count`` images
        DatasetError: If the directory or an image cannot be read
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError("image directory does not exist", path=str(directory))
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if len(files) < count:
        raise InvalidArgumentError(
            "not enough images in directory", path=str(directory), found=len(files), needed=count
        )
    height, width = size
    images = []
    for path in files[:count]:
        try:
            with Image.open(path) as handle:
                resized = handle.convert("RGB").resize((width, height), Image.Resampling.BICUBIC)
                images.append(np.asarray(resized, dtype=np.float32).transpose(2, 0, 1) / 255.0)
        except (OSError, ValueError) as exc:
            raise DatasetError("cannot read image", path=str(path), reason=str(exc)) from exc
    return np.stack(images).astype(np.float32)
