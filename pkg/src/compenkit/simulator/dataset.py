"""
Setup datasets: surface capture, training pairs and test pairs.

On disk a setup directory looks like::

    manifest.json
    surface.png
    train/prj_0000.png  train/cam_0000.png  ...
    test/prj_0000.png   test/cam_0000.png   ...

Captures are quantized to 8 bits in memory too, so a dataset built in memory
and the same dataset loaded back from disk hold identical arrays.
"""

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from compenkit.core.exceptions import DatasetError, InvalidArgumentError
from compenkit.core.logging import get_logger, log_performance
from compenkit.core.schemas import DatasetManifest, PairEntry
from compenkit.services.metrics_exporter import get_metrics_exporter
from compenkit.simulator.imageio import quantize, read_png, write_png
from compenkit.simulator.scene import SceneSetup, gen_setup, ideal_setup, render_capture

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
SURFACE_INDEX = 0


def train_render_index(i: int) -> int:
    return SURFACE_INDEX + 1 + i


def held_out_render_index(n_train: int, i: int) -> int:
    return SURFACE_INDEX + 1 + n_train + i


@dataclass
class SetupDataset:
    """Arrays of one setup plus the scene that produced them."""

    scene: SceneSetup
    k: int
    surface: np.ndarray
    train_prj: np.ndarray
    train_cam: np.ndarray
    test_prj: np.ndarray
    test_cam: np.ndarray
    surface_probe: float = 0.5
    test_index_base: int = 1
    root: Optional[Path] = None

    @property
    def n_train(self) -> int:
        return int(self.train_prj.shape[0])

    @property
    def n_test(self) -> int:
        return int(self.test_prj.shape[0])

    @property
    def image_size(self) -> tuple[int, int]:
        return int(self.surface.shape[-2]), int(self.surface.shape[-1])

    def subset(self, n_train: int) -> "SetupDataset":
        """The same setup restricted to its first ``n_train`` training pairs."""
        if not 1 <= n_train <= self.n_train:
            raise InvalidArgumentError(
                "training subset size out of range", requested=n_train, available=self.n_train
            )
        return SetupDataset(
            scene=self.scene,
            k=self.k,
            surface=self.surface,
            train_prj=self.train_prj[:n_train],
            train_cam=self.train_cam[:n_train],
            test_prj=self.test_prj,
            test_cam=self.test_cam,
            surface_probe=self.surface_probe,
            test_index_base=self.test_index_base,
            root=self.root,
        )


def surface_probe_image(scene: SceneSetup, level: float) -> np.ndarray:
    """Uniform gray projector input used to capture the surface image."""
    return np.full((1, 3, scene.height, scene.width), level, dtype=np.float32)


def simulate_dataset(
    scene: SceneSetup,
    images: np.ndarray,
    n_train: int,
    n_test: int,
    k: int = 2,
    surface_probe: float = 0.5,
) -> SetupDataset:
    """
    Render the surface capture and all pairs in memory.

    The first ``n_train`` images become training inputs and the next
    ``n_test`` test inputs, so the two splits never share an image.

    Raises:
        InvalidArgumentError: If fewer than n_train + n_test images are given
    """
    if n_train < 1 or n_test < 1:
        raise InvalidArgumentError(
            "need at least one train and one test pair", n_train=n_train, n_test=n_test
        )
    images = np.asarray(images, dtype=np.float32)
    if images.shape[0] < n_train + n_test:
        raise InvalidArgumentError(
            "not enough sampling images", available=int(images.shape[0]), needed=n_train + n_test
        )
    train_prj = quantize(images[:n_train])
    test_prj = quantize(images[n_train : n_train + n_test])
    probe = surface_probe_image(scene, surface_probe)
    surface = quantize(render_capture(probe, scene, SURFACE_INDEX).data)
    train_cam = quantize(render_capture(train_prj, scene, train_render_index(0)).data)
    test_cam = quantize(render_capture(test_prj, scene, held_out_render_index(n_train, 0)).data)

    exporter = get_metrics_exporter()
    exporter.record_captures("surface")
    exporter.record_captures("train", n_train)
    exporter.record_captures("test", n_test)
    return SetupDataset(
        scene=scene,
        k=k,
        surface=surface,
        train_prj=train_prj,
        train_cam=train_cam,
        test_prj=test_prj,
        test_cam=test_cam,
        surface_probe=surface_probe,
        test_index_base=held_out_render_index(n_train, 0),
    )


def _pair_names(split: str, count: int) -> list[PairEntry]:
    return [
        PairEntry(prj=f"{split}/prj_{i:04d}.png", cam=f"{split}/cam_{i:04d}.png")
        for i in range(count)
    ]


def gen_dataset(
    scene: SceneSetup,
    images: np.ndarray,
    n_train: int,
    n_test: int,
    out_dir: Union[str, Path],
    k: int = 2,
    surface_probe: float = 0.5,
) -> DatasetManifest:
    """
    Render a setup and write it to ``out_dir``.

    Args:
        scene: Setup to render with
        images: Sampling images (M, 3, H, W), M >= n_train + n_test
        n_train: Number of training pairs
        n_test: Number of test pairs
        out_dir: Target directory, created if missing
        k: Shuffle factor recorded for the model
        surface_probe: Gray level projected for the surface capture

    Returns:
        The manifest written to ``out_dir/manifest.json``

    Raises:
        InvalidArgumentError: If there are not enough images
        DatasetError: If the directory cannot be written
    """
    start = time.perf_counter()
    dataset = simulate_dataset(scene, images, n_train, n_test, k, surface_probe)
    root = Path(out_dir)
    manifest = DatasetManifest(
        seed=scene.seed,
        scene_kind=scene.kind,
        height=scene.height,
        width=scene.width,
        k=k,
        n_train=n_train,
        n_test=n_test,
        noise_sigma=scene.noise_sigma,
        noiseless=scene.noise_sigma == 0.0,
        surface_probe=surface_probe,
        train=_pair_names("train", n_train),
        test=_pair_names("test", n_test),
    )
    try:
        (root / "train").mkdir(parents=True, exist_ok=True)
        (root / "test").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(
            "cannot create dataset directory", path=str(root), reason=str(exc)
        ) from exc

    write_png(root / manifest.surface, dataset.surface[0])
    for entries, prj, cam in (
        (manifest.train, dataset.train_prj, dataset.train_cam),
        (manifest.test, dataset.test_prj, dataset.test_cam),
    ):
        for entry, x, y in zip(entries, prj, cam):
            write_png(root / entry.prj, x)
            write_png(root / entry.cam, y)
    try:
        text = manifest.model_dump_json(indent=2) + "\n"
        (root / MANIFEST_NAME).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DatasetError("cannot write manifest", path=str(root), reason=str(exc)) from exc

    log_performance(
        logger,
        "dataset_generation",
        duration_ms=(time.perf_counter() - start) * 1000.0,
        path=str(root),
        n_train=n_train,
        n_test=n_test,
    )
    return manifest


def read_manifest(root: Union[str, Path]) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError("dataset manifest not found", path=str(path)) from exc
    try:
        return DatasetManifest.model_validate_json(text)
    except ValidationError as exc:
        raise DatasetError("dataset manifest is invalid", path=str(path), reason=str(exc)) from exc


def scene_from_manifest(manifest: DatasetManifest) -> SceneSetup:
    """Regenerate the scene a dataset was rendered with."""
    size = (manifest.height, manifest.width)
    if manifest.scene_kind == "ideal":
        return ideal_setup(size, seed=manifest.seed)
    return gen_setup(
        manifest.seed, size, noise_sigma=manifest.noise_sigma, noiseless=manifest.noiseless
    )


def _read_stack(root: Path, names: list[str], size: tuple[int, int]) -> np.ndarray:
    arrays = []
    for name in names:
        array = read_png(root / name)
        if array.shape[1:] != size:
            raise DatasetError(
                "image size differs from manifest", path=str(root / name), shape=array.shape
            )
        arrays.append(array)
    return np.stack(arrays).astype(np.float32)


def load_dataset(root: Union[str, Path]) -> SetupDataset:
    """
    Read a setup directory written by ``gen_dataset``.

    Raises:
        DatasetError: If the manifest or any listed image is missing or malformed
    """
    root = Path(root)
    manifest = read_manifest(root)
    size = (manifest.height, manifest.width)
    surface = _read_stack(root, [manifest.surface], size)
    dataset = SetupDataset(
        scene=scene_from_manifest(manifest),
        k=manifest.k,
        surface=surface,
        train_prj=_read_stack(root, [e.prj for e in manifest.train], size),
        train_cam=_read_stack(root, [e.cam for e in manifest.train], size),
        test_prj=_read_stack(root, [e.prj for e in manifest.test], size),
        test_cam=_read_stack(root, [e.cam for e in manifest.test], size),
        surface_probe=manifest.surface_probe,
        test_index_base=held_out_render_index(manifest.n_train, 0),
        root=root,
    )
    logger.info("dataset_loaded", path=str(root), n_train=dataset.n_train, n_test=dataset.n_test)
    return dataset
