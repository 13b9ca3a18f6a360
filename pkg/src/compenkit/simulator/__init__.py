"""Synthetic projector-camera simulator and setup datasets."""

from compenkit.simulator.dataset import (
    SetupDataset,
    gen_dataset,
    load_dataset,
    scene_from_manifest,
    simulate_dataset,
)
from compenkit.simulator.patterns import sampling_images
from compenkit.simulator.scene import (
    SceneSetup,
    gen_setup,
    homography_grid,
    ideal_setup,
    photometric_response,
    render_capture,
    sampling_grid,
)

__all__ = [
    "SceneSetup",
    "SetupDataset",
    "gen_dataset",
    "gen_setup",
    "homography_grid",
    "ideal_setup",
    "load_dataset",
    "photometric_response",
    "render_capture",
    "sampling_grid",
    "sampling_images",
    "scene_from_manifest",
    "simulate_dataset",
]
