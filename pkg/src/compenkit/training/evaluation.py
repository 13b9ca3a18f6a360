"""
Closed-loop evaluation through the simulator.

The compensated projector input for each desired test image is rendered
with the same setup and the same noise streams as the uncompensated test
capture, quantized to 8 bits like a real camera frame, and compared with
the desired image.
"""

import csv
import time
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from compenkit.core.exceptions import InvalidArgumentError
from compenkit.core.logging import LogContext, get_logger, log_performance
from compenkit.core.schemas import ImageMetrics, MetricsRecord
from compenkit.services.metrics_exporter import get_metrics_exporter
from compenkit.simulator.dataset import SetupDataset
from compenkit.simulator.imageio import quantize
from compenkit.simulator.scene import render_capture
from compenkit.training.model import CompensationModel, compensate
from compenkit.training.quality import measure_batch

logger = get_logger(__name__)

METRIC_COLUMNS = ("psnr", "rmse", "ssim", "delta_e")


class EvaluationReport(BaseModel):
    """Compensated and uncompensated metrics of one model on one setup."""

    model_config = ConfigDict(extra="forbid")

    variant: str = "full"
    compensated: MetricsRecord
    uncompensated: MetricsRecord
    elapsed_seconds: float = Field(0.0, ge=0.0)

    @property
    def improvement_db(self) -> float:
        return self.compensated.mean.psnr - self.uncompensated.mean.psnr


def uncompensated_metrics(dataset: SetupDataset) -> MetricsRecord:
    """Metrics of projecting the desired images as they are."""
    if dataset.n_test == 0:
        raise InvalidArgumentError("test set is empty")
    return measure_batch(dataset.test_cam, dataset.test_prj)


def closed_loop_captures(model: CompensationModel, dataset: SetupDataset) -> np.ndarray:
    """Captures of the compensated test images, quantized to 8 bits."""
    projected = compensate(model, dataset.test_prj, dataset.surface).data
    captured = render_capture(projected, dataset.scene, dataset.test_index_base).data
    return quantize(captured)


def evaluate(
    model: CompensationModel, dataset: SetupDataset, variant: str = "full"
) -> EvaluationReport:
    """
    Measure how close compensated projections come to the desired images.

    Args:
        model: Trained compensation model
        dataset: Setup whose test pairs hold the desired images
        variant: Label used in logs and metrics

    Returns:
        EvaluationReport with per-image and mean metrics for both modes

    Raises:
        InvalidArgumentError: If the setup has no test pairs
    """
    if dataset.n_test == 0:
        raise InvalidArgumentError("test set is empty")
    start = time.perf_counter()
    with LogContext(variant=variant):
        baseline = uncompensated_metrics(dataset)
        compensated = measure_batch(closed_loop_captures(model, dataset), dataset.test_prj)
        report = EvaluationReport(
            variant=variant,
            compensated=compensated,
            uncompensated=baseline,
            elapsed_seconds=time.perf_counter() - start,
        )

        exporter = get_metrics_exporter()
        for mode, record in (("uncompensated", baseline), ("compensated", compensated)):
            exporter.record_evaluation(record.mean.psnr, record.mean.delta_e, mode, variant)
        logger.info(
            "evaluation_completed",
            n_test=dataset.n_test,
            psnr=round(compensated.mean.psnr, 4),
            uncompensated_psnr=round(baseline.mean.psnr, 4),
            delta_e=round(compensated.mean.delta_e, 4),
        )
        log_performance(logger, "evaluation", duration_ms=report.elapsed_seconds * 1000.0)
    return report


def summary_line(metrics: ImageMetrics) -> str:
    return (
        f"PSNR {metrics.psnr:.4f} dB / RMSE {metrics.rmse:.4f} / "
        f"SSIM {metrics.ssim:.4f} / ΔE {metrics.delta_e:.4f}"
    )


def write_metrics_csv(report: EvaluationReport, path: Union[str, Path]) -> Path:
    """
    Write one row per test image and mode, then the two mean rows.

    Columns: mode, image, psnr, rmse, ssim, delta_e. Mean rows use ``mean``
    in the image column.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("mode", "image", *METRIC_COLUMNS))
        records = (("compensated", report.compensated), ("uncompensated", report.uncompensated))
        for mode, record in records:
            for i, metrics in enumerate(record.per_image):
                writer.writerow((mode, i, *_metric_values(metrics)))
            writer.writerow((mode, "mean", *_metric_values(record.mean)))
    return path


def _metric_values(metrics: ImageMetrics) -> list[str]:
    return [repr(getattr(metrics, name)) for name in METRIC_COLUMNS]
