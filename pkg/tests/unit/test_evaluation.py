"""Unit tests for closed-loop evaluation."""

import csv
from dataclasses import replace

import numpy as np
import pytest

from compenkit.core.exceptions import InvalidArgumentError
from compenkit.simulator.imageio import quantize
from compenkit.simulator.scene import render_capture
from compenkit.training import build_model, compensate, evaluate, write_metrics_csv
from compenkit.training.evaluation import (
    closed_loop_captures,
    summary_line,
    uncompensated_metrics,
)
from compenkit.training.quality import measure_batch


@pytest.fixture
def model(tiny_model_config):
    return build_model(tiny_model_config, seed=0)


class TestEvaluate:
    """Test compensated and uncompensated metrics."""

    def test_report_covers_every_test_image(self, model, tiny_dataset):
        report = evaluate(model, tiny_dataset)

        assert len(report.compensated.per_image) == tiny_dataset.n_test
        assert len(report.uncompensated.per_image) == tiny_dataset.n_test
        assert report.improvement_db == pytest.approx(
            report.compensated.mean.psnr - report.uncompensated.mean.psnr
        )

    def test_mean_is_mean_of_images(self, model, tiny_dataset):
        record = evaluate(model, tiny_dataset).compensated

        assert record.mean.psnr == pytest.approx(np.mean([m.psnr for m in record.per_image]))
        assert record.mean.delta_e == pytest.approx(np.mean([m.delta_e for m in record.per_image]))

    def test_uncompensated_compares_captures_with_desired(self, tiny_dataset):
        expected = measure_batch(tiny_dataset.test_cam, tiny_dataset.test_prj)
        assert uncompensated_metrics(tiny_dataset) == expected

    def test_closed_loop_reuses_test_noise_streams(self, model, tiny_dataset):
        projected = compensate(model, tiny_dataset.test_prj, tiny_dataset.surface).data
        scene, base = tiny_dataset.scene, tiny_dataset.test_index_base
        expected = quantize(render_capture(projected, scene, base).data)

        np.testing.assert_array_equal(closed_loop_captures(model, tiny_dataset), expected)

    def test_evaluation_is_deterministic(self, model, tiny_dataset):
        first = evaluate(model, tiny_dataset)
        second = evaluate(model, tiny_dataset)

        assert first.compensated == second.compensated

    def test_ideal_setup_baseline_is_near_perfect(self, ideal_dataset):
        baseline = uncompensated_metrics(ideal_dataset).mean

        assert baseline.psnr > 40.0
        assert baseline.delta_e < 1.0

    def test_empty_test_set(self, model, tiny_dataset):
        empty = replace(
            tiny_dataset, test_prj=tiny_dataset.test_prj[:0], test_cam=tiny_dataset.test_cam[:0]
        )
        with pytest.raises(InvalidArgumentError):
            evaluate(model, empty)

    def test_metrics_exported(self, model, tiny_dataset, metrics_exporter):
        evaluate(model, tiny_dataset, variant="no_p1")

        output = metrics_exporter.get_metrics().decode()
        assert 'compenkit_evaluation_psnr_db{variant="no_p1",mode="compensated"}' in output
        assert 'compenkit_evaluation_delta_e{variant="no_p1",mode="uncompensated"}' in output


class TestReports:
    """Test text and CSV output."""

    def test_metrics_csv_rows(self, tmp_path, model, tiny_dataset):
        report = evaluate(model, tiny_dataset)
        path = write_metrics_csv(report, tmp_path / "out" / "metrics.csv")

        with path.open(newline="") as handle:
            rows = list(csv.DictReader(handle))

        assert len(rows) == 2 * (tiny_dataset.n_test + 1)
        means = {row["mode"]: row for row in rows if row["image"] == "mean"}
        assert float(means["compensated"]["psnr"]) == report.compensated.mean.psnr
        assert float(means["uncompensated"]["delta_e"]) == report.uncompensated.mean.delta_e

    def test_summary_line(self, model, tiny_dataset):
        line = summary_line(evaluate(model, tiny_dataset).compensated.mean)

        assert line.startswith("PSNR ")
        assert "ΔE" in line
