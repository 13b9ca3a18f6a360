"""
Prometheus metrics for compenkit runs.

Tracks simulator renders, training progress and evaluation results on a
private registry, so several exporters (for example one per test) never
collide. The CLI writes the text exposition with ``--metrics-out`` for the
node-exporter textfile collector.
"""

from pathlib import Path
from typing import Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, Info, generate_latest
from prometheus_client import write_to_textfile

from compenkit import __version__


class MetricsExporter:
    """
    Prometheus metrics exporter for compenkit.

    Tracks:
    - Rendered captures and generated datasets
    - Training iterations, loss and learning rate
    - Iteration duration
    - Evaluation image quality
    - Errors by component
    """

    def __init__(self, registry: Optional[CollectorRegistry] = None):
        """Initialize Prometheus metrics."""
        self.registry = registry if registry is not None else CollectorRegistry()

        self.system_info = Info(
            "compenkit_system", "compenkit build information", registry=self.registry
        )
        self.system_info.info({"version": __version__, "component": "compenkit"})

        # Simulator
        self.captures_rendered_total = Counter(
            "compenkit_captures_rendered_total",
            "Total number of simulated camera captures",
            ["split"],
            registry=self.registry,
        )

        # Training
        self.training_iterations_total = Counter(
            "compenkit_training_iterations_total",
            "Total number of optimizer steps",
            ["variant"],
            registry=self.registry,
        )
        self.training_loss = Gauge(
            "compenkit_training_loss",
            "Most recent training loss",
            ["variant"],
            registry=self.registry,
        )
        self.learning_rate = Gauge(
            "compenkit_learning_rate",
            "Current learning rate",
            ["variant"],
            registry=self.registry,
        )
        self.iteration_duration = Histogram(
            "compenkit_iteration_duration_seconds",
            "Wall time of one training iteration",
            buckets=[0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0],
            registry=self.registry,
        )

        # Evaluation
        self.evaluation_psnr = Gauge(
            "compenkit_evaluation_psnr_db",
            "Mean PSNR of the last evaluation",
            ["variant", "mode"],
            registry=self.registry,
        )
        self.evaluation_delta_e = Gauge(
            "compenkit_evaluation_delta_e",
            "Mean CIEDE2000 difference of the last evaluation",
            ["variant", "mode"],
            registry=self.registry,
        )

        self.errors_total = Counter(
            "compenkit_errors_total",
            "Total number of errors",
            ["component", "error_type"],
            registry=self.registry,
        )

    def record_captures(self, split: str, count: int = 1) -> None:
        """Record simulated captures for a dataset split."""
        self.captures_rendered_total.labels(split=split).inc(count)

    def record_iteration(
        self, loss: float, lr: float, duration: float, variant: str = "full"
    ) -> None:
        """Record one optimizer step."""
        self.training_iterations_total.labels(variant=variant).inc()
        self.training_loss.labels(variant=variant).set(loss)
        self.learning_rate.labels(variant=variant).set(lr)
        self.iteration_duration.observe(duration)

    def record_evaluation(
        self, psnr: float, delta_e: float, mode: str, variant: str = "full"
    ) -> None:
        """Record the mean metrics of an evaluation (mode: compensated or uncompensated)."""
        self.evaluation_psnr.labels(variant=variant, mode=mode).set(psnr)
        self.evaluation_delta_e.labels(variant=variant, mode=mode).set(delta_e)

    def record_error(self, component: str, error_type: str) -> None:
        """Record an error occurrence."""
        self.errors_total.labels(component=component, error_type=error_type).inc()

    def get_metrics(self) -> bytes:
        """
        Get metrics in Prometheus format.

        Returns:
            Metrics in Prometheus text format
        """
        return generate_latest(self.registry)

    def write_textfile(self, path: Path) -> None:
        """Write the metrics atomically in textfile-collector format."""
        write_to_textfile(str(path), self.registry)


# Singleton instance
_metrics_exporter_instance: Optional[MetricsExporter] = None


def get_metrics_exporter() -> MetricsExporter:
    """Get singleton metrics exporter instance."""
    global _metrics_exporter_instance
    if _metrics_exporter_instance is None:
        _metrics_exporter_instance = MetricsExporter()
    return _metrics_exporter_instance


def reset_metrics_exporter() -> None:
    """Drop the singleton so the next call starts from zero."""
    global _metrics_exporter_instance
    _metrics_exporter_instance = None
