"""Run-level services: telemetry and the gradient-check suite."""
