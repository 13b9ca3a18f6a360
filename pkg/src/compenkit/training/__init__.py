"""Training objective, image-quality metrics, evaluation and ablations."""

from compenkit.training.ablation import ablate, render_table, resolve_variants, summarize
from compenkit.training.evaluation import EvaluationReport, evaluate, write_metrics_csv
from compenkit.training.losses import loss, ssim_map
from compenkit.training.model import (
    CompensationModel,
    build_model,
    compensate,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from compenkit.training.quality import delta_e, measure, psnr, rmse, ssim
from compenkit.training.trainer import TrainResult, train

__all__ = [
    "CompensationModel",
    "EvaluationReport",
    "TrainResult",
    "ablate",
    "build_model",
    "compensate",
    "count_params",
    "delta_e",
    "evaluate",
    "load_checkpoint",
    "loss",
    "measure",
    "psnr",
    "render_table",
    "resolve_variants",
    "rmse",
    "save_checkpoint",
    "ssim",
    "ssim_map",
    "summarize",
    "train",
    "write_metrics_csv",
]
