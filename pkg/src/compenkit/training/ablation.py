"""
Ablation harness.

Each variant switches off one part of the model, changes the loss terms or
shrinks the training set. Every variant trains from the same base
configuration and data, once per seed, and is evaluated in closed loop.
Rows are reported per (variant, seed) and summarized by the median over
seeds.
"""

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from compenkit.core.config import RunConfig
from compenkit.core.exceptions import InvalidArgumentError
from compenkit.core.logging import LogContext, get_logger
from compenkit.core.schemas import LossTerm, ModelConfig, TrainConfig
from compenkit.simulator.dataset import SetupDataset
from compenkit.training.evaluation import evaluate
from compenkit.training.model import build_model
from compenkit.training.reference import DESK_TRAIN_SIZES, VARIANT_REFERENCE
from compenkit.training.trainer import train

logger = get_logger(__name__)

_TRAIN_SIZE = re.compile(r"^train-(\d+)$")


@dataclass(frozen=True)
class Variant:
    """One ablation configuration relative to the base run."""

    name: str
    model_overrides: dict[str, Any] = field(default_factory=dict)
    loss_terms: Optional[tuple[LossTerm, ...]] = None
    n_train: Optional[int] = None

    def model_config(self, base: ModelConfig) -> ModelConfig:
        return base.model_copy(update=self.model_overrides)

    def train_config(self, base: TrainConfig, seed: int) -> TrainConfig:
        update: dict[str, Any] = {"seed": seed}
        if self.loss_terms is not None:
            update["loss_terms"] = list(self.loss_terms)
        return TrainConfig.model_validate({**base.model_dump(), **update})


def _loss_variant(terms: tuple[LossTerm, ...]) -> Variant:
    return Variant(name="+".join(terms), loss_terms=terms)


VARIANTS: dict[str, Variant] = {
    v.name: v
    for v in (
        Variant("full"),
        Variant("no_p1", {"use_p1": False}),
        Variant("no_p2", {"use_p2": False}),
        Variant("no_p1p2", {"use_p1": False, "use_p2": False}),
        Variant("no_r1r2", {"use_refine_attention": False}),
        Variant("coarse_only", {"use_refine": False}),
        _loss_variant(("l1",)),
        _loss_variant(("l2",)),
        _loss_variant(("ssim",)),
        _loss_variant(("l1", "l2")),
        _loss_variant(("l1", "ssim")),
        _loss_variant(("l2", "ssim")),
        _loss_variant(("l1", "l2", "ssim")),
    )
}

GROUPS: dict[str, tuple[str, ...]] = {
    "attention": ("full", "no_p1", "no_p2", "no_p1p2"),
    "refinement": ("full", "no_r1r2", "coarse_only"),
    "loss": ("l1", "l2", "ssim", "l1+l2", "l1+ssim", "l2+ssim", "l1+l2+ssim"),
    "train_size": tuple(f"train-{n}" for n in DESK_TRAIN_SIZES),
}


def get_variant(name: str) -> Variant:
    """
    Look up a variant by name; ``train-N`` names are built on demand.

    Raises:
        InvalidArgumentError: If the name is not a known variant
    """
    if name in VARIANTS:
        return VARIANTS[name]
    match = _TRAIN_SIZE.match(name)
    if match and int(match.group(1)) >= 1:
        return Variant(name=name, n_train=int(match.group(1)))
    raise InvalidArgumentError(
        "unknown ablation variant", variant=name, known=sorted(VARIANTS) + sorted(GROUPS)
    )


def resolve_variants(names: Sequence[str]) -> list[Variant]:
    """Expand group names and drop repeats, keeping first-seen order."""
    if not names:
        raise InvalidArgumentError("no ablation variants given")
    resolved: list[Variant] = []
    seen: set[str] = set()
    for name in names:
        for member in GROUPS.get(name, (name,)):
            variant = get_variant(member)
            if variant.name not in seen:
                seen.add(variant.name)
                resolved.append(variant)
    return resolved


class AblationRow(BaseModel):
    """Result of one variant trained with one seed."""

    model_config = ConfigDict(extra="forbid")

    variant: str
    seed: int
    psnr: float
    rmse: float
    ssim: float
    delta_e: float
    uncompensated_psnr: float
    train_seconds: float
    n_train: int
    params: int


ROW_COLUMNS = tuple(AblationRow.model_fields)
SUMMARY_METRICS = ("psnr", "rmse", "ssim", "delta_e", "train_seconds")


def run_variant(base: RunConfig, dataset: SetupDataset, variant: Variant, seed: int) -> AblationRow:
    data = dataset.subset(variant.n_train) if variant.n_train is not None else dataset
    train_cfg = variant.train_config(base.train, seed)
    model = build_model(variant.model_config(base.model), init_mode=train_cfg.init_mode, seed=seed)
    result = train(model, data, train_cfg, variant=variant.name)
    report = evaluate(result.model, data, variant=variant.name)
    mean = report.compensated.mean
    return AblationRow(
        variant=variant.name,
        seed=seed,
        psnr=mean.psnr,
        rmse=mean.rmse,
        ssim=mean.ssim,
        delta_e=mean.delta_e,
        uncompensated_psnr=report.uncompensated.mean.psnr,
        train_seconds=result.elapsed_seconds,
        n_train=data.n_train,
        params=model.count_params(),
    )


def ablate(
    base: RunConfig,
    dataset: SetupDataset,
    variants: Sequence[str],
    seeds: Optional[Sequence[int]] = None,
) -> list[AblationRow]:
    """
    Train and evaluate every requested variant once per seed.

    Args:
        base: Run configuration every variant starts from
        dataset: Setup shared by all variants
        variants: Variant or group names
        seeds: Training seeds; defaults to the base training seed

    Returns:
        One AblationRow per (variant, seed), variants in request order

    Raises:
        InvalidArgumentError: On unknown variant names or a training-set
            size larger than the dataset
    """
    resolved = resolve_variants(variants)
    for variant in resolved:
        if variant.n_train is not None and variant.n_train > dataset.n_train:
            raise InvalidArgumentError(
                "training-set size exceeds the dataset",
                variant=variant.name,
                available=dataset.n_train,
            )
    seed_list = list(seeds) if seeds else [base.train.seed]

    rows: list[AblationRow] = []
    for variant in resolved:
        for seed in seed_list:
            with LogContext(ablation_variant=variant.name, ablation_seed=seed):
                row = run_variant(base, dataset, variant, seed)
                logger.info("ablation_row", psnr=round(row.psnr, 4), delta_e=round(row.delta_e, 4))
            rows.append(row)
    return rows


class VariantSummary(BaseModel):
    """Medians over seeds for one variant."""

    model_config = ConfigDict(extra="forbid")

    variant: str
    seeds: int
    n_train: int
    params: int
    psnr: float
    rmse: float
    ssim: float
    delta_e: float
    train_seconds: float


def summarize(rows: Sequence[AblationRow]) -> list[VariantSummary]:
    """Median of every metric per variant, in first-seen order."""
    grouped: dict[str, list[AblationRow]] = {}
    for row in rows:
        grouped.setdefault(row.variant, []).append(row)
    summaries = []
    for name, group in grouped.items():
        medians = {m: float(np.median([getattr(r, m) for r in group])) for m in SUMMARY_METRICS}
        summaries.append(
            VariantSummary(
                variant=name,
                seeds=len(group),
                n_train=group[0].n_train,
                params=group[0].params,
                **medians,
            )
        )
    return summaries


def write_ablation_csv(rows: Sequence[AblationRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=ROW_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    return path


def _align(row: Sequence[str], widths: Sequence[int]) -> str:
    """Left-align the first column and right-align the rest."""
    cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
    return "  ".join(cells)


def render_table(summaries: Sequence[VariantSummary]) -> str:
    """
    Aligned text table of the medians.

    The last column holds the published full-resolution PSNR of the same
    variant where one exists, for orientation only.
    """
    header = (
        "variant",
        "seeds",
        "n_train",
        "params",
        "PSNR",
        "RMSE",
        "SSIM",
        "ΔE",
        "train_s",
        "ref_PSNR",
    )
    body = []
    for s in summaries:
        reference = VARIANT_REFERENCE.get(s.variant)
        body.append(
            (
                s.variant,
                str(s.seeds),
                str(s.n_train),
                str(s.params),
                f"{s.psnr:.4f}",
                f"{s.rmse:.4f}",
                f"{s.ssim:.4f}",
                f"{s.delta_e:.4f}",
                f"{s.train_seconds:.1f}",
                f"{reference.psnr:.4f}" if reference is not None else "-",
            )
        )
    widths = [max(len(row[i]) for row in (header, *body)) for i in range(len(header))]
    lines = [_align(row, widths) for row in (header, *body)]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
