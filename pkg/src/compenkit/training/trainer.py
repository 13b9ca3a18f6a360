"""
Training loop.

Each step draws a batch of training pairs, predicts the projector inputs
from their captures and the surface image, and minimizes the selected loss
terms with Adam under a step learning-rate decay. Batches come from a
seeded permutation of the training pairs, so a run is reproducible from its
TrainConfig alone.
"""

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, NonFiniteError, TrainingDivergedError
from compenkit.core.logging import LogContext, get_logger, log_performance
from compenkit.core.schemas import IterationRecord, TrainConfig
from compenkit.services.metrics_exporter import get_metrics_exporter
from compenkit.simulator.dataset import SetupDataset
from compenkit.tensor import Adam, Tensor, step_decay_lr
from compenkit.training.losses import combine, loss_components
from compenkit.training.model import CompensationModel, read_checkpoint
from compenkit.training.reference import (
    FINE_TUNE_DECAY_EVERY,
    FINE_TUNE_ITERS,
    FINE_TUNE_PAIRS,
)

logger = get_logger(__name__)

LOG_COLUMNS = ("iter", "loss", "l1", "l2", "ssim_term", "lr")


@dataclass
class TrainResult:
    """Trained model, per-iteration log and timing."""

    model: CompensationModel
    log: list[IterationRecord] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def final_loss(self) -> Optional[float]:
        return self.log[-1].loss if self.log else None

    @property
    def initial_loss(self) -> Optional[float]:
        return self.log[0].loss if self.log else None


class BatchSampler:
    """Walks seeded permutations of the training indices, one batch at a time."""

    def __init__(self, count: int, batch: int, seed: int):
        self.count = count
        self.batch = batch
        self.rng = np.random.default_rng((seed, 1))
        self._order = np.empty(0, dtype=np.intp)

    def next(self) -> np.ndarray:
        if self._order.size < self.batch:
            self._order = np.concatenate([self._order, self.rng.permutation(self.count)])
        picked, self._order = self._order[: self.batch], self._order[self.batch :]
        return picked


def warm_start(model: CompensationModel, checkpoint: Union[str, Path]) -> None:
    """Copy parameters of a checkpoint with the same architecture into ``model``."""
    _, arrays = read_checkpoint(checkpoint)
    model.load_state_dict(arrays)
    logger.info("warm_start_loaded", path=str(checkpoint))


def fine_tune_config(cfg: TrainConfig, init_from: Union[str, Path]) -> TrainConfig:
    """
    Turn ``cfg`` into the warm-start fine-tuning schedule.

    Fine-tuning starts from a checkpoint trained on another setup and runs
    FINE_TUNE_ITERS iterations with the learning rate divided every
    FINE_TUNE_DECAY_EVERY. The batch is capped at FINE_TUNE_PAIRS so that
    it fits the reduced training set of ``fine_tune_subset``.
    """
    return TrainConfig.model_validate(
        {
            **cfg.model_dump(),
            "init_from": Path(init_from),
            "iters": FINE_TUNE_ITERS,
            "decay_every": FINE_TUNE_DECAY_EVERY,
            "batch": min(cfg.batch, FINE_TUNE_PAIRS),
        }
    )


def fine_tune_subset(dataset: SetupDataset) -> SetupDataset:
    """The first FINE_TUNE_PAIRS training pairs, or all of them if there are fewer."""
    return dataset.subset(min(FINE_TUNE_PAIRS, dataset.n_train))


def train(
    model: CompensationModel,
    dataset: SetupDataset,
    cfg: TrainConfig,
    variant: str = "full",
) -> TrainResult:
    """
    Fit the model to the training pairs of a setup.

    Args:
        model: Model to train in place
        dataset: Setup with surface capture and training pairs
        cfg: Optimizer schedule, batch size and loss terms
        variant: Label used in logs and metrics

    Returns:
        TrainResult with one IterationRecord per iteration

    Raises:
        InvalidArgumentError: If the dataset has fewer pairs than the batch size
        TrainingDivergedError: If the loss or any activation becomes non-finite
    """
    if dataset.n_train == 0:
        raise InvalidArgumentError("training set is empty")
    if dataset.n_train < cfg.batch:
        raise InvalidArgumentError(
            "training set is smaller than the batch", n_train=dataset.n_train, batch=cfg.batch
        )
    if cfg.init_from is not None:
        warm_start(model, cfg.init_from)

    dtype = model.ganet.affine.theta.dtype
    surface = Tensor(dataset.surface, dtype=dtype)
    optimizer = Adam(model.parameters(), lr=cfg.lr, betas=cfg.adam_betas, eps=cfg.adam_eps)
    sampler = BatchSampler(dataset.n_train, cfg.batch, cfg.seed)
    exporter = get_metrics_exporter()
    result = TrainResult(model=model)

    start = time.perf_counter()
    with LogContext(variant=variant, train_seed=cfg.seed):
        logger.info(
            "training_started",
            iters=cfg.iters,
            batch=cfg.batch,
            n_train=dataset.n_train,
            loss_terms=list(cfg.loss_terms),
            params=model.count_params(),
        )
        for it in range(cfg.iters):
            step_start = time.perf_counter()
            lr = step_decay_lr(cfg.lr, cfg.decay_factor, cfg.decay_every, it)
            optimizer.lr = lr
            idx = sampler.next()
            cam = Tensor(dataset.train_cam[idx], dtype=dtype)
            prj = Tensor(dataset.train_prj[idx], dtype=dtype)

            optimizer.zero_grad()
            try:
                components = loss_components(model(cam, surface), prj)
                total = combine(components, cfg.loss_terms)
                value = total.item()
                if not np.isfinite(value):
                    raise NonFiniteError("loss is not finite", value=value)
                total.backward()
            except NonFiniteError as exc:
                exporter.record_error("trainer", "diverged")
                raise TrainingDivergedError("training diverged", iteration=it) from exc
            optimizer.step()

            record = IterationRecord(
                iter=it,
                loss=value,
                l1=components["l1"].item(),
                l2=components["l2"].item(),
                ssim_term=components["ssim"].item(),
                lr=lr,
            )
            result.log.append(record)
            exporter.record_iteration(value, lr, time.perf_counter() - step_start, variant)
            if it % cfg.log_every == 0 or it == cfg.iters - 1:
                logger.info("training_progress", iteration=it, loss=round(value, 6), lr=lr)

        result.elapsed_seconds = time.perf_counter() - start
        log_performance(
            logger,
            "training",
            duration_ms=result.elapsed_seconds * 1000.0,
            iters=cfg.iters,
            final_loss=result.final_loss,
        )
    return result


def write_iteration_log(records: list[IterationRecord], path: Union[str, Path]) -> Path:
    """Write the iteration log as CSV with columns iter, loss, l1, l2, ssim_term, lr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(LOG_COLUMNS)
        for record in records:
            values = (record.loss, record.l1, record.l2, record.ssim_term, record.lr)
            writer.writerow([record.iter, *(repr(v) for v in values)])
    return path


def read_iteration_log(path: Union[str, Path]) -> list[IterationRecord]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return [
            IterationRecord(
                iter=int(row["iter"]),
                loss=float(row["loss"]),
                l1=float(row["l1"]),
                l2=float(row["l2"]),
                ssim_term=float(row["ssim_term"]),
                lr=float(row["lr"]),
            )
            for row in csv.DictReader(handle)
        ]
