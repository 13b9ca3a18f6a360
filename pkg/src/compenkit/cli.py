"""
Command-line interface.

Verbs: ``gen`` renders a synthetic setup, ``train`` fits a model to it,
``compensate`` computes projector inputs for images, ``eval`` measures a
checkpoint in closed loop, ``ablate`` compares variants and ``gradcheck``
verifies every analytic gradient.

Exit codes: 0 success, 1 failed gradient check, 2 usage, configuration or
input error, 3 training diverged.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Optional, TypeVar

from pydantic import BaseModel, ValidationError
from threadpoolctl import threadpool_limits

from compenkit import __version__
from compenkit.core.config import RunConfig, get_settings, load_run_config
from compenkit.core.exceptions import CompenKitError, InvalidArgumentError, TrainingDivergedError
from compenkit.core.logging import get_logger, log_error, setup_logging
from compenkit.services.gradcheck_suite import DEFAULT_MAX_SAMPLES, PRECISIONS, SCOPES, run_suite
from compenkit.services.metrics_exporter import get_metrics_exporter
from compenkit.simulator.dataset import gen_dataset, load_dataset
from compenkit.simulator.imageio import load_image_directory, read_png, write_png
from compenkit.simulator.patterns import sampling_images
from compenkit.simulator.scene import gen_setup, ideal_setup
from compenkit.training.ablation import ablate, render_table, summarize, write_ablation_csv
from compenkit.training.evaluation import evaluate, summary_line, write_metrics_csv
from compenkit.training.model import build_model, compensate, load_checkpoint, save_checkpoint
from compenkit.training.reference import (
    FINE_TUNE_DECAY_EVERY,
    FINE_TUNE_ITERS,
    FINE_TUNE_PAIRS,
    FULL_MODEL,
    UNCOMPENSATED,
)
from compenkit.training.trainer import (
    fine_tune_config,
    fine_tune_subset,
    train,
    write_iteration_log,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

M = TypeVar("M", bound=BaseModel)


def _override(model: M, **updates: Any) -> M:
    """Revalidate ``model`` with every non-None update applied."""
    changes = {key: value for key, value in updates.items() if value is not None}
    if not changes:
        return model
    return type(model).model_validate({**model.model_dump(), **changes})


# -- commands ----------------------------------------------------------------


def cmd_gen(
    seed: int,
    size: int,
    n_train: int,
    n_test: int,
    out_dir: Path,
    noise_sigma: Optional[float] = None,
    noiseless: bool = False,
    images_dir: Optional[Path] = None,
    k: int = 2,
    surface_probe: float = 0.5,
    ideal: bool = False,
) -> Path:
    """Render a setup into ``out_dir`` and return the manifest path."""
    shape = (size, size)
    if ideal:
        scene = ideal_setup(shape, seed=seed)
    else:
        scene = gen_setup(seed, shape, noise_sigma=noise_sigma, noiseless=noiseless)
    count = n_train + n_test
    if images_dir is not None:
        images = load_image_directory(images_dir, count, shape)
    else:
        images = sampling_images(seed, count, shape)
    gen_dataset(scene, images, n_train, n_test, out_dir, k=k, surface_probe=surface_probe)
    return Path(out_dir) / "manifest.json"


def cmd_train(
    config: RunConfig, dataset_dir: Path, checkpoint: Path, fine_tune: bool = False
) -> tuple[Path, float, float]:
    """
    Train on a setup directory and write the checkpoint and its iteration log.

    The log goes next to the checkpoint as ``<stem>_log.csv``. With
    ``fine_tune`` only the first few training pairs of the setup are used.

    Returns:
        (checkpoint path, final loss, elapsed seconds); the loss is NaN when
        zero iterations were requested
    """
    dataset = load_dataset(dataset_dir)
    if fine_tune:
        dataset = fine_tune_subset(dataset)
    model_cfg = _override(config.model, k=dataset.k)
    model = build_model(model_cfg, init_mode=config.train.init_mode, seed=config.train.seed)
    result = train(model, dataset, config.train)
    save_checkpoint(result.model, checkpoint)
    write_iteration_log(result.log, iteration_log_path(checkpoint))
    final = result.final_loss if result.final_loss is not None else float("nan")
    return Path(checkpoint), final, result.elapsed_seconds


def iteration_log_path(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(f"{checkpoint.stem}_log.csv")


def cmd_compensate(
    checkpoint: Path, inputs: Sequence[Path], surface: Path, out_dir: Path
) -> list[Path]:
    """Write one compensated PNG per input, named like the input."""
    model = load_checkpoint(checkpoint)
    surface_image = read_png(surface)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in inputs:
        desired = read_png(path)
        projected = compensate(model, desired, surface_image).data[0]
        written.append(write_png(out_dir / f"{Path(path).stem}.png", projected))
    logger.info("compensation_written", count=len(written), out_dir=str(out_dir))
    return written


def cmd_eval(checkpoint: Path, dataset_dir: Path, report: Path) -> list[str]:
    """
    Evaluate a checkpoint, write the metrics CSV and return the summary lines.

    The last two lines repeat the published full-resolution figures measured
    on real rigs, for orientation only.
    """
    model = load_checkpoint(checkpoint)
    dataset = load_dataset(dataset_dir)
    result = evaluate(model, dataset)
    write_metrics_csv(result, report)
    return [
        f"compensated    {summary_line(result.compensated.mean)}",
        f"uncompensated  {summary_line(result.uncompensated.mean)}",
        f"published compensated    {summary_line(FULL_MODEL)}",
        f"published uncompensated  {summary_line(UNCOMPENSATED)}",
    ]


def cmd_ablate(
    config: RunConfig,
    dataset_dir: Path,
    variants: Sequence[str],
    seeds: Optional[Sequence[int]],
    out_dir: Path,
) -> str:
    """Run the ablation, write ``ablation.csv`` and ``ablation.txt`` and return the table."""
    dataset = load_dataset(dataset_dir)
    base = config.model_copy(update={"model": _override(config.model, k=dataset.k)})
    rows = ablate(base, dataset, variants, seeds)
    table = render_table(summarize(rows))
    out_dir = Path(out_dir)
    write_ablation_csv(rows, out_dir / "ablation.csv")
    (out_dir / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    return table


def cmd_gradcheck(
    scope: str, seeds: int, max_samples: int, precision: str = "both"
) -> tuple[list[str], bool]:
    results = run_suite(scope, seeds=range(seeds), max_samples=max_samples, precision=precision)
    lines = [
        f"{r.op:<18} {r.precision:<6} max_rel_err={r.max_error:.3e}  "
        f"{'ok' if r.passed else 'FAIL'}"
        for r in results
    ]
    return lines, all(r.passed for r in results)


# -- argument handling -------------------------------------------------------


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config) if args.config is not None else RunConfig()
    if args.seed is not None:
        config = config.model_copy(
            update={"seed": args.seed, "train": _override(config.train, seed=args.seed)}
        )
    return config


def _require(value: Optional[Path], flag: str) -> Path:
    if value is None:
        raise InvalidArgumentError(f"{flag} is required (or set it in the run config)")
    return value


def _run_gen(args: argparse.Namespace, config: RunConfig) -> int:
    sim = _override(
        config.simulator,
        size=args.size,
        n_train=args.train,
        n_test=args.test,
        noise_sigma=args.noise_sigma,
        noiseless=args.noiseless or None,
    )
    out_dir = _require(args.out or config.dataset_dir, "--out")
    manifest = cmd_gen(
        config.seed,
        sim.size,
        sim.n_train,
        sim.n_test,
        out_dir,
        noise_sigma=sim.noise_sigma,
        noiseless=sim.noiseless,
        images_dir=args.images,
        k=config.model.k,
        surface_probe=sim.surface_probe,
        ideal=args.ideal,
    )
    print(manifest)
    return EXIT_OK


def _run_train(args: argparse.Namespace, config: RunConfig) -> int:
    train_cfg = config.train
    if args.fine_tune:
        init_from = _require(args.init_from or train_cfg.init_from, "--init-from")
        train_cfg = fine_tune_config(train_cfg, init_from)
    train_cfg = _override(
        train_cfg, iters=args.iters, batch=args.batch, lr=args.lr, init_from=args.init_from
    )
    config = config.model_copy(update={"train": train_cfg})
    dataset_dir = _require(args.dataset or config.dataset_dir, "--dataset")
    checkpoint = _require(args.out or config.checkpoint, "--out")
    path, final_loss, elapsed = cmd_train(config, dataset_dir, checkpoint, args.fine_tune)
    print(f"checkpoint {path}")
    print(f"final_loss {final_loss:.6f} elapsed {elapsed:.1f}s")
    return EXIT_OK


def _run_compensate(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _require(args.checkpoint or config.checkpoint, "--checkpoint")
    out_dir = _require(args.out or config.output_dir, "--out")
    for path in cmd_compensate(checkpoint, args.inputs, args.surface, out_dir):
        print(path)
    return EXIT_OK


def _run_eval(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _require(args.checkpoint or config.checkpoint, "--checkpoint")
    dataset_dir = _require(args.dataset or config.dataset_dir, "--dataset")
    report = args.out
    if report is None:
        report = (config.output_dir or Path(checkpoint).parent) / "metrics.csv"
    for line in cmd_eval(checkpoint, dataset_dir, report):
        print(line)
    return EXIT_OK


def _run_ablate(args: argparse.Namespace, config: RunConfig) -> int:
    config = config.model_copy(update={"train": _override(config.train, iters=args.iters)})
    dataset_dir = _require(args.dataset or config.dataset_dir, "--dataset")
    out_dir = _require(args.out or config.output_dir, "--out")
    print(cmd_ablate(config, dataset_dir, args.variants, args.seeds, out_dir))
    return EXIT_OK


def _run_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    lines, passed = cmd_gradcheck(args.scope, args.seeds, args.max_samples, args.precision)
    for line in lines:
        print(line)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append real defaults only; flags left unset fall back to the run config."""

    def _get_help_string(self, action: argparse.Action) -> str:
        if action.default is None or action.default is False:
            return action.help or ""
        return super()._get_help_string(action) or ""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="Override the run and training seed")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="BLAS thread limit; falls back to COMPENKIT_THREADS",
    )
    common.add_argument(
        "--log-level", default=None, help="Log level; falls back to COMPENKIT_LOG_LEVEL"
    )
    common.add_argument(
        "--metrics-out", type=Path, default=None, help="Write Prometheus metrics to this textfile"
    )

    fmt = _HelpFormatter
    defaults = RunConfig()
    parser = argparse.ArgumentParser(prog="compenkit", description=__doc__, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser(
        "gen", parents=[common], formatter_class=fmt, help="Render a synthetic setup"
    )
    gen.add_argument(
        "--size",
        type=int,
        default=None,
        help=f"Square image side, a multiple of 4*k (config: {defaults.simulator.size})",
    )
    gen.add_argument(
        "--train",
        type=int,
        default=None,
        help=f"Training pairs (config: {defaults.simulator.n_train})",
    )
    gen.add_argument(
        "--test", type=int, default=None, help=f"Test pairs (config: {defaults.simulator.n_test})"
    )
    gen.add_argument("-o", "--out", type=Path, default=None, help="Output directory")
    gen.add_argument("--images", type=Path, default=None, help="Use photos from this directory")
    gen.add_argument("--noise-sigma", type=float, default=None, help="Camera noise std override")
    gen.add_argument("--noiseless", action="store_true", help="Disable camera noise")
    gen.add_argument("--ideal", action="store_true", help="Identity simulator without distortion")
    gen.set_defaults(handler=_run_gen)

    tr = sub.add_parser("train", parents=[common], formatter_class=fmt, help="Train a model")
    tr.add_argument("--dataset", type=Path, default=None, help="Setup directory")
    tr.add_argument("-o", "--out", type=Path, default=None, help="Checkpoint path (.npz)")
    tr.add_argument(
        "--iters", type=int, default=None, help=f"Iterations (config: {defaults.train.iters})"
    )
    tr.add_argument(
        "--batch", type=int, default=None, help=f"Batch size (config: {defaults.train.batch})"
    )
    tr.add_argument(
        "--lr",
        type=float,
        default=None,
        help=f"Initial learning rate (config: {defaults.train.lr})",
    )
    tr.add_argument("--init-from", type=Path, default=None, help="Warm-start checkpoint")
    tr.add_argument(
        "--fine-tune",
        action="store_true",
        help=(
            f"Fine-tune the --init-from checkpoint on the first {FINE_TUNE_PAIRS} training pairs "
            f"for {FINE_TUNE_ITERS} iterations, lr decay every {FINE_TUNE_DECAY_EVERY}"
        ),
    )
    tr.set_defaults(handler=_run_train)

    comp = sub.add_parser(
        "compensate", parents=[common], formatter_class=fmt, help="Compensate images"
    )
    comp.add_argument(
        "inputs",
        type=Path,
        nargs="+",
        help="Desired images, same size as the surface; sides must be multiples of 4*k",
    )
    comp.add_argument("--checkpoint", type=Path, default=None, help="Trained checkpoint")
    comp.add_argument("--surface", type=Path, required=True, help="Surface capture PNG")
    comp.add_argument("-o", "--out", type=Path, default=None, help="Output directory")
    comp.set_defaults(handler=_run_compensate)

    ev = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="Evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=Path, default=None, help="Trained checkpoint")
    ev.add_argument("--dataset", type=Path, default=None, help="Setup directory")
    ev.add_argument("-o", "--out", type=Path, default=None, help="Metrics CSV path")
    ev.set_defaults(handler=_run_eval)

    ab = sub.add_parser("ablate", parents=[common], formatter_class=fmt, help="Compare variants")
    ab.add_argument("--dataset", type=Path, default=None, help="Setup directory")
    ab.add_argument(
        "--variants", nargs="+", default=["attention"], help="Variant or group names"
    )
    ab.add_argument(
        "--seeds", type=int, nargs="+", default=None, help="Training seeds (config: train seed)"
    )
    ab.add_argument(
        "--iters",
        type=int,
        default=None,
        help=f"Iterations per variant (config: {defaults.train.iters})",
    )
    ab.add_argument("-o", "--out", type=Path, default=None, help="Output directory")
    ab.set_defaults(handler=_run_ablate)

    gc = sub.add_parser(
        "gradcheck", parents=[common], formatter_class=fmt, help="Check analytic gradients"
    )
    gc.add_argument("--scope", default="all", help=f"One of {', '.join(SCOPES)} or an op name")
    gc.add_argument("--seeds", type=int, default=10, help="Random problems per op")
    gc.add_argument(
        "--max-samples", type=int, default=DEFAULT_MAX_SAMPLES, help="Coordinates checked per input"
    )
    gc.add_argument(
        "--precision",
        choices=[*PRECISIONS, "both"],
        default="both",
        help="Analytic pass in float64, float32 or both",
    )
    gc.set_defaults(handler=_run_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level=args.log_level)
    threads = args.threads if args.threads is not None else get_settings().threads

    try:
        config = _load_config(args)
        with threadpool_limits(limits=threads):
            code = args.handler(args, config)
    except TrainingDivergedError as exc:
        log_error(logger, exc, "command_failed", command=args.command)
        print(f"error: {exc} at iteration {exc.iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CompenKitError, ValidationError, OSError) as exc:
        log_error(logger, exc, "command_failed", command=args.command)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.metrics_out is not None:
        get_metrics_exporter().write_textfile(args.metrics_out)
    return code


if __name__ == "__main__":
    sys.exit(main())
