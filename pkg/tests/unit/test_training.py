"""
Unit tests for the compensation model, training loop and checkpoints.

Tests:
- Model assembly and inference
- Training determinism, learning-rate schedule and divergence handling
- Checkpoint and iteration-log round trips
"""

import numpy as np
import pytest

from compenkit.core.exceptions import (
    DatasetError,
    InvalidArgumentError,
    InvalidShapeError,
    TrainingDivergedError,
)
from compenkit.core.schemas import ModelConfig, TrainConfig
from compenkit.tensor import Tensor, step_decay_lr
from compenkit.training import (
    build_model,
    compensate,
    count_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from compenkit.training.losses import combine, loss_components
from compenkit.training.reference import (
    DESK_TRAIN_SIZES,
    FINE_TUNE_DECAY_EVERY,
    FINE_TUNE_ITERS,
    FINE_TUNE_PAIRS,
    FULL_MODEL,
    UNCOMPENSATED,
    VARIANT_REFERENCE,
)
from compenkit.training.trainer import (
    BatchSampler,
    fine_tune_config,
    fine_tune_subset,
    read_iteration_log,
    write_iteration_log,
)


def _states_equal(a, b) -> bool:
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(np.array_equal(sa[k], sb[k]) for k in sa)


class TestModel:
    """Test model assembly and inference."""

    def test_default_parameter_count(self):
        assert count_params(build_model()) == 697_050

    def test_same_seed_same_weights(self, tiny_model_config):
        first = build_model(tiny_model_config, seed=3)

        assert _states_equal(first, build_model(tiny_model_config, seed=3))
        assert not _states_equal(first, build_model(tiny_model_config, seed=4))

    def test_normal_init_is_wider(self, tiny_model_config):
        scaled = build_model(tiny_model_config, init_mode="scaled")
        normal = build_model(tiny_model_config, init_mode="normal")

        normal_std = np.std(normal.ganet.refine.c2.weight.data)
        assert normal_std > np.std(scaled.ganet.refine.c2.weight.data)

    def test_compensate_shape_and_range(self, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config)

        out = compensate(model, tiny_dataset.test_prj, tiny_dataset.surface, batch_size=1)

        assert out.shape == tiny_dataset.test_prj.shape
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_compensate_accepts_single_images(self, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config)

        single = compensate(model, tiny_dataset.test_prj[0], tiny_dataset.surface[0])
        batched = compensate(model, tiny_dataset.test_prj[:1], tiny_dataset.surface)

        np.testing.assert_array_equal(single.data, batched.data)

    def test_compensate_batching_is_transparent(self, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config)
        images, surface = tiny_dataset.test_prj, tiny_dataset.surface

        np.testing.assert_allclose(
            compensate(model, images, surface, batch_size=1).data,
            compensate(model, images, surface, batch_size=8).data,
            atol=1e-5,
        )

    def test_compensate_rejects_bad_sizes(self, tiny_model_config, rng):
        model = build_model(tiny_model_config)
        surface = rng.uniform(size=(1, 3, 36, 36))
        with pytest.raises(InvalidShapeError, match=r"multiples of 4\*k = 8"):
            compensate(model, rng.uniform(size=(1, 3, 36, 36)), surface)
        with pytest.raises(InvalidShapeError):
            compensate(model, rng.uniform(size=(1, 3, 32, 32)), surface)
        with pytest.raises(InvalidShapeError):
            compensate(model, rng.uniform(size=(2, 3, 32, 32)), rng.uniform(size=(2, 3, 32, 32)))

    @pytest.mark.parametrize("seed", range(5))
    def test_every_parameter_receives_gradient(self, seed, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config, seed=seed)
        cam = Tensor(tiny_dataset.train_cam[:2])
        prj = Tensor(tiny_dataset.train_prj[:2])

        components = loss_components(model(cam, Tensor(tiny_dataset.surface)), prj)
        combine(components, ["l1", "l2", "ssim"]).backward()

        dead = [
            name
            for name, tensor in model.named_parameters()
            if tensor.grad is None or not np.any(tensor.grad)
        ]
        assert not dead


class TestBatchSampler:
    """Test seeded batch sampling."""

    def test_every_pair_seen_once_per_epoch(self):
        sampler = BatchSampler(count=6, batch=2, seed=0)
        epoch = np.concatenate([sampler.next() for _ in range(3)])

        assert sorted(epoch.tolist()) == list(range(6))

    def test_same_seed_same_batches(self):
        a = BatchSampler(count=5, batch=3, seed=9)
        b = BatchSampler(count=5, batch=3, seed=9)

        for _ in range(4):
            np.testing.assert_array_equal(a.next(), b.next())


class TestTrain:
    """Test the training loop."""

    def test_zero_iterations_leave_model_unchanged(self, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config)
        reference = build_model(tiny_model_config)

        result = train(model, tiny_dataset, TrainConfig(iters=0, batch=2))

        assert result.log == []
        assert result.final_loss is None
        assert _states_equal(model, reference)

    def test_full_batch_loss_decreases(self, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config)
        cfg = TrainConfig(iters=30, batch=4, lr=5e-3, log_every=10)

        result = train(model, tiny_dataset, cfg)

        assert len(result.log) == 30
        assert result.final_loss < result.initial_loss
        assert result.elapsed_seconds > 0.0

    def test_runs_are_reproducible(self, tiny_model_config, tiny_train_config, tiny_dataset):
        first = train(build_model(tiny_model_config), tiny_dataset, tiny_train_config)
        second = train(build_model(tiny_model_config), tiny_dataset, tiny_train_config)

        assert [r.loss for r in first.log] == [r.loss for r in second.log]
        assert _states_equal(first.model, second.model)

    def test_learning_rate_steps_down(self, tiny_model_config, tiny_dataset):
        cfg = TrainConfig(iters=5, batch=2, lr=1e-3, decay_factor=5.0, decay_every=2)

        result = train(build_model(tiny_model_config), tiny_dataset, cfg)

        lrs = [r.lr for r in result.log]
        assert lrs == pytest.approx([1e-3, 1e-3, 2e-4, 2e-4, 4e-5])

    def test_log_terms_add_up(self, tiny_model_config, tiny_train_config, tiny_dataset):
        result = train(build_model(tiny_model_config), tiny_dataset, tiny_train_config)

        for record in result.log:
            assert record.loss == pytest.approx(record.l1 + record.l2 + record.ssim_term, rel=1e-5)

    def test_loss_subset(self, tiny_model_config, tiny_dataset):
        cfg = TrainConfig(iters=2, batch=2, loss_terms=["l1"])

        result = train(build_model(tiny_model_config), tiny_dataset, cfg)

        assert all(r.loss == pytest.approx(r.l1) for r in result.log)

    def test_batch_larger_than_training_set(self, tiny_model_config, tiny_dataset):
        with pytest.raises(InvalidArgumentError):
            train(build_model(tiny_model_config), tiny_dataset, TrainConfig(iters=1, batch=5))

    def test_non_finite_loss_raises(
        self, mocker, tiny_model_config, tiny_dataset, metrics_exporter
    ):
        mocker.patch("compenkit.training.trainer.combine", return_value=Tensor(np.array(np.nan)))

        with pytest.raises(TrainingDivergedError) as excinfo:
            train(build_model(tiny_model_config), tiny_dataset, TrainConfig(iters=3, batch=2))

        assert excinfo.value.iteration == 0
        assert b'compenkit_errors_total{component="trainer",error_type="diverged"} 1.0' in (
            metrics_exporter.get_metrics()
        )

    def test_progress_recorded_in_metrics(
        self, tiny_model_config, tiny_train_config, tiny_dataset, metrics_exporter
    ):
        train(build_model(tiny_model_config), tiny_dataset, tiny_train_config)

        output = metrics_exporter.get_metrics()
        assert b'compenkit_training_iterations_total{variant="full"} 6.0' in output


class TestCheckpoints:
    """Test checkpoint persistence and warm starts."""

    def test_round_trip_is_bit_exact(self, tmp_path, tiny_model_config, tiny_dataset):
        model = build_model(tiny_model_config, seed=5)
        path = save_checkpoint(model, tmp_path / "ckpt" / "model.npz")

        loaded = load_checkpoint(path)

        assert loaded.config == model.config
        assert _states_equal(model, loaded)
        np.testing.assert_array_equal(
            compensate(model, tiny_dataset.test_prj, tiny_dataset.surface).data,
            compensate(loaded, tiny_dataset.test_prj, tiny_dataset.surface).data,
        )

    def test_warm_start_copies_weights(self, tmp_path, tiny_model_config, tiny_dataset):
        source = build_model(tiny_model_config, seed=1)
        path = save_checkpoint(source, tmp_path / "source.npz")
        target = build_model(tiny_model_config, seed=2)

        train(target, tiny_dataset, TrainConfig(iters=0, batch=2, init_from=path))

        assert _states_equal(source, target)

    def test_warm_start_needs_matching_architecture(
        self, tmp_path, tiny_model_config, tiny_dataset
    ):
        path = save_checkpoint(build_model(tiny_model_config), tmp_path / "source.npz")
        wider = ModelConfig(k=2, refine_widths=(4, 4, 6, 6, 6, 6), panet_widths=(4, 6, 10))
        other = build_model(wider)

        with pytest.raises((InvalidArgumentError, InvalidShapeError)):
            train(other, tiny_dataset, TrainConfig(iters=0, batch=2, init_from=path))

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(DatasetError):
            load_checkpoint(tmp_path / "absent.npz")

    def test_checkpoint_without_metadata(self, tmp_path):
        path = tmp_path / "bare.npz"
        np.savez(path, weight=np.zeros(3))
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)


class TestIterationLog:
    """Test the per-iteration CSV log."""

    def test_round_trip(self, tmp_path, tiny_model_config, tiny_train_config, tiny_dataset):
        result = train(build_model(tiny_model_config), tiny_dataset, tiny_train_config)
        path = write_iteration_log(result.log, tmp_path / "model_log.csv")

        assert read_iteration_log(path) == result.log

    def test_header(self, tmp_path):
        path = write_iteration_log([], tmp_path / "empty.csv")
        assert path.read_text().splitlines() == ["iter,loss,l1,l2,ssim_term,lr"]


class TestReferenceFigures:
    """Test the recorded full-resolution reference figures."""

    def test_full_model_beats_uncompensated(self):
        assert FULL_MODEL.psnr > UNCOMPENSATED.psnr
        assert FULL_MODEL.delta_e < UNCOMPENSATED.delta_e
        assert VARIANT_REFERENCE["full"].psnr == VARIANT_REFERENCE["l1+l2+ssim"].psnr

    def test_smallest_sweep_size_matches_fine_tuning(self):
        assert DESK_TRAIN_SIZES[0] == FINE_TUNE_PAIRS


class TestFineTune:
    """Test the warm-start fine-tuning preset."""

    def test_schedule(self, tmp_path):
        cfg = fine_tune_config(TrainConfig(batch=4, lr=2e-3), tmp_path / "source.npz")

        assert cfg.iters == FINE_TUNE_ITERS
        assert cfg.decay_every == FINE_TUNE_DECAY_EVERY
        assert cfg.init_from == tmp_path / "source.npz"
        assert cfg.lr == 2e-3
        assert cfg.batch == 4
        assert step_decay_lr(cfg.lr, cfg.decay_factor, cfg.decay_every, FINE_TUNE_DECAY_EVERY) == (
            pytest.approx(cfg.lr / 5.0)
        )

    def test_batch_capped_at_fine_tune_pairs(self, tmp_path):
        cfg = fine_tune_config(TrainConfig(batch=FINE_TUNE_PAIRS + 4), tmp_path / "source.npz")
        assert cfg.batch == FINE_TUNE_PAIRS

    def test_subset_keeps_leading_pairs(self, tiny_dataset):
        subset = fine_tune_subset(tiny_dataset)

        assert subset.n_train == min(FINE_TUNE_PAIRS, tiny_dataset.n_train)
        np.testing.assert_array_equal(subset.train_cam, tiny_dataset.train_cam[: subset.n_train])
        np.testing.assert_array_equal(subset.test_prj, tiny_dataset.test_prj)

    def test_fine_tune_run(self, tmp_path, tiny_model_config, tiny_dataset):
        source = save_checkpoint(build_model(tiny_model_config, seed=1), tmp_path / "source.npz")
        cfg = fine_tune_config(TrainConfig(batch=2), source).model_copy(update={"iters": 2})
        model = build_model(tiny_model_config, seed=2)

        result = train(model, fine_tune_subset(tiny_dataset), cfg)

        assert len(result.log) == 2
        assert result.log[0].lr == cfg.lr
