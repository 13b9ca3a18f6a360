"""Unit tests for the ablation harness."""

import csv

import pytest

from compenkit.core.config import RunConfig
from compenkit.core.exceptions import InvalidArgumentError
from compenkit.core.schemas import TrainConfig
from compenkit.training import ablate, render_table, resolve_variants, summarize
from compenkit.training.ablation import (
    GROUPS,
    AblationRow,
    get_variant,
    write_ablation_csv,
)


def _row(variant: str, seed: int, psnr: float) -> AblationRow:
    return AblationRow(
        variant=variant,
        seed=seed,
        psnr=psnr,
        rmse=0.1,
        ssim=0.5,
        delta_e=5.0 + seed,
        uncompensated_psnr=12.0,
        train_seconds=1.0,
        n_train=4,
        params=100,
    )


@pytest.fixture
def base_config(tiny_model_config):
    return RunConfig(model=tiny_model_config, train=TrainConfig(iters=2, batch=2))


class TestVariants:
    """Test variant lookup and group expansion."""

    def test_group_sizes(self):
        assert len(resolve_variants(["attention"])) == 4
        assert len(resolve_variants(["refinement"])) == 3
        assert len(resolve_variants(["loss"])) == 7

    def test_repeats_dropped_in_order(self):
        names = [v.name for v in resolve_variants(["no_p2", "attention", "coarse_only"])]
        assert names == ["no_p2", "full", "no_p1", "no_p1p2", "coarse_only"]

    def test_model_overrides(self, tiny_model_config):
        config = get_variant("no_p1p2").model_config(tiny_model_config)

        assert not config.use_p1 and not config.use_p2
        assert config.panet_widths == tiny_model_config.panet_widths

    def test_loss_variant_sets_terms_and_seed(self):
        cfg = get_variant("l1+ssim").train_config(TrainConfig(iters=3), seed=11)

        assert cfg.loss_terms == ["l1", "ssim"]
        assert cfg.seed == 11
        assert cfg.iters == 3

    def test_train_size_names(self):
        assert get_variant("train-6").n_train == 6
        assert [v.n_train for v in resolve_variants(["train_size"])] == [8, 16, 24, 32]
        assert GROUPS["train_size"][0] == "train-8"

    @pytest.mark.parametrize("name", ["no_such_variant", "train-0", "train-x", ""])
    def test_unknown_names(self, name):
        with pytest.raises(InvalidArgumentError):
            resolve_variants([name])

    def test_nothing_requested(self):
        with pytest.raises(InvalidArgumentError):
            resolve_variants([])


class TestAblate:
    """Test training and evaluating variants."""

    def test_one_row_per_variant_and_seed(self, base_config, tiny_dataset):
        rows = ablate(base_config, tiny_dataset, ["full", "no_p2"], seeds=[0, 1])

        assert [(r.variant, r.seed) for r in rows] == [
            ("full", 0),
            ("full", 1),
            ("no_p2", 0),
            ("no_p2", 1),
        ]
        assert rows[0].params > rows[2].params

    def test_train_size_variant_uses_subset(self, base_config, tiny_dataset):
        (row,) = ablate(base_config, tiny_dataset, ["train-2"])

        assert row.n_train == 2
        assert row.seed == base_config.train.seed

    def test_train_size_larger_than_dataset(self, base_config, tiny_dataset):
        with pytest.raises(InvalidArgumentError):
            ablate(base_config, tiny_dataset, ["train-8"])

    def test_rows_written_as_csv(self, tmp_path, base_config, tiny_dataset):
        rows = ablate(base_config, tiny_dataset, ["coarse_only"])
        path = write_ablation_csv(rows, tmp_path / "ablation.csv")

        with path.open(newline="") as handle:
            records = list(csv.DictReader(handle))

        assert len(records) == 1
        assert records[0]["variant"] == "coarse_only"
        assert int(records[0]["params"]) == rows[0].params


class TestSummary:
    """Test medians and the text table."""

    def test_median_over_seeds(self):
        rows = [_row("full", 0, 10.0), _row("full", 1, 30.0), _row("full", 2, 14.0)]

        (summary,) = summarize(rows)

        assert summary.seeds == 3
        assert summary.psnr == pytest.approx(14.0)
        assert summary.delta_e == pytest.approx(6.0)

    def test_variants_keep_first_seen_order(self):
        rows = [_row("no_p1", 0, 1.0), _row("full", 0, 2.0), _row("no_p1", 1, 3.0)]
        assert [s.variant for s in summarize(rows)] == ["no_p1", "full"]

    def test_table_shows_reference_psnr(self):
        table = render_table(summarize([_row("full", 0, 18.5), _row("train-4", 0, 15.0)]))
        lines = table.splitlines()

        assert lines[0].startswith("variant")
        assert set(lines[1]) <= {"-", " "}
        assert "20.9468" in lines[2]
        assert lines[3].rstrip().endswith("-")
        assert len({len(line) for line in lines}) == 1
