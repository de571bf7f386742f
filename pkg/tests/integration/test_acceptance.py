"""
Trend checks on synthetic auto-encoders, mostly at the desk architecture.

These train real networks for a while; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest

from application.dto.grid_dto import GridSpec
from application.dto.training_dto import (
    DESK_ARCHITECTURE,
    DatasetSpec,
    SyntheticSpec,
    TrainConfig,
)
from application.use_cases.diagnostics_use_cases import DiagnosticsUseCases
from application.use_cases.training_use_cases import TrainingUseCases
from infrastructure.repositories.dataset_repository_impl import FileDatasetRepository
from tests.conftest import (
    InMemoryCheckpointRepository,
    InMemoryMetricsRepository,
    InMemoryReportRepository,
)

pytestmark = [pytest.mark.integration, pytest.mark.slow]

SEEDS = [0, 1, 2]
DESK_EXAMPLES = 5000
TUNING_VALUES = [1e-1, 1e-2, 1e-3, 1e-4]
# 100 -> 30, the layer feeding the code
BOTTLENECK_LAYER = 2


def _synthetic(n, dim, latent_dim, seed=0):
    return DatasetSpec(
        kind="synthetic",
        synthetic=SyntheticSpec(n=n, dim=dim, latent_dim=latent_dim, seed=seed),
    )


@pytest.fixture
def training():
    """Training use cases on generated data with a real clock."""
    return TrainingUseCases(
        FileDatasetRepository(),
        InMemoryMetricsRepository(),
        InMemoryCheckpointRepository(),
        InMemoryReportRepository(),
    )


@pytest.fixture
def diagnostics(training):
    return DiagnosticsUseCases(
        training, training.checkpoint_repository, training.report_repository
    )


class TestOptimizationTrends:
    """Loss curves of tuned runs."""

    def test_sgd_loss_decreases(self, training):
        """Test SGD lowers the training loss in at least 90% of epochs."""
        config = TrainConfig(
            optimizer="sgd",
            lr=0.2,
            batch_size=20,
            epochs=30,
            dataset=_synthetic(200, 16, 3),
            architecture=[16, 8, 16],
            out="sgd.jsonl",
            single_thread=True,
        )

        training.run_training(config)

        records = training.metrics_repository.read("sgd.jsonl")
        losses = [record["train_loss"] for record in records]
        decreasing = sum(b < a for a, b in zip(losses, losses[1:]))
        assert decreasing >= 0.9 * (len(losses) - 1)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_ekfac_beats_amortized_kfac(self, training, seed):
        """Test per-epoch-best EKFAC loss is at most KFAC's in 70% of epochs 5-30."""
        base = {
            "batch_size": 200,
            "refresh_every_n": 50,
            "epochs": 30,
            "seed": seed,
            "dataset": _synthetic(DESK_EXAMPLES, 784, 30, seed=seed),
            "architecture": DESK_ARCHITECTURE,
            "out": f"grid-{seed}",
        }
        grid = GridSpec(
            axes={
                "optimizer": ["ekfac", "kfac"],
                "lr": TUNING_VALUES,
                "damping": TUNING_VALUES,
            },
            jobs=4,
        )

        summary = training.run_grid(base, grid)

        best = {
            (row.optimizer.value, row.epoch): row.train_loss
            for row in summary.per_epoch_best
        }
        epochs = range(5, 31)
        wins = sum(best[("ekfac", e)] <= best[("kfac", e)] for e in epochs)
        assert wins >= 0.7 * len(epochs)

    def test_amortized_running_average_is_cheaper(self, training):
        """Test EKFAC-ra refreshing every 50 steps costs under 40% of refresh 1."""
        dataset = _synthetic(DESK_EXAMPLES, 784, 30)

        def run(optimizer, refresh_every_n, out):
            config = TrainConfig(
                optimizer=optimizer,
                lr=0.01,
                damping=1e-2,
                batch_size=200,
                refresh_every_n=refresh_every_n,
                epochs=4,
                dataset=dataset,
                architecture=DESK_ARCHITECTURE,
                out=out,
                single_thread=True,
            )
            result = training.run_training(config)
            assert result.status == "ok"
            return result

        amortized = run("ekfac-ra", 50, "ra.jsonl")
        every_step = run("ekfac", 1, "ekfac.jsonl")

        assert amortized.iterations == every_step.iterations == 100
        assert amortized.refresh_iterations == [0, 50]
        assert amortized.final.phase_counts["basis_refresh"] == 2
        assert every_step.refresh_iterations == list(range(100))
        assert every_step.final.phase_counts["basis_refresh"] == 100
        per_step = [
            r.final.wall_clock_seconds / r.iterations for r in (amortized, every_step)
        ]
        assert per_step[0] < 0.4 * per_step[1]


class TestCurvatureTrends:
    """Fit of the curvature approximations along training."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_frozen_kfac_spectrum_drifts(self, diagnostics, seed):
        """Test EKFAC tracks the bottleneck spectrum better than frozen KFAC."""
        config = TrainConfig(
            optimizer="ekfac",
            lr=0.01,
            damping=1e-2,
            batch_size=200,
            refresh_every_n=50,
            epochs=30,
            seed=seed,
            dataset=_synthetic(DESK_EXAMPLES, 784, 30, seed=seed),
            architecture=DESK_ARCHITECTURE,
            out=f"spectrum-{seed}.jsonl",
            oracle_max_params=4096,
            single_thread=True,
        )
        iterations_per_epoch = DESK_EXAMPLES // 200

        result, rows = diagnostics.spectrum(
            config, layer=BOTTLENECK_LAYER, stride=50, trace_batch_size=500
        )

        assert result.status == "ok"
        later = [row for row in rows if row.iteration >= iterations_per_epoch]
        assert len(later) >= 10
        kfac = np.mean([row.dist_kfac for row in later])
        intrabatch = np.mean([row.dist_ekfac_intrabatch for row in later])
        running = np.mean(
            [row.dist_ekfac_ra for row in later if row.dist_ekfac_ra is not None]
        )
        assert min(intrabatch, running) < kfac

    @pytest.mark.parametrize("seed", SEEDS)
    def test_eigenbasis_decorrelates_gradients(self, training, diagnostics, seed):
        """Test gradients are less correlated in the eigenbasis than in parameters."""
        config = TrainConfig(
            optimizer="sgd",
            lr=0.5,
            batch_size=50,
            epochs=5,
            seed=seed,
            dataset=_synthetic(500, 20, 4, seed=seed),
            architecture=[20, 12, 20],
            out=f"corr-{seed}.jsonl",
            checkpoint=f"corr-{seed}.ckpt",
        )
        training.run_training(config)
        net, dataset = diagnostics.prepare(config, checkpoint=f"corr-{seed}.ckpt")

        report = diagnostics.correlation(
            net, dataset, layer=1, subset_size=250, batch_size=500, seed=seed
        )

        assert report.kfe_offdiag_mean < report.parameter_offdiag_mean
