import contextlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import TypeAdapter, ValidationError
from threadpoolctl import threadpool_limits

from application.dto.grid_dto import GridCellResult, GridSpec, GridSummary
from application.dto.training_dto import (
    DatasetSpec,
    MetricsRecord,
    TrainConfig,
    TrainingResult,
)
from application.services.datasets import split_validation
from application.services.grid import (
    GridCell,
    expand_cells,
    select_best_per_epoch,
    select_best_validation,
)
from application.services.phase_timer import PhaseTimer
from application.services.spectrum_tracker import TrainingObserver
from application.services.training_step import step
from domain.entities.network import Network
from domain.exceptions import ContractViolationError, EkfacError, NumericError
from domain.repositories.checkpoint_repository import CheckpointRepository
from domain.repositories.dataset_repository import DatasetRepository
from domain.repositories.metrics_repository import MetricsRepository
from domain.repositories.report_repository import ReportRepository
from domain.services.backprop import evaluate_loss
from domain.services.preconditioners import build_optimizer
from domain.value_objects.dataset import Dataset
from domain.value_objects.optimizer_hyperparams import PreconditionerKind

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "cell_id",
    "optimizer",
    "lr",
    "damping",
    "batch_size",
    "refresh_every_n",
    "seed",
    "status",
    "final_train_loss",
    "final_validation_loss",
)
EPOCH_BEST_COLUMNS = ("optimizer", "epoch", "cell_id", "train_loss")
VALIDATION_BEST_COLUMNS = ("optimizer", "cell_id", "epoch", "validation_loss")


class DivergenceError(NumericError):
    pass


class TrainingUseCases:
    def __init__(
        self,
        dataset_repository: DatasetRepository,
        metrics_repository: MetricsRepository,
        checkpoint_repository: CheckpointRepository,
        report_repository: Optional[ReportRepository] = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.dataset_repository = dataset_repository
        self.metrics_repository = metrics_repository
        self.checkpoint_repository = checkpoint_repository
        self.report_repository = report_repository
        self.clock = clock

    def load_dataset(
        self, spec: DatasetSpec, train_size: Optional[int] = None
    ) -> Dataset:
        """Load or generate the examples named by a dataset spec"""
        if spec.kind == "mnist":
            dataset = self.dataset_repository.load_mnist(spec.path)
        else:
            synthetic = spec.synthetic
            dataset = self.dataset_repository.generate_synthetic(
                n=synthetic.n,
                dim=synthetic.dim,
                latent_dim=synthetic.latent_dim,
                seed=synthetic.seed,
                identity_mixing=synthetic.identity_mixing,
            )
        if train_size is not None:
            if train_size > dataset.size:
                raise ContractViolationError(
                    f"Asked for {train_size} examples, dataset has {dataset.size}"
                )
            dataset = dataset.take(slice(0, train_size))
        logger.info(
            "Loaded %s: %d examples of dimension %d",
            dataset.name,
            dataset.size,
            dataset.dim,
        )
        return dataset

    def build_network(self, config: TrainConfig, input_dim: int) -> Network:
        """Auto-encoder whose first and last layer sizes match the data"""
        sizes = list(config.architecture)
        if sizes[0] != input_dim or sizes[-1] != input_dim:
            raise ContractViolationError(
                f"Architecture {sizes} does not map {input_dim}-dimensional "
                "examples back onto themselves"
            )
        return Network.create(
            sizes, activations=config.activations, loss=config.loss, seed=config.seed
        )

    def run_training(
        self,
        config: TrainConfig,
        observer: Optional[TrainingObserver] = None,
        dataset: Optional[Dataset] = None,
    ) -> TrainingResult:
        """Train an auto-encoder and stream metrics, one flush per epoch"""
        limits = (
            threadpool_limits(limits=1)
            if config.single_thread
            else contextlib.nullcontext()
        )
        with limits:
            return self._train(config, observer, dataset)

    def _train(
        self,
        config: TrainConfig,
        observer: Optional[TrainingObserver],
        dataset: Optional[Dataset],
    ) -> TrainingResult:
        started = self.clock()
        if dataset is None:
            dataset = self.load_dataset(config.dataset, config.train_size)
        train, validation = dataset, None
        if config.validation:
            train, validation = split_validation(dataset, config.validation_size)

        net = self.build_network(config, train.dim)
        optimizer = build_optimizer(config.hyperparams(), net.layer_shapes())
        timer = PhaseTimer(self.clock)
        rng = np.random.default_rng(config.seed)
        inputs = train.inputs

        self.metrics_repository.reset(config.out)
        if observer is not None:
            observer.on_start(net, inputs, inputs)
        logger.info(
            "Starting %s run: lr=%g damping=%g batch=%d refresh=%d epochs=%d "
            "examples=%d seed=%d",
            config.optimizer.value,
            config.lr,
            config.damping,
            config.batch_size,
            config.refresh_every_n,
            config.epochs,
            train.size,
            config.seed,
        )

        last: Optional[MetricsRecord] = None
        for epoch in range(1, config.epochs + 1):
            lr = config.lr_schedule.lr_at(config.lr, epoch - 1)
            order = rng.permutation(train.size)
            pending: List[MetricsRecord] = []
            try:
                for begin in range(0, train.size, config.batch_size):
                    index = order[begin : begin + config.batch_size]
                    batch = inputs[index]
                    outcome = step(net, optimizer, batch, batch, lr, timer)
                    if observer is not None:
                        observer.on_step(net, outcome)
                    self._check_divergence(config, outcome.loss)
                    done = optimizer.state.iteration
                    if config.log_every and done % config.log_every == 0:
                        pending.append(
                            self._record(
                                "iteration",
                                done,
                                epoch,
                                started,
                                lr,
                                outcome.loss,
                                None,
                                timer,
                            )
                        )
                train_loss = evaluate_loss(net, inputs, inputs)
                self._check_divergence(config, train_loss)
                validation_loss = None
                if validation is not None:
                    validation_loss = evaluate_loss(
                        net, validation.inputs, validation.inputs
                    )
                pending.append(
                    self._record(
                        "epoch",
                        optimizer.state.iteration,
                        epoch,
                        started,
                        lr,
                        train_loss,
                        validation_loss,
                        timer,
                    )
                )
            except NumericError as e:
                if pending:
                    self.metrics_repository.append(
                        config.out, [r.model_dump(mode="json") for r in pending]
                    )
                    last = pending[-1]
                logger.warning(
                    "Run diverged at iteration %d (epoch %d): %s",
                    optimizer.state.iteration,
                    epoch,
                    e,
                )
                return TrainingResult(
                    status="diverged",
                    iterations=optimizer.state.iteration,
                    final=last,
                    metrics_path=config.out,
                    refresh_iterations=list(optimizer.state.refresh_iterations),
                    message=str(e),
                )

            self.metrics_repository.append(
                config.out, [r.model_dump(mode="json") for r in pending]
            )
            last = pending[-1]
            logger.info(
                "Epoch %d/%d: train loss %.6g%s, %.2fs",
                epoch,
                config.epochs,
                last.train_loss,
                ""
                if last.validation_loss is None
                else f", validation loss {last.validation_loss:.6g}",
                last.wall_clock_seconds,
            )

        self.checkpoint_repository.save(net, config.checkpoint_path)
        logger.info(
            "Finished %s run after %d iterations, final train loss %.6g",
            config.optimizer.value,
            optimizer.state.iteration,
            last.train_loss,
        )
        return TrainingResult(
            status="ok",
            iterations=optimizer.state.iteration,
            final=last,
            metrics_path=config.out,
            checkpoint_path=config.checkpoint_path,
            refresh_iterations=list(optimizer.state.refresh_iterations),
        )

    @staticmethod
    def _check_divergence(config: TrainConfig, loss: float) -> None:
        if not np.isfinite(loss) or loss > config.divergence_threshold:
            raise DivergenceError(
                f"Loss {loss:.6g} exceeds the divergence threshold "
                f"{config.divergence_threshold:g}"
            )

    def _record(
        self,
        kind: str,
        iteration: int,
        epoch: int,
        started: float,
        lr: float,
        train_loss: float,
        validation_loss: Optional[float],
        timer: PhaseTimer,
    ) -> MetricsRecord:
        return MetricsRecord(
            kind=kind,
            iteration=iteration,
            epoch=epoch,
            wall_clock_seconds=max(self.clock() - started, 0.0),
            lr=lr,
            train_loss=train_loss,
            validation_loss=validation_loss,
            phase_seconds=dict(timer.seconds),
            phase_counts=dict(timer.counts),
        )

    def run_grid(self, base: Mapping[str, Any], grid: GridSpec) -> GridSummary:
        """Train every cell of a grid and select the best cells"""
        out_dir = Path(str(base.get("out", "grid")))
        cells = expand_cells(grid)
        logger.info("Running grid of %d cells into %s", len(cells), out_dir)

        def run_cell(cell: GridCell) -> Tuple[GridCellResult, List[MetricsRecord]]:
            return self._run_cell(base, out_dir, cell)

        jobs = grid.jobs
        if jobs > 1 and TypeAdapter(bool).validate_python(
            base.get("single_thread", False)
        ):
            # BLAS thread limits are process-wide
            logger.info("Single-thread runs: ignoring jobs=%d, cells run in turn", jobs)
            jobs = 1
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(run_cell, cells))
        else:
            outcomes = [run_cell(cell) for cell in cells]

        streams = {
            result.cell_id: (result.optimizer, records) for result, records in outcomes
        }
        summary = GridSummary(
            cells=[result for result, _ in outcomes],
            per_epoch_best=select_best_per_epoch(streams),
            validation_best=select_best_validation(streams),
        )
        summary_path = Path(grid.summary) if grid.summary else out_dir / "summary.csv"
        self._write_summary(summary, summary_path)
        return summary

    def _run_cell(
        self, base: Mapping[str, Any], out_dir: Path, cell: GridCell
    ) -> Tuple[GridCellResult, List[MetricsRecord]]:
        cell_id, point = cell
        metrics_path = str(out_dir / f"{cell_id}.jsonl")
        settings: Dict[str, Any] = {
            **base,
            **point,
            "out": metrics_path,
            "checkpoint": str(out_dir / f"{cell_id}.ckpt"),
        }
        try:
            config = TrainConfig.model_validate(settings)
            result = self.run_training(config)
        except (EkfacError, ValidationError) as e:
            logger.warning("Grid cell %s failed: %s", cell_id, e)
            return (
                GridCellResult(
                    cell_id=cell_id,
                    optimizer=PreconditionerKind(point["optimizer"]),
                    params=dict(point),
                    status="diverged",
                    metrics_path=metrics_path,
                    message=str(e),
                ),
                [],
            )

        records = [
            MetricsRecord.model_validate(raw)
            for raw in self.metrics_repository.read(metrics_path)
        ]
        final = result.final
        return (
            GridCellResult(
                cell_id=cell_id,
                optimizer=config.optimizer,
                params=dict(point),
                status=result.status,
                metrics_path=metrics_path,
                final_train_loss=None if final is None else final.train_loss,
                final_validation_loss=None if final is None else final.validation_loss,
                message=result.message,
            ),
            records,
        )

    def _write_summary(self, summary: GridSummary, path: Path) -> None:
        if self.report_repository is None:
            return
        rows = []
        for cell in summary.cells:
            row = {"cell_id": cell.cell_id, "optimizer": cell.optimizer.value}
            row.update({key: cell.params.get(key) for key in SUMMARY_COLUMNS[2:7]})
            row.update(
                status=cell.status,
                final_train_loss=cell.final_train_loss,
                final_validation_loss=cell.final_validation_loss,
            )
            rows.append(row)
        self.report_repository.write_table(str(path), SUMMARY_COLUMNS, rows)
        self.report_repository.write_table(
            str(path.with_name(f"{path.stem}_best_per_epoch.csv")),
            EPOCH_BEST_COLUMNS,
            [best.model_dump(mode="json") for best in summary.per_epoch_best],
        )
        if summary.validation_best:
            self.report_repository.write_table(
                str(path.with_name(f"{path.stem}_best_validation.csv")),
                VALIDATION_BEST_COLUMNS,
                [best.model_dump(mode="json") for best in summary.validation_best],
            )
