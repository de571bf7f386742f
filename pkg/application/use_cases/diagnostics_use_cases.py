import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from application.dto.diagnostics_dto import FrobeniusRow, SpectrumTraceRow
from application.dto.training_dto import TrainConfig, TrainingResult
from application.services.spectrum_tracker import DEFAULT_TRACE_BATCH, SpectrumTracker
from application.use_cases.training_use_cases import TrainingUseCases
from domain.entities.network import Network
from domain.exceptions import ContractViolationError, ResourceLimitError
from domain.repositories.checkpoint_repository import CheckpointRepository
from domain.repositories.report_repository import ReportRepository
from domain.services.backprop import backward, forward, per_example_gradients
from domain.services.curvature import (
    DEFAULT_ORACLE_MAX_PARAMS,
    compute_s_star_from_record,
    estimate_factors,
    kfe_state_from_factors,
)
from domain.services.diagnostics import correlation_report, frobenius_errors
from domain.services.linalg import DEFAULT_MAX_KRON_DIM
from domain.value_objects.dataset import Dataset
from domain.value_objects.diagnostics import CorrelationReport
from domain.value_objects.layer_record import LayerBatchRecord

logger = logging.getLogger(__name__)

FROBENIUS_COLUMNS = ("layer", "batch_size", "err_kfac", "err_ekfac")
SPECTRUM_COLUMNS = ("iteration", "dist_kfac", "dist_ekfac_intrabatch", "dist_ekfac_ra")
CORRELATION_COLUMNS = ("basis", "offdiag_mean_abs")
DEFAULT_DIAGNOSTIC_BATCH = 500
DEFAULT_CORRELATION_SUBSET = 250


class DiagnosticsUseCases:
    def __init__(
        self,
        training: TrainingUseCases,
        checkpoint_repository: CheckpointRepository,
        report_repository: ReportRepository,
    ):
        self.training = training
        self.checkpoint_repository = checkpoint_repository
        self.report_repository = report_repository

    def prepare(
        self, config: TrainConfig, checkpoint: Optional[str] = None
    ) -> Tuple[Network, Dataset]:
        """Data and network to measure: a checkpoint, or a fresh initialisation"""
        dataset = self.training.load_dataset(config.dataset, config.train_size)
        if checkpoint is None:
            net = self.training.build_network(config, dataset.dim)
        else:
            net = self.checkpoint_repository.load(checkpoint)
            if net.input_dim != dataset.dim:
                raise ContractViolationError(
                    f"Checkpoint expects {net.input_dim}-dimensional inputs, "
                    f"dataset has {dataset.dim}"
                )
        return net, dataset

    def frobenius(
        self,
        net: Network,
        dataset: Dataset,
        layer: Optional[int] = None,
        batch_size: int = DEFAULT_DIAGNOSTIC_BATCH,
        seed: int = 0,
        max_params: int = DEFAULT_ORACLE_MAX_PARAMS,
        max_kron_dim: int = DEFAULT_MAX_KRON_DIM,
        out: Optional[str] = None,
    ) -> List[FrobeniusRow]:
        """Frobenius errors of KFAC and EKFAC against the exact Fisher block.

        Without a layer every layer within the oracle limit is measured.
        """
        records = self._records(net, dataset, batch_size, seed)
        if layer is None:
            layers = [
                index
                for index, record in enumerate(records)
                if record.param_count <= max_params
            ]
            if not layers:
                raise ContractViolationError(
                    f"No layer has at most {max_params} parameters"
                )
        else:
            layers = [self._check_layer(net, layer)]

        rows = []
        for index in layers:
            record = records[index]
            if record.param_count > max_params:
                raise ResourceLimitError(
                    f"Layer {index} too large for the exact Fisher oracle",
                    requested=record.param_count,
                    limit=max_params,
                )
            factors = estimate_factors(record)
            kfe = kfe_state_from_factors(factors)
            kfe.set_s_star(compute_s_star_from_record(kfe, record))
            errors = frobenius_errors(
                per_example_gradients(record),
                factors,
                kfe,
                max_params=max_params,
                max_kron_dim=max_kron_dim,
            )
            rows.append(
                FrobeniusRow(
                    layer=index,
                    batch_size=record.batch_size,
                    err_kfac=errors.err_kfac,
                    err_ekfac=errors.err_ekfac,
                )
            )
            logger.info(
                "Layer %d: err_kfac %.6g, err_ekfac %.6g",
                index,
                errors.err_kfac,
                errors.err_ekfac,
            )
        if out is not None:
            self.report_repository.write_table(
                out, FROBENIUS_COLUMNS, [row.model_dump() for row in rows]
            )
        return rows

    def spectrum(
        self,
        config: TrainConfig,
        layer: int,
        stride: int,
        trace_batch_size: int = DEFAULT_TRACE_BATCH,
        kfac_refresh_every: Optional[int] = None,
        out: Optional[str] = None,
    ) -> Tuple[TrainingResult, List[SpectrumTraceRow]]:
        """Train under ``config`` while tracing one layer's eigenspectra"""
        tracker = SpectrumTracker(
            layer=layer,
            stride=stride,
            trace_batch_size=trace_batch_size,
            running_decay=config.running_decay,
            kfac_refresh_every=kfac_refresh_every,
            max_params=config.oracle_max_params,
            seed=config.seed,
        )
        result = self.training.run_training(config, observer=tracker)
        rows = tracker.rows
        if out is not None:
            self.report_repository.write_table(
                out,
                SPECTRUM_COLUMNS,
                [row.model_dump() for row in rows],
                metadata={
                    "layer": layer,
                    "stride": stride,
                    "trace_batch_size": trace_batch_size,
                    "basis": "computed once on the initial network and kept fixed",
                    "spectra": "raw eigenvalues sorted descending, no normalisation",
                    "kfac_refresh_every": kfac_refresh_every,
                    "optimizer": config.optimizer.value,
                    "status": result.status,
                },
            )
        return result, rows

    def correlation(
        self,
        net: Network,
        dataset: Dataset,
        layer: int,
        subset_size: int = DEFAULT_CORRELATION_SUBSET,
        batch_size: int = DEFAULT_DIAGNOSTIC_BATCH,
        seed: int = 0,
        out: Optional[str] = None,
    ) -> CorrelationReport:
        """Gradient correlations in the parameter basis and in the eigenbasis"""
        self._check_layer(net, layer)
        record = self._records(net, dataset, batch_size, seed)[layer]
        kfe = kfe_state_from_factors(estimate_factors(record))
        rng = np.random.default_rng(seed)
        size = min(subset_size, record.param_count)
        subset = np.sort(rng.choice(record.param_count, size=size, replace=False))
        report = correlation_report(per_example_gradients(record), kfe, subset)
        logger.info(
            "Layer %d correlation: parameter basis %.4f, eigenbasis %.4f",
            layer,
            report.parameter_offdiag_mean,
            report.kfe_offdiag_mean,
        )
        if out is not None:
            self._write_correlation(out, report, subset)
        return report

    def _records(
        self, net: Network, dataset: Dataset, batch_size: int, seed: int
    ) -> List[LayerBatchRecord]:
        if batch_size < 1:
            raise ContractViolationError("Batch size must be positive")
        rng = np.random.default_rng(seed)
        size = min(batch_size, dataset.size)
        index = np.sort(rng.choice(dataset.size, size=size, replace=False))
        batch = dataset.inputs[index]
        _, cache = forward(net, batch)
        return backward(net, cache, batch).records

    @staticmethod
    def _check_layer(net: Network, layer: int) -> int:
        if not 0 <= layer < net.depth:
            raise ContractViolationError(
                f"Layer {layer} out of range for a {net.depth}-layer network"
            )
        return layer

    def _write_correlation(
        self, out: str, report: CorrelationReport, subset: Sequence[int]
    ) -> None:
        path = Path(out)
        self.report_repository.write_table(
            out,
            CORRELATION_COLUMNS,
            [
                {
                    "basis": "parameter",
                    "offdiag_mean_abs": report.parameter_offdiag_mean,
                },
                {"basis": "kfe", "offdiag_mean_abs": report.kfe_offdiag_mean},
            ],
            metadata={"coordinates": [int(i) for i in subset]},
        )
        columns = [f"c{int(i)}" for i in subset]
        for name, matrix in (
            ("parameter", report.parameter_basis),
            ("kfe", report.kfe_basis),
        ):
            self.report_repository.write_table(
                str(path.with_name(f"{path.stem}_{name}.csv")),
                columns,
                [dict(zip(columns, row)) for row in matrix.tolist()],
            )
