from application.use_cases.diagnostics_use_cases import DiagnosticsUseCases
from application.use_cases.training_use_cases import TrainingUseCases
from infrastructure.repositories.checkpoint_repository_impl import (
    BinaryCheckpointRepository,
)
from infrastructure.repositories.dataset_repository_impl import FileDatasetRepository
from infrastructure.repositories.metrics_repository_impl import (
    JsonLinesMetricsRepository,
)
from infrastructure.repositories.report_repository_impl import CsvReportRepository


def get_training_use_cases() -> TrainingUseCases:
    """Training use cases wired to the file-backed repositories"""
    return TrainingUseCases(
        dataset_repository=FileDatasetRepository(),
        metrics_repository=JsonLinesMetricsRepository(),
        checkpoint_repository=BinaryCheckpointRepository(),
        report_repository=CsvReportRepository(),
    )


def get_diagnostics_use_cases() -> DiagnosticsUseCases:
    return DiagnosticsUseCases(
        training=get_training_use_cases(),
        checkpoint_repository=BinaryCheckpointRepository(),
        report_repository=CsvReportRepository(),
    )
