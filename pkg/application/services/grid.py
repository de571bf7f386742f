"""Grid files, cell expansion and best-run selection."""

import itertools
import re
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from application.dto.grid_dto import GRID_KEYS, EpochBest, GridSpec, ValidationBest
from application.dto.training_dto import LrSchedule, MetricsRecord
from application.services.datasets import parse_dataset_spec
from domain.exceptions import ContractViolationError
from domain.value_objects.optimizer_hyperparams import PreconditionerKind

ALIASES = {
    "arch": "architecture",
    "freq": "refresh_every_n",
    "lr_decay": "lr_schedule",
    "oracle_limit": "oracle_max_params",
    "optimizers": "optimizer",
}
GRID_OPTIONS = ("random_search", "random_seed", "jobs", "summary")
AXIS_TYPES = {
    "optimizer": str,
    "lr": float,
    "damping": float,
    "batch_size": int,
    "refresh_every_n": int,
    "seed": int,
}
# random search stays within half a decade of each grid point
RANDOM_SEARCH_HALF_WIDTH = 0.5

GridCell = Tuple[str, Dict[str, Any]]


def parse_architecture(text: str) -> List[int]:
    try:
        return [int(size) for size in text.replace(" ", "").split(",") if size]
    except ValueError as e:
        raise ContractViolationError(f"Invalid architecture {text!r}") from e


def parse_lr_decay(text: str) -> LrSchedule:
    """``FACTOR,EVERY`` or ``FACTOR``; the period defaults to 20 epochs."""
    factor, _, every = text.partition(",")
    try:
        if every:
            return LrSchedule(
                kind="step", factor=float(factor), every_epochs=int(every)
            )
        return LrSchedule(kind="step", factor=float(factor))
    except (ValueError, ValidationError) as e:
        raise ContractViolationError(f"Invalid learning-rate decay {text!r}") from e


def parse_grid_file(
    text: str, default_data_dir: Optional[str] = None
) -> Tuple[Dict[str, Any], GridSpec]:
    """Parse ``key = value`` lines into base settings and a grid.

    Hyperparameter axes take several values separated by commas or blanks.
    ``arch``, ``dataset``, ``out`` and ``lr_decay`` are single values taken
    verbatim; other keys are single values passed on to the run configuration.
    """
    base: Dict[str, Any] = {}
    axes: Dict[str, List[Any]] = {}
    options: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ContractViolationError(f"Line {number}: expected key = value")
        key = ALIASES.get(key, key)

        if key in GRID_OPTIONS:
            options[key] = value
        elif key in GRID_KEYS:
            axes[key] = [
                _coerce_axis(key, v, number) for v in re.split(r"[,\s]+", value)
            ]
        elif key == "architecture":
            base[key] = parse_architecture(value)
        elif key == "dataset":
            base[key] = parse_dataset_spec(value, default_data_dir)
        elif key == "lr_schedule":
            base[key] = parse_lr_decay(value)
        else:
            base[key] = value

    for required in ("optimizer", "lr"):
        if required not in axes:
            raise ContractViolationError(f"Grid file needs a {required} line")
    try:
        grid = GridSpec(axes=axes, **options)
    except ValidationError as e:
        raise ContractViolationError(f"Invalid grid options: {e}") from e
    return base, grid


def _coerce_axis(key: str, value: str, number: int) -> Any:
    try:
        if key == "optimizer":
            return PreconditionerKind(value).value
        return AXIS_TYPES[key](value)
    except ValueError as e:
        raise ContractViolationError(f"Line {number}: invalid {key} {value!r}") from e


def expand_cells(grid: GridSpec) -> List[GridCell]:
    """Cartesian product of the axes, then random (lr, damping) draws per point."""
    names = sorted(grid.axes)
    rng = np.random.default_rng(grid.random_seed)
    points: List[Dict[str, Any]] = []
    for values in itertools.product(*(grid.axes[name] for name in names)):
        point = dict(zip(names, values))
        points.append(point)
        for _ in range(grid.random_search):
            drawn = dict(point)
            drawn["lr"] = _log_uniform_around(rng, point["lr"])
            if point.get("damping", 0.0) > 0.0:
                drawn["damping"] = _log_uniform_around(rng, point["damping"])
            points.append(drawn)
    return [
        (f"{point['optimizer']}-{index:03d}", point)
        for index, point in enumerate(points)
    ]


def _log_uniform_around(rng: np.random.Generator, center: float) -> float:
    exponent = rng.uniform(-RANDOM_SEARCH_HALF_WIDTH, RANDOM_SEARCH_HALF_WIDTH)
    return float(center * 10.0**exponent)


StreamMap = Mapping[str, Tuple[PreconditionerKind, Sequence[MetricsRecord]]]


def _epoch_records(records: Sequence[MetricsRecord]) -> List[MetricsRecord]:
    return [r for r in records if r.kind == "epoch" and np.isfinite(r.train_loss)]


def select_best_per_epoch(streams: StreamMap) -> List[EpochBest]:
    """Lowest training loss per optimizer and epoch; ties go to the smaller cell id."""
    best: Dict[Tuple[PreconditionerKind, int], EpochBest] = {}
    for cell_id in sorted(streams):
        optimizer, records = streams[cell_id]
        for record in _epoch_records(records):
            key = (PreconditionerKind(optimizer), record.epoch)
            if key not in best or record.train_loss < best[key].train_loss:
                best[key] = EpochBest(
                    optimizer=optimizer,
                    epoch=record.epoch,
                    cell_id=cell_id,
                    train_loss=record.train_loss,
                )
    return [best[key] for key in sorted(best, key=lambda k: (k[0].value, k[1]))]


def select_best_validation(streams: StreamMap) -> List[ValidationBest]:
    """Lowest validation loss over all epochs per optimizer."""
    best: Dict[PreconditionerKind, ValidationBest] = {}
    for cell_id in sorted(streams):
        optimizer, records = streams[cell_id]
        for record in _epoch_records(records):
            loss = record.validation_loss
            if loss is None or not np.isfinite(loss):
                continue
            kind = PreconditionerKind(optimizer)
            if kind not in best or loss < best[kind].validation_loss:
                best[kind] = ValidationBest(
                    optimizer=kind,
                    cell_id=cell_id,
                    epoch=record.epoch,
                    validation_loss=loss,
                )
    return [best[kind] for kind in sorted(best, key=lambda k: k.value)]
