import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from application.dto.grid_dto import GridSpec
from application.dto.training_dto import TrainConfig
from application.services.grid import parse_grid_file
from infrastructure.config.harness import harness_config
from presentation.cli.arguments import config_from_args
from presentation.cli.dependencies import (
    get_diagnostics_use_cases,
    get_training_use_cases,
)
from presentation.cli.errors import EXIT_DIVERGED, EXIT_OK

logger = logging.getLogger(__name__)


def _emit(payload: Any) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def train_command(args: argparse.Namespace) -> int:
    """Train one configuration and print the run result"""
    config = config_from_args(args)
    result = get_training_use_cases().run_training(config)
    _emit(result.model_dump(mode="json"))
    return EXIT_OK if result.status == "ok" else EXIT_DIVERGED


def grid_command(args: argparse.Namespace) -> int:
    """Train every cell of a grid file and print the summary"""
    text = Path(args.config).read_text()
    base, grid = parse_grid_file(text, harness_config.data_dir)
    base.setdefault("oracle_max_params", harness_config.oracle_max_params)
    base.setdefault("divergence_threshold", harness_config.divergence_threshold)
    updates: Dict[str, Any] = {}
    if args.jobs is not None:
        updates["jobs"] = args.jobs
    if args.summary is not None:
        updates["summary"] = args.summary
    if updates:
        grid = GridSpec.model_validate({**grid.model_dump(), **updates})
    summary = get_training_use_cases().run_grid(base, grid)
    _emit(summary.model_dump(mode="json"))
    return EXIT_OK


def diagnose_command(args: argparse.Namespace) -> int:
    """Run one curvature diagnostic and print its measurements"""
    config = config_from_args(args)
    diagnostics = get_diagnostics_use_cases()
    sized = args.oracle_limit is None and (
        harness_config.oracle_max_params_override is None
    )

    if args.measure == "spectrum":
        layer = args.layer if args.layer is not None else _bottleneck(config)
        if sized:
            config = _with_oracle_limit(
                config, _oracle_limit(_layer_params(config.architecture), layer)
            )
        result, rows = diagnostics.spectrum(
            config,
            layer=layer,
            stride=args.stride,
            trace_batch_size=args.batch,
            kfac_refresh_every=args.kfac_refresh,
            out=args.report,
        )
        _emit(
            {
                "run": result.model_dump(mode="json"),
                "trace": [row.model_dump() for row in rows],
            }
        )
        return EXIT_OK if result.status == "ok" else EXIT_DIVERGED

    net, dataset = diagnostics.prepare(config, checkpoint=args.checkpoint)
    if args.measure == "frobenius":
        if sized:
            params = [d_in_h * d_out for d_in_h, d_out in net.layer_shapes()]
            config = _with_oracle_limit(config, _oracle_limit(params, args.layer))
        rows = diagnostics.frobenius(
            net,
            dataset,
            layer=args.layer,
            batch_size=args.batch,
            seed=config.seed,
            max_params=config.oracle_max_params,
            max_kron_dim=harness_config.max_kron_dim,
            out=args.report,
        )
        _emit([row.model_dump() for row in rows])
        return EXIT_OK

    report = diagnostics.correlation(
        net,
        dataset,
        layer=args.layer if args.layer is not None else 1,
        subset_size=args.subset,
        batch_size=args.batch,
        seed=config.seed,
        out=args.report,
    )
    _emit(
        {
            "parameter_offdiag_mean": report.parameter_offdiag_mean,
            "kfe_offdiag_mean": report.kfe_offdiag_mean,
        }
    )
    return EXIT_OK


def _bottleneck(config: TrainConfig) -> int:
    """Index of the layer feeding the narrowest hidden layer"""
    sizes = config.architecture
    hidden = sizes[1:-1] or sizes[1:]
    return sizes.index(min(hidden), 1) - 1


def _layer_params(sizes: List[int]) -> List[int]:
    return [(d_in + 1) * d_out for d_in, d_out in zip(sizes[:-1], sizes[1:])]


def _oracle_limit(params: List[int], layer: Optional[int]) -> int:
    """Exact Fisher limit covering the layer, or every layer, to be measured.

    Capped at EKFAC_MAX_KRON_DIM; a layer above the cap still fails with a
    resource error.
    """
    cap = harness_config.max_kron_dim
    if layer is not None and 0 <= layer < len(params):
        return min(params[layer], cap)
    fitting = [count for count in params if count <= cap]
    return max(fitting) if fitting else cap


def _with_oracle_limit(config: TrainConfig, limit: int) -> TrainConfig:
    logger.info("Exact Fisher limit sized to %d parameters", limit)
    return config.model_copy(update={"oracle_max_params": limit})
