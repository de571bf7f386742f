import argparse
from typing import Any, Dict

from application.dto.training_dto import DESK_ARCHITECTURE, TrainConfig
from application.services.datasets import parse_dataset_spec
from application.services.grid import parse_architecture, parse_lr_decay
from domain.value_objects.layer_spec import LossKind
from domain.value_objects.optimizer_hyperparams import (
    KfacDamping,
    PreconditionerKind,
    RunningSource,
)
from infrastructure.config.harness import harness_config

OPTIMIZERS = [kind.value for kind in PreconditionerKind]


def add_logging_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log-level", default=None, help="Overrides EKFAC_LOG_LEVEL")
    parser.add_argument(
        "--log-format", choices=["text", "json"], default=None, help="Log line format"
    )


def add_run_arguments(
    parser: argparse.ArgumentParser,
    require_optimizer: bool = True,
    metrics_flag: str = "--out",
) -> None:
    """Flags that make up a TrainConfig"""
    group = parser.add_argument_group("run")
    if require_optimizer:
        group.add_argument("--optimizer", choices=OPTIMIZERS, required=True)
        group.add_argument("--lr", type=float, required=True, help="Learning rate")
    else:
        group.add_argument("--optimizer", choices=OPTIMIZERS, default="sgd")
        group.add_argument("--lr", type=float, default=0.1, help="Learning rate")
    group.add_argument("--damping", type=float, default=1e-3)
    group.add_argument("--batch-size", type=int, default=200)
    group.add_argument(
        "--freq", type=int, default=50, help="Iterations between eigenbasis refreshes"
    )
    group.add_argument("--epochs", type=int, default=30)
    group.add_argument("--seed", type=int, default=0)
    group.add_argument(
        "--dataset",
        default="mnist",
        help="mnist:DIR or synthetic:n=N,dim=D,latent=L,seed=S",
    )
    group.add_argument("--train-size", type=int, default=None)
    group.add_argument(
        "--arch",
        default=",".join(str(size) for size in DESK_ARCHITECTURE),
        help="Comma-separated layer sizes",
    )
    group.add_argument("--loss", choices=[k.value for k in LossKind], default="mse")
    group.add_argument(
        metrics_flag, dest="out", default="metrics.jsonl", help="Metrics stream path"
    )
    group.add_argument("--checkpoint-out", default=None, help="Checkpoint path")
    group.add_argument(
        "--lr-decay", default=None, metavar="FACTOR,EVERY", help="Step decay"
    )
    group.add_argument("--validation", action="store_true")
    group.add_argument("--validation-size", type=int, default=None)
    group.add_argument("--single-thread", action="store_true")
    group.add_argument("--log-every", type=int, default=0)
    group.add_argument("--momentum", type=float, default=0.9)
    group.add_argument("--running-decay", type=float, default=0.75)
    group.add_argument(
        "--ra-source", choices=[s.value for s in RunningSource], default="minibatch"
    )
    group.add_argument(
        "--kfac-damping", choices=[d.value for d in KfacDamping], default="eigen"
    )
    group.add_argument("--factor-decay", type=float, default=None)
    group.add_argument(
        "--oracle-limit",
        type=int,
        default=None,
        help="Exact-Fisher block limit; overrides EKFAC_ORACLE_MAX_PARAMS",
    )


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    settings: Dict[str, Any] = {
        "optimizer": args.optimizer,
        "lr": args.lr,
        "damping": args.damping,
        "batch_size": args.batch_size,
        "refresh_every_n": args.freq,
        "epochs": args.epochs,
        "seed": args.seed,
        "dataset": parse_dataset_spec(args.dataset, harness_config.data_dir),
        "train_size": args.train_size,
        "architecture": parse_architecture(args.arch),
        "loss": args.loss,
        "out": args.out,
        "checkpoint": args.checkpoint_out,
        "validation": args.validation,
        "validation_size": args.validation_size,
        "single_thread": args.single_thread,
        "log_every": args.log_every,
        "momentum": args.momentum,
        "running_decay": args.running_decay,
        "ra_source": args.ra_source,
        "kfac_damping": args.kfac_damping,
        "factor_decay": args.factor_decay,
        "oracle_max_params": args.oracle_limit or harness_config.oracle_max_params,
        "divergence_threshold": harness_config.divergence_threshold,
    }
    if args.lr_decay:
        settings["lr_schedule"] = parse_lr_decay(args.lr_decay)
    return TrainConfig(**settings)
