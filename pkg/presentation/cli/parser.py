import argparse

from presentation.cli.arguments import add_logging_arguments, add_run_arguments
from presentation.cli.commands import diagnose_command, grid_command, train_command

PROG = "ekfac-bench"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Train auto-encoders under (E)KFAC and baseline preconditioners "
        "and measure how well the curvature approximations fit.",
    )
    add_logging_arguments(parser)
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train one configuration")
    add_run_arguments(train)
    train.set_defaults(handler=train_command)

    grid = commands.add_parser("grid", help="Train every cell of a grid file")
    grid.add_argument("--config", required=True, help="Grid file of key = value lines")
    grid.add_argument("--jobs", type=int, default=None, help="Cells run concurrently")
    grid.add_argument("--summary", default=None, help="Summary CSV path")
    grid.set_defaults(handler=grid_command)

    diagnose = commands.add_parser("diagnose", help="Measure curvature approximations")
    diagnose.add_argument("measure", choices=["frobenius", "spectrum", "correlation"])
    diagnose.add_argument("--layer", type=int, default=None, help="Layer index")
    diagnose.add_argument(
        "--stride", type=int, default=50, help="Iterations between spectrum checkpoints"
    )
    diagnose.add_argument(
        "--subset", type=int, default=250, help="Coordinates in the correlation matrix"
    )
    diagnose.add_argument(
        "--batch", type=int, default=500, help="Examples defining the exact Fisher"
    )
    diagnose.add_argument("--out", dest="report", default=None, help="CSV output path")
    diagnose.add_argument("--checkpoint", default=None, help="Network to measure")
    diagnose.add_argument(
        "--kfac-refresh",
        type=int,
        default=None,
        help="Re-project KFAC factors into the fixed basis every N iterations",
    )
    add_run_arguments(diagnose, require_optimizer=False, metrics_flag="--metrics-out")
    diagnose.set_defaults(handler=diagnose_command)
    return parser
