import sys
from typing import List, Optional

from infrastructure.config.logging import configure_logging
from presentation.cli.errors import run_guarded
from presentation.cli.parser import build_parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    return run_guarded(lambda: args.handler(args))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
