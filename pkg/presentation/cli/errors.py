import logging
from typing import Callable

from pydantic import ValidationError

from domain.exceptions import (
    ContractViolationError,
    DatasetFormatError,
    EkfacError,
    NumericError,
    ResourceLimitError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONTRACT = 2
EXIT_RESOURCE = 3
EXIT_NUMERIC = 4
EXIT_DIVERGED = 5


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ContractViolationError, DatasetFormatError)):
        return EXIT_CONTRACT
    if isinstance(error, (ValidationError, OSError)):
        return EXIT_CONTRACT
    if isinstance(error, ResourceLimitError):
        return EXIT_RESOURCE
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    return EXIT_FAILURE


def run_guarded(command: Callable[[], int]) -> int:
    """Run a command, turning package and input errors into exit codes"""
    try:
        return command()
    except (EkfacError, ValidationError, OSError) as e:
        code = exit_code_for(e)
        logger.error("%s (exit %d)", e, code)
        return code
