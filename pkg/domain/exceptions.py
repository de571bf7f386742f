from typing import Optional


class EkfacError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(EkfacError, ValueError):
    pass


class NumericError(EkfacError, ArithmeticError):
    def __init__(self, message: str, iterations: Optional[int] = None):
        super().__init__(message)
        self.iterations = iterations


class ResourceLimitError(EkfacError):
    def __init__(self, message: str, requested: int, limit: int):
        super().__init__(f"{message} (requested {requested}, limit {limit})")
        self.requested = requested
        self.limit = limit


class PreconditionerStateError(EkfacError, RuntimeError):
    pass


class DatasetFormatError(EkfacError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
