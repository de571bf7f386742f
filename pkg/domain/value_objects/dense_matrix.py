from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.typing import ArrayLike

from domain.exceptions import ContractViolationError


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Finite real matrix with at least one row and one column.

    The wrapped array is a read-only float64 copy, so a DenseMatrix can be
    shared freely between threads.
    """

    values: np.ndarray

    def __post_init__(self):
        array = np.array(self.values, dtype=np.float64, copy=True)
        if array.ndim != 2:
            raise ContractViolationError(
                f"DenseMatrix needs a 2-d array, got {array.ndim} dimensions"
            )
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ContractViolationError(f"Empty matrix of shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ContractViolationError("DenseMatrix entries must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "values", array)

    @classmethod
    def coerce(cls, m: Union["DenseMatrix", ArrayLike]) -> "DenseMatrix":
        if isinstance(m, DenseMatrix):
            return m
        return cls(np.asarray(m))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def max_asymmetry(self) -> float:
        if not self.is_square:
            return float("inf")
        return float(np.max(np.abs(self.values - self.values.T)))

    def __eq__(self, other: object) -> bool:
        if isinstance(other, DenseMatrix):
            return np.array_equal(self.values, other.values)
        return False

    def __hash__(self) -> int:
        return hash((self.shape, self.values.tobytes()))


MatrixLike = Union[DenseMatrix, np.ndarray]


def as_array(m: MatrixLike) -> np.ndarray:
    """Validate ``m`` as a DenseMatrix and return its read-only array."""
    return DenseMatrix.coerce(m).values
