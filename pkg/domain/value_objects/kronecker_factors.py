from dataclasses import dataclass

import numpy as np

from domain.exceptions import ContractViolationError

SYMMETRY_TOLERANCE = 1e-10


def _validated_symmetric(name: str, m: np.ndarray) -> np.ndarray:
    array = np.array(m, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise ContractViolationError(f"Factor {name} must be square, got {array.shape}")
    if np.max(np.abs(array - array.T)) > SYMMETRY_TOLERANCE:
        raise ContractViolationError(f"Factor {name} is not symmetric")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class KroneckerFactors:
    """A = E[h h^T] over homogeneous inputs and B = E[delta delta^T]."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _validated_symmetric("A", self.a))
        object.__setattr__(self, "b", _validated_symmetric("B", self.b))

    @property
    def d_in_h(self) -> int:
        return self.a.shape[0]

    @property
    def d_out(self) -> int:
        return self.b.shape[0]

    @property
    def param_count(self) -> int:
        return self.d_in_h * self.d_out
