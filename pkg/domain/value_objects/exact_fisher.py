from dataclasses import dataclass

import numpy as np

from domain.exceptions import ContractViolationError


@dataclass(frozen=True, eq=False)
class ExactFisherBlock:
    """Materialised empirical Fisher block G = E[g g^T] for one layer."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ContractViolationError(f"Fisher block must be square, got {g.shape}")
        if np.max(np.abs(g - g.T)) > 1e-10 * max(1.0, float(np.max(np.abs(g)))):
            raise ContractViolationError("Fisher block is not symmetric")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def size(self) -> int:
        return self.g.shape[0]
