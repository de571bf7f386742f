from dataclasses import dataclass

import numpy as np

from domain.exceptions import ContractViolationError


@dataclass(frozen=True, eq=False)
class LayerBatchRecord:
    """Per-example layer inputs and backpropagated pre-activation gradients.

    ``inputs_h`` is ``(batch, d_in + 1)`` with the homogeneous coordinate in the
    last column; ``deltas`` is ``(batch, d_out)``.
    """

    inputs_h: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        inputs_h = np.array(self.inputs_h, dtype=np.float64)
        deltas = np.array(self.deltas, dtype=np.float64)
        if inputs_h.ndim != 2 or deltas.ndim != 2:
            raise ContractViolationError("Record arrays must be 2-d")
        if inputs_h.shape[0] != deltas.shape[0]:
            raise ContractViolationError(
                f"Example counts differ: {inputs_h.shape[0]} inputs, "
                f"{deltas.shape[0]} deltas"
            )
        if inputs_h.shape[0] < 1:
            raise ContractViolationError("Record needs at least one example")
        inputs_h.setflags(write=False)
        deltas.setflags(write=False)
        object.__setattr__(self, "inputs_h", inputs_h)
        object.__setattr__(self, "deltas", deltas)

    @property
    def batch_size(self) -> int:
        return self.inputs_h.shape[0]

    @property
    def d_in_h(self) -> int:
        return self.inputs_h.shape[1]

    @property
    def d_out(self) -> int:
        return self.deltas.shape[1]

    @property
    def param_count(self) -> int:
        return self.d_in_h * self.d_out
