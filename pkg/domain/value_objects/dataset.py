from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from domain.exceptions import ContractViolationError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Examples as rows of ``inputs``; auto-encoders use them as targets too."""

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[0] < 1 or inputs.shape[1] < 1:
            raise ContractViolationError(
                f"Dataset needs a non-empty 2-d input array, got {inputs.shape}"
            )
        if not np.all(np.isfinite(inputs)):
            raise ContractViolationError("Dataset inputs must be finite")
        inputs.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.shape != (inputs.shape[0],):
                raise ContractViolationError(
                    f"Got {labels.shape} labels for {inputs.shape[0]} examples"
                )
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, index: Union[np.ndarray, slice]) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(inputs=self.inputs[index], labels=labels, name=self.name)

    def __len__(self) -> int:
        return self.size
