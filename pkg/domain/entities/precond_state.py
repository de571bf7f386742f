from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from domain.entities.kfe_state import KfeState
from domain.value_objects.exact_fisher import ExactFisherBlock
from domain.value_objects.kronecker_factors import KroneckerFactors


def _slots(n: int) -> list:
    return [None] * n


@dataclass
class PrecondState:
    """Per-layer optimizer state; only the slots a strategy uses are filled."""

    n_layers: int
    iteration: int = 0
    kfe: List[Optional[KfeState]] = field(default_factory=list)
    factors: List[Optional[KroneckerFactors]] = field(default_factory=list)
    first_moments: List[Optional[np.ndarray]] = field(default_factory=list)
    second_moments: List[Optional[np.ndarray]] = field(default_factory=list)
    exact: List[Optional[ExactFisherBlock]] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    refresh_iterations: List[int] = field(default_factory=list)

    def __post_init__(self):
        for name in ("kfe", "factors", "first_moments", "second_moments", "exact"):
            if not getattr(self, name):
                setattr(self, name, _slots(self.n_layers))
        if not self.steps:
            self.steps = [0] * self.n_layers

    def advance(self) -> None:
        self.iteration += 1
