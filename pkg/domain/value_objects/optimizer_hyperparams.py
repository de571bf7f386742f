from dataclasses import dataclass
from enum import Enum
from typing import Optional

from domain.exceptions import ContractViolationError


class PreconditionerKind(str, Enum):
    SGD = "sgd"
    SGD_MOMENTUM = "sgd-momentum"
    ADAM = "adam"
    DIAGONAL = "diagonal"
    KFAC = "kfac"
    EKFAC = "ekfac"
    EKFAC_RA = "ekfac-ra"
    EXACT_FISHER = "exact-fisher"


class KfacDamping(str, Enum):
    EIGEN = "eigen"
    FACTORED = "factored"


class RunningSource(str, Enum):
    MINIBATCH = "minibatch"
    INDIVIDUAL = "individual"


@dataclass(frozen=True)
class OptimizerHyperParams:
    kind: PreconditionerKind
    lr: float
    damping: float = 0.0
    refresh_every: int = 1
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    running_decay: float = 0.75
    ra_source: RunningSource = RunningSource.MINIBATCH
    kfac_damping: KfacDamping = KfacDamping.EIGEN
    factor_decay: Optional[float] = None
    oracle_max_params: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "kind", PreconditionerKind(self.kind))
        object.__setattr__(self, "ra_source", RunningSource(self.ra_source))
        object.__setattr__(self, "kfac_damping", KfacDamping(self.kfac_damping))
        if not self.lr > 0.0:
            raise ContractViolationError(
                f"Learning rate must be positive, got {self.lr}"
            )
        if self.damping < 0.0:
            raise ContractViolationError(
                f"Damping must be non-negative, got {self.damping}"
            )
        if self.refresh_every < 1:
            raise ContractViolationError("Refresh frequency must be at least 1")
        if not 0.0 < self.running_decay < 1.0:
            raise ContractViolationError("Running decay must lie in (0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolationError("Momentum must lie in [0, 1)")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ContractViolationError("Adam betas must lie in [0, 1)")
        if self.factor_decay is not None and not 0.0 <= self.factor_decay < 1.0:
            raise ContractViolationError("Factor decay must lie in [0, 1)")
