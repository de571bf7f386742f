from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from domain.value_objects.layer_spec import Activation, LossKind
from domain.value_objects.optimizer_hyperparams import (
    KfacDamping,
    OptimizerHyperParams,
    PreconditionerKind,
    RunningSource,
)

DESK_ARCHITECTURE = [784, 200, 100, 30, 100, 200, 784]
FULL_ARCHITECTURE = [784, 1000, 500, 250, 30, 250, 500, 1000, 784]


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(5000, ge=1, description="Number of examples")
    dim: int = Field(784, ge=1, description="Example dimension")
    latent_dim: int = Field(30, ge=1, description="Dimension of the latent codes")
    seed: int = Field(0, ge=0, description="Generator seed")
    identity_mixing: bool = Field(
        False, description="Use the identity as mixing matrix (needs latent_dim == dim)"
    )

    @model_validator(mode="after")
    def _check_latent(self) -> "SyntheticSpec":
        if self.latent_dim > self.dim:
            raise ValueError("latent_dim cannot exceed dim")
        if self.identity_mixing and self.latent_dim != self.dim:
            raise ValueError("identity mixing needs latent_dim == dim")
        return self


class DatasetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["mnist", "synthetic"] = Field(..., description="Dataset source")
    path: Optional[str] = Field(
        None, description="MNIST directory; empty means the configured data dir"
    )
    synthetic: Optional[SyntheticSpec] = Field(
        None, description="Generator parameters for synthetic data"
    )

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetSpec":
        if self.kind == "synthetic" and self.synthetic is None:
            raise ValueError("synthetic datasets need generator parameters")
        return self


class LrSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant", "step"] = Field("constant", description="Schedule type")
    factor: float = Field(0.5, gt=0.0, le=1.0, description="Step-decay factor")
    every_epochs: int = Field(20, ge=1, description="Epochs between decays")

    def lr_at(self, base_lr: float, epoch: int) -> float:
        """Learning rate for a zero-based epoch index."""
        if self.kind == "constant":
            return base_lr
        return base_lr * self.factor ** (epoch // self.every_epochs)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    optimizer: PreconditionerKind = Field(..., description="Preconditioner")
    lr: float = Field(..., gt=0.0, description="Learning rate")
    damping: float = Field(1e-3, ge=0.0, description="Damping added before inversion")
    batch_size: int = Field(200, ge=1, description="Minibatch size")
    refresh_every_n: int = Field(
        50, ge=1, description="Iterations between eigenbasis refreshes"
    )
    epochs: int = Field(30, ge=1, description="Passes over the training split")
    seed: int = Field(0, ge=0, lt=2**64, description="Run seed")
    dataset: DatasetSpec = Field(..., description="Training data source")
    train_size: Optional[int] = Field(
        None, ge=1, description="Keep only the first examples of the dataset"
    )
    architecture: List[int] = Field(
        default_factory=lambda: list(DESK_ARCHITECTURE), description="Layer sizes"
    )
    activations: Optional[List[Activation]] = Field(
        None, description="One activation per layer; sigmoid everywhere if omitted"
    )
    loss: LossKind = Field(LossKind.MSE, description="Training loss")
    lr_schedule: LrSchedule = Field(default_factory=LrSchedule)
    out: str = Field("metrics.jsonl", description="Metrics stream path")
    checkpoint: Optional[str] = Field(
        None, description="Checkpoint path; defaults to the metrics path + .ckpt"
    )
    validation: bool = Field(False, description="Hold out a tail split for validation")
    validation_size: Optional[int] = Field(
        None, ge=1, description="Held-out examples; default 10000 or a fifth"
    )
    single_thread: bool = Field(False, description="Limit BLAS to one thread")
    log_every: int = Field(
        0, ge=0, description="Iteration records every k steps; 0 for epochs only"
    )
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(1e-8, gt=0.0)
    running_decay: float = Field(0.75, gt=0.0, lt=1.0)
    ra_source: RunningSource = Field(RunningSource.MINIBATCH)
    kfac_damping: KfacDamping = Field(KfacDamping.EIGEN)
    factor_decay: Optional[float] = Field(None, ge=0.0, lt=1.0)
    oracle_max_params: int = Field(1024, ge=1, description="Exact-Fisher size limit")
    divergence_threshold: float = Field(1e6, gt=0.0)

    @model_validator(mode="after")
    def _check_architecture(self) -> "TrainConfig":
        if len(self.architecture) < 2 or min(self.architecture) < 1:
            raise ValueError("architecture needs at least two positive sizes")
        if self.activations is not None and (
            len(self.activations) != len(self.architecture) - 1
        ):
            raise ValueError("need one activation per layer")
        return self

    @property
    def checkpoint_path(self) -> str:
        return self.checkpoint or f"{self.out}.ckpt"

    def hyperparams(self, lr: Optional[float] = None) -> OptimizerHyperParams:
        return OptimizerHyperParams(
            kind=self.optimizer,
            lr=self.lr if lr is None else lr,
            damping=self.damping,
            refresh_every=self.refresh_every_n,
            momentum=self.momentum,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            running_decay=self.running_decay,
            ra_source=self.ra_source,
            kfac_damping=self.kfac_damping,
            factor_decay=self.factor_decay,
            oracle_max_params=self.oracle_max_params,
        )


class MetricsRecord(BaseModel):
    kind: Literal["iteration", "epoch"] = Field(..., description="Logging event")
    iteration: int = Field(..., ge=0, description="Optimizer steps taken so far")
    epoch: int = Field(..., ge=0, description="Epoch index, starting at 1")
    wall_clock_seconds: float = Field(..., ge=0.0, description="Time since run start")
    lr: float = Field(..., gt=0.0, description="Learning rate in effect")
    train_loss: float = Field(..., description="Training loss")
    validation_loss: Optional[float] = Field(None, description="Held-out loss")
    phase_seconds: Dict[str, float] = Field(
        default_factory=dict, description="Cumulative seconds per step phase"
    )
    phase_counts: Dict[str, int] = Field(
        default_factory=dict, description="Cumulative entries per step phase"
    )


class TrainingResult(BaseModel):
    status: Literal["ok", "diverged"] = Field(..., description="Run outcome")
    iterations: int = Field(..., ge=0, description="Optimizer steps taken")
    final: Optional[MetricsRecord] = Field(
        None, description="Last record with finite losses"
    )
    metrics_path: str = Field(..., description="Metrics stream path")
    checkpoint_path: Optional[str] = Field(None, description="Saved checkpoint")
    refresh_iterations: List[int] = Field(
        default_factory=list, description="Iterations with an eigenbasis refresh"
    )
    message: Optional[str] = Field(None, description="Why the run diverged")
