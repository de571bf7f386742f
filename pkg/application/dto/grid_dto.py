from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from domain.value_objects.optimizer_hyperparams import PreconditionerKind

GRID_KEYS = (
    "optimizer",
    "lr",
    "damping",
    "batch_size",
    "refresh_every_n",
    "seed",
)


class GridSpec(BaseModel):
    """Values per hyperparameter; cells are their cartesian product."""

    axes: Dict[str, List[Any]] = Field(
        ..., description="Hyperparameter name to the values it takes"
    )
    random_search: int = Field(
        0, ge=0, description="Extra (lr, damping) draws around each grid point"
    )
    random_seed: int = Field(0, ge=0, description="Seed of the random search")
    jobs: int = Field(1, ge=1, description="Cells run concurrently")
    summary: Optional[str] = Field(None, description="Summary CSV path")

    @field_validator("axes")
    @classmethod
    def _check_axes(cls, axes: Dict[str, List[Any]]) -> Dict[str, List[Any]]:
        for name, values in axes.items():
            if not values:
                raise ValueError(f"grid axis {name} has no values")
        return axes


class GridCellResult(BaseModel):
    cell_id: str = Field(..., description="Stable cell name")
    optimizer: PreconditionerKind = Field(..., description="Preconditioner")
    params: Dict[str, Any] = Field(..., description="Hyperparameters of the cell")
    status: Literal["ok", "diverged"] = Field(..., description="Run outcome")
    metrics_path: str = Field(..., description="Metrics stream of the cell")
    final_train_loss: Optional[float] = Field(None, description="Last training loss")
    final_validation_loss: Optional[float] = Field(
        None, description="Last validation loss"
    )
    message: Optional[str] = Field(None, description="Failure reason")


class EpochBest(BaseModel):
    optimizer: PreconditionerKind = Field(..., description="Preconditioner")
    epoch: int = Field(..., ge=1, description="Epoch index")
    cell_id: str = Field(..., description="Winning cell")
    train_loss: float = Field(..., description="Lowest training loss at that epoch")


class ValidationBest(BaseModel):
    optimizer: PreconditionerKind = Field(..., description="Preconditioner")
    cell_id: str = Field(..., description="Winning cell")
    epoch: int = Field(..., ge=1, description="Epoch of the lowest validation loss")
    validation_loss: float = Field(..., description="Lowest validation loss")


class GridSummary(BaseModel):
    cells: List[GridCellResult] = Field(..., description="One row per cell")
    per_epoch_best: List[EpochBest] = Field(..., description="Per-epoch winners")
    validation_best: List[ValidationBest] = Field(
        default_factory=list, description="Best validation loss per optimizer"
    )

