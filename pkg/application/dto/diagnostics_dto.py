from typing import Optional

from pydantic import BaseModel, Field


class SpectrumTraceRow(BaseModel):
    iteration: int = Field(..., ge=0, description="Checkpoint iteration")
    dist_kfac: float = Field(..., ge=0.0, description="KFAC spectrum distance")
    dist_ekfac_intrabatch: float = Field(
        ..., ge=0.0, description="EKFAC spectrum distance, intrabatch scalings"
    )
    dist_ekfac_ra: Optional[float] = Field(
        None, ge=0.0, description="EKFAC spectrum distance, running-average scalings"
    )


class FrobeniusRow(BaseModel):
    layer: int = Field(..., ge=0, description="Layer index")
    batch_size: int = Field(..., ge=1, description="Examples defining G")
    err_kfac: float = Field(..., ge=0.0, description="||G - G_KFAC||_F")
    err_ekfac: float = Field(..., ge=0.0, description="||G - G_EKFAC||_F")

