from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from domain.exceptions import ContractViolationError

CORRELATION_SLACK = 1e-10


@dataclass(frozen=True)
class FrobeniusErrors:
    err_kfac: float
    err_ekfac: float

    def __post_init__(self):
        if self.err_kfac < 0.0 or self.err_ekfac < 0.0:
            raise ContractViolationError("Frobenius errors cannot be negative")

    @property
    def ekfac_dominates(self) -> bool:
        return self.err_ekfac <= self.err_kfac + 1e-10


def _descending(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if values is None:
        return None
    array = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    array.setflags(write=False)
    return array


def spectrum_distances(
    exact_eigs: np.ndarray, *approximations: Optional[np.ndarray]
) -> List[Optional[float]]:
    """l2 distance between descending-sorted spectra; ``None`` passes through."""
    exact = np.sort(np.asarray(exact_eigs, dtype=np.float64))[::-1]
    distances: List[Optional[float]] = []
    for approx in approximations:
        if approx is None:
            distances.append(None)
            continue
        other = np.sort(np.asarray(approx, dtype=np.float64))[::-1]
        if other.shape != exact.shape:
            raise ContractViolationError("Spectra must have equal lengths")
        distances.append(float(np.linalg.norm(exact - other)))
    return distances


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """Sorted spectra of the exact block and its approximations at a checkpoint."""

    iteration: int
    exact: np.ndarray
    kfac: np.ndarray
    ekfac: np.ndarray
    ekfac_ra: Optional[np.ndarray] = None
    dist_kfac: float = field(init=False)
    dist_ekfac: float = field(init=False)
    dist_ekfac_ra: Optional[float] = field(init=False)

    def __post_init__(self):
        for name in ("exact", "kfac", "ekfac", "ekfac_ra"):
            object.__setattr__(self, name, _descending(getattr(self, name)))
        dist_kfac, dist_ekfac, dist_ekfac_ra = spectrum_distances(
            self.exact, self.kfac, self.ekfac, self.ekfac_ra
        )
        object.__setattr__(self, "dist_kfac", dist_kfac)
        object.__setattr__(self, "dist_ekfac", dist_ekfac)
        object.__setattr__(self, "dist_ekfac_ra", dist_ekfac_ra)


@dataclass(frozen=True, eq=False)
class CorrelationReport:
    parameter_basis: np.ndarray
    kfe_basis: np.ndarray
    parameter_offdiag_mean: float = field(init=False)
    kfe_offdiag_mean: float = field(init=False)

    def __post_init__(self):
        for name in ("parameter_basis", "kfe_basis"):
            matrix = np.array(getattr(self, name), dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ContractViolationError(f"{name} correlation must be square")
            if np.max(np.abs(np.diag(matrix) - 1.0)) > CORRELATION_SLACK:
                raise ContractViolationError(
                    f"{name} correlation needs a unit diagonal"
                )
            if np.max(np.abs(matrix - matrix.T)) > CORRELATION_SLACK:
                raise ContractViolationError(f"{name} correlation is not symmetric")
            if np.max(np.abs(matrix)) > 1.0 + CORRELATION_SLACK:
                raise ContractViolationError(f"{name} correlation leaves [-1, 1]")
            matrix.setflags(write=False)
            object.__setattr__(self, name, matrix)
        object.__setattr__(
            self, "parameter_offdiag_mean", offdiag_mean_abs(self.parameter_basis)
        )
        object.__setattr__(self, "kfe_offdiag_mean", offdiag_mean_abs(self.kfe_basis))


def offdiag_mean_abs(matrix: np.ndarray) -> float:
    k = matrix.shape[0]
    if k < 2:
        return 0.0
    mask = ~np.eye(k, dtype=bool)
    return float(np.mean(np.abs(matrix[mask])))
