from dataclasses import dataclass

import numpy as np

from domain.exceptions import ContractViolationError

ORTHOGONALITY_TOLERANCE = 1e-10


def orthogonality_tolerance(n: int) -> float:
    # LAPACK orthogonality error grows roughly linearly with n; the base
    # tolerance applies up to 64x64.
    return ORTHOGONALITY_TOLERANCE * max(1.0, n / 64.0)


@dataclass(frozen=True, eq=False)
class SymEigen:
    """Eigendecomposition ``basis @ diag(eigenvalues) @ basis.T``.

    Columns of ``basis`` are eigenvectors; eigenvalues are sorted descending.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64)
        eigenvalues = np.array(self.eigenvalues, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise ContractViolationError(f"Basis must be square, got {basis.shape}")
        if eigenvalues.shape != (basis.shape[0],):
            raise ContractViolationError(
                f"Expected {basis.shape[0]} eigenvalues, got {eigenvalues.shape}"
            )
        if np.any(np.diff(eigenvalues) > 0):
            raise ContractViolationError("Eigenvalues must be sorted descending")
        residual = basis.T @ basis - np.eye(basis.shape[0])
        if np.linalg.norm(residual) >= orthogonality_tolerance(basis.shape[0]):
            raise ContractViolationError("Basis is not orthogonal")
        basis.setflags(write=False)
        eigenvalues.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T
