from dataclasses import dataclass
from typing import Optional

import numpy as np

from domain.exceptions import ContractViolationError, PreconditionerStateError
from domain.value_objects.sym_eigen import orthogonality_tolerance


@dataclass
class KfeState:
    """Kronecker-factored eigenbasis of one layer and its diagonal scaling.

    ``s_star`` is None until scalings have been estimated in the current basis.
    """

    u_a: np.ndarray
    s_a: np.ndarray
    u_b: np.ndarray
    s_b: np.ndarray
    s_star: Optional[np.ndarray] = None
    last_basis_refresh: int = 0

    def __post_init__(self):
        for name in ("u_a", "u_b"):
            basis = np.asarray(getattr(self, name), dtype=np.float64)
            if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
                raise ContractViolationError(f"{name} must be square")
            residual = basis.T @ basis - np.eye(basis.shape[0])
            if np.linalg.norm(residual) >= orthogonality_tolerance(basis.shape[0]):
                raise ContractViolationError(f"{name} is not orthogonal")
            setattr(self, name, basis)
        self.s_a = np.asarray(self.s_a, dtype=np.float64)
        self.s_b = np.asarray(self.s_b, dtype=np.float64)
        if self.s_a.shape != (self.u_a.shape[0],) or self.s_b.shape != (
            self.u_b.shape[0],
        ):
            raise ContractViolationError("Eigenvalue vectors do not match bases")
        if self.s_star is not None:
            self.set_s_star(self.s_star)

    @classmethod
    def identity(cls, d_in_h: int, d_out: int) -> "KfeState":
        return cls(
            u_a=np.eye(d_in_h),
            s_a=np.ones(d_in_h),
            u_b=np.eye(d_out),
            s_b=np.ones(d_out),
        )

    @property
    def d_in_h(self) -> int:
        return self.u_a.shape[0]

    @property
    def d_out(self) -> int:
        return self.u_b.shape[0]

    @property
    def param_count(self) -> int:
        return self.d_in_h * self.d_out

    def set_s_star(self, s_star: np.ndarray) -> None:
        values = np.asarray(s_star, dtype=np.float64)
        if values.shape != (self.param_count,):
            raise ContractViolationError(
                f"s* must have length {self.param_count}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ContractViolationError("s* entries must be finite and non-negative")
        self.s_star = values

    def require_s_star(self) -> np.ndarray:
        if self.s_star is None:
            raise PreconditionerStateError("s* has not been estimated in this basis")
        return self.s_star
