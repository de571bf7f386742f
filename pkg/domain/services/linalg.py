"""Dense real linear algebra shared by every curvature computation.

Vectorisation convention: ``vec`` flattens row-major, so entry ``(i, k)`` of an
``m x n`` matrix lands at index ``i * n + k``. Under this convention

    kron(A, B) @ vec(C) == vec(A @ C @ B.T)

and the Kronecker-factored eigenbasis projection of a gradient matrix ``G`` is
``U_A.T @ G @ U_B``.
"""

import logging

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from domain.exceptions import (
    ContractViolationError,
    NumericError,
    ResourceLimitError,
)
from domain.value_objects.dense_matrix import MatrixLike, as_array
from domain.value_objects.sym_eigen import SymEigen

logger = logging.getLogger(__name__)

VEC_ORDER = "C"
SYMMETRY_TOLERANCE = 1e-10
DEFAULT_MAX_KRON_DIM = 4096
DEFAULT_JACOBI_SWEEPS = 100


def _check_symmetric(array: np.ndarray) -> None:
    if array.shape[0] != array.shape[1]:
        raise ContractViolationError(f"Expected a square matrix, got {array.shape}")
    asymmetry = float(np.max(np.abs(array - array.T)))
    if asymmetry > SYMMETRY_TOLERANCE:
        raise ContractViolationError(
            f"Matrix is not symmetric (max asymmetry {asymmetry:.3e})"
        )


def _sorted_descending(
    eigenvalues: np.ndarray, basis: np.ndarray, psd: bool
) -> SymEigen:
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    if psd:
        eigenvalues = np.maximum(eigenvalues, 0.0)
    return SymEigen(basis=basis[:, order], eigenvalues=eigenvalues)


def sym_eigendecompose(m: MatrixLike, psd: bool = False) -> SymEigen:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    With ``psd=True`` the eigenvalues are clamped at zero; round-off can push
    the smallest eigenvalues of second-moment matrices slightly negative.
    LAPACK is tried first; the Jacobi solver is the fallback.
    """
    array = as_array(m)
    _check_symmetric(array)
    try:
        eigenvalues, basis = scipy.linalg.eigh(array)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning("LAPACK eigh failed (%s), falling back to Jacobi", e)
        return jacobi_eigendecompose(array, psd=psd)
    return _sorted_descending(eigenvalues, basis, psd)


def jacobi_eigendecompose(
    m: MatrixLike, psd: bool = False, max_sweeps: int = DEFAULT_JACOBI_SWEEPS
) -> SymEigen:
    """Cyclic Jacobi rotations; intended for small matrices."""
    a = np.array(as_array(m), dtype=np.float64)
    _check_symmetric(a)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(float(np.linalg.norm(a)), np.finfo(np.float64).tiny)

    for sweep in range(max_sweeps + 1):
        off_diagonal = np.sqrt(max(np.sum(a**2) - np.sum(np.diag(a) ** 2), 0.0))
        if off_diagonal <= 1e-15 * scale:
            return _sorted_descending(np.diag(a).copy(), v, psd)
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (
                    abs(theta) + np.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    raise NumericError(
        f"Jacobi eigensolver did not converge on a {n}x{n} matrix",
        iterations=max_sweeps,
    )


def kronecker_product(
    a: MatrixLike, b: MatrixLike, max_dim: int = DEFAULT_MAX_KRON_DIM
) -> np.ndarray:
    a_values, b_values = as_array(a), as_array(b)
    rows = a_values.shape[0] * b_values.shape[0]
    cols = a_values.shape[1] * b_values.shape[1]
    if max(rows, cols) > max_dim:
        raise ResourceLimitError(
            "Kronecker product too large to materialise; use kron_matvec",
            requested=max(rows, cols),
            limit=max_dim,
        )
    return np.kron(a_values, b_values)


def vec(m: ArrayLike) -> np.ndarray:
    return np.array(m, dtype=np.float64).ravel(order=VEC_ORDER)


def unvec(v: ArrayLike, rows: int, cols: int) -> np.ndarray:
    flat = np.asarray(v, dtype=np.float64)
    if flat.ndim != 1 or flat.shape[0] != rows * cols:
        raise ContractViolationError(
            f"Cannot reshape vector of shape {flat.shape} into {rows}x{cols}"
        )
    return flat.reshape((rows, cols), order=VEC_ORDER)


def kron_matvec(a: MatrixLike, b: MatrixLike, v: ArrayLike) -> np.ndarray:
    """``kron(a, b) @ v`` without materialising the Kronecker product."""
    a_values, b_values = as_array(a), as_array(b)
    flat = np.asarray(v, dtype=np.float64)
    expected = a_values.shape[1] * b_values.shape[1]
    if flat.ndim != 1 or flat.shape[0] != expected:
        raise ContractViolationError(
            f"Vector length {flat.shape} does not match kron input size {expected}"
        )
    c = unvec(flat, a_values.shape[1], b_values.shape[1])
    return vec((a_values @ c) @ b_values.T)
