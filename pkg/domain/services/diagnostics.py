"""Measurements comparing the curvature approximations with the exact block."""

from typing import Optional, Sequence

import numpy as np

from domain.entities.kfe_state import KfeState
from domain.exceptions import ContractViolationError, ResourceLimitError
from domain.services.curvature import (
    DEFAULT_ORACLE_MAX_PARAMS,
    exact_fisher_block,
    kfac_eigenvalues,
    project_rows,
)
from domain.services.linalg import (
    DEFAULT_MAX_KRON_DIM,
    kronecker_product,
    sym_eigendecompose,
)
from domain.value_objects.diagnostics import (
    CorrelationReport,
    FrobeniusErrors,
    SpectrumTrace,
)
from domain.value_objects.exact_fisher import ExactFisherBlock
from domain.value_objects.kronecker_factors import KroneckerFactors

MAX_CORRELATION_SUBSET = 512


def _kfe_matrix(state: KfeState, max_params: int, max_kron_dim: int) -> np.ndarray:
    if state.param_count > max_params:
        raise ResourceLimitError(
            "Eigenbasis too large to materialise",
            requested=state.param_count,
            limit=max_params,
        )
    return kronecker_product(state.u_a, state.u_b, max_dim=max_kron_dim)


def frobenius_errors(
    per_example_grads: np.ndarray,
    factors: KroneckerFactors,
    kfe_state: KfeState,
    max_params: int = DEFAULT_ORACLE_MAX_PARAMS,
    max_kron_dim: int = DEFAULT_MAX_KRON_DIM,
) -> FrobeniusErrors:
    """||G - A kron B||_F and ||G - Q diag(s*) Q^T||_F for one layer."""
    block = exact_fisher_block(per_example_grads, max_params=max_params)
    if factors.param_count != block.size or kfe_state.param_count != block.size:
        raise ContractViolationError(
            "Factors, eigenbasis and gradients disagree in size"
        )
    g_kfac = kronecker_product(factors.a, factors.b, max_dim=max_kron_dim)
    q = _kfe_matrix(kfe_state, max_params, max_kron_dim)
    g_ekfac = (q * kfe_state.require_s_star()) @ q.T
    return FrobeniusErrors(
        err_kfac=float(np.linalg.norm(block.g - g_kfac)),
        err_ekfac=float(np.linalg.norm(block.g - g_ekfac)),
    )


def exact_spectrum(block: ExactFisherBlock) -> np.ndarray:
    return sym_eigendecompose(block.g, psd=True).eigenvalues


def spectrum_trace(
    iteration: int,
    block: ExactFisherBlock,
    kfac_state: KfeState,
    ekfac_s_star: np.ndarray,
    ekfac_ra_s_star: Optional[np.ndarray] = None,
) -> SpectrumTrace:
    """Spectra at one checkpoint.

    The spectrum of G_EKFAC is its diagonal s* in the eigenbasis and the
    spectrum of G_KFAC is the set of products (S_A)_j (S_B)_k; both are sorted
    before distances are taken.
    """
    return SpectrumTrace(
        iteration=iteration,
        exact=exact_spectrum(block),
        kfac=kfac_eigenvalues(kfac_state),
        ekfac=ekfac_s_star,
        ekfac_ra=ekfac_ra_s_star,
    )


def correlation_matrix(samples: np.ndarray) -> np.ndarray:
    """Pearson correlation of the columns of ``samples``.

    Zero-variance coordinates get a unit diagonal and zero off-diagonals.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ContractViolationError("Correlation needs at least two examples")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    std = np.sqrt(np.maximum(np.diag(cov), 0.0))
    alive = std > 0.0
    denom = np.outer(np.where(alive, std, 1.0), np.where(alive, std, 1.0))
    corr = np.clip(cov / denom, -1.0, 1.0)
    corr[~alive, :] = 0.0
    corr[:, ~alive] = 0.0
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_report(
    per_example_grads: np.ndarray, kfe_state: KfeState, subset: Sequence[int]
) -> CorrelationReport:
    grads = np.asarray(per_example_grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] < 2:
        raise ContractViolationError("Correlation needs at least two examples")
    if grads.shape[1] != kfe_state.param_count:
        raise ContractViolationError("Gradients do not match the eigenbasis size")
    index = np.asarray(subset, dtype=np.int64)
    if index.ndim != 1 or not 1 <= index.shape[0] <= MAX_CORRELATION_SUBSET:
        raise ContractViolationError(
            f"Subset must hold between 1 and {MAX_CORRELATION_SUBSET} coordinates"
        )
    if np.any(index < 0) or np.any(index >= grads.shape[1]):
        raise ContractViolationError("Subset index out of range")
    projected = project_rows(kfe_state, grads)
    return CorrelationReport(
        parameter_basis=correlation_matrix(grads[:, index]),
        kfe_basis=correlation_matrix(projected[:, index]),
    )
