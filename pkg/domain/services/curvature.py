"""Kronecker factors, the Kronecker-factored eigenbasis and its scalings.

Gradients are vectors in the vec layout of the ``(d_in + 1, d_out)`` gradient
matrix; projecting into the eigenbasis is ``U_A.T @ G @ U_B`` in matrix form.
"""

from typing import Optional, Tuple

import numpy as np

from domain.entities.kfe_state import KfeState
from domain.exceptions import ContractViolationError, ResourceLimitError
from domain.services.linalg import sym_eigendecompose, unvec, vec
from domain.value_objects.exact_fisher import ExactFisherBlock
from domain.value_objects.kronecker_factors import KroneckerFactors
from domain.value_objects.layer_record import LayerBatchRecord

DEFAULT_RUNNING_DECAY = 0.75
DEFAULT_ORACLE_MAX_PARAMS = 1024


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def estimate_factors(record: LayerBatchRecord) -> KroneckerFactors:
    n = record.batch_size
    return KroneckerFactors(
        a=_symmetrize(record.inputs_h.T @ record.inputs_h / n),
        b=_symmetrize(record.deltas.T @ record.deltas / n),
    )


def blend_factors(
    old: Optional[KroneckerFactors], new: KroneckerFactors, decay: float
) -> KroneckerFactors:
    """Exponential moving average of factors; ``old=None`` returns ``new``."""
    if old is None:
        return new
    if not 0.0 <= decay < 1.0:
        raise ContractViolationError(f"Factor decay must lie in [0, 1), got {decay}")
    return KroneckerFactors(
        a=decay * old.a + (1.0 - decay) * new.a,
        b=decay * old.b + (1.0 - decay) * new.b,
    )


def compute_kfe(
    factors: KroneckerFactors,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Eigenbases and clamped eigenvalues ``(u_a, s_a, u_b, s_b)``."""
    eig_a = sym_eigendecompose(factors.a, psd=True)
    eig_b = sym_eigendecompose(factors.b, psd=True)
    return eig_a.basis, eig_a.eigenvalues, eig_b.basis, eig_b.eigenvalues


def kfe_state_from_factors(factors: KroneckerFactors, iteration: int = 0) -> KfeState:
    u_a, s_a, u_b, s_b = compute_kfe(factors)
    return KfeState(u_a=u_a, s_a=s_a, u_b=u_b, s_b=s_b, last_basis_refresh=iteration)


def _check_length(state: KfeState, v: np.ndarray) -> np.ndarray:
    array = np.asarray(v, dtype=np.float64)
    if array.shape != (state.param_count,):
        raise ContractViolationError(
            f"Gradient of shape {array.shape} does not match layer size "
            f"{state.param_count}"
        )
    return array


def kfe_project(state: KfeState, grad: np.ndarray) -> np.ndarray:
    """(U_A kron U_B)^T grad."""
    g = unvec(_check_length(state, grad), state.d_in_h, state.d_out)
    return vec(state.u_a.T @ g @ state.u_b)


def kfe_unproject(state: KfeState, tilde_grad: np.ndarray) -> np.ndarray:
    """(U_A kron U_B) tilde_grad."""
    t = unvec(_check_length(state, tilde_grad), state.d_in_h, state.d_out)
    return vec(state.u_a @ t @ state.u_b.T)


def project_rows(state: KfeState, grads: np.ndarray) -> np.ndarray:
    n = grads.shape[0]
    g = grads.reshape(n, state.d_in_h, state.d_out)
    projected = np.einsum("ij,njk,kl->nil", state.u_a.T, g, state.u_b, optimize=True)
    return projected.reshape(n, state.param_count)


def _as_gradient_rows(state: KfeState, per_example_grads: np.ndarray) -> np.ndarray:
    grads = np.asarray(per_example_grads, dtype=np.float64)
    if grads.ndim == 1:
        grads = grads[None, :]
    if grads.ndim != 2 or grads.shape[0] < 1:
        raise ContractViolationError("Need at least one gradient")
    if grads.shape[1] != state.param_count:
        raise ContractViolationError(
            f"Gradients of length {grads.shape[1]} do not match layer size "
            f"{state.param_count}"
        )
    return grads


def compute_s_star_intrabatch(
    state: KfeState, per_example_grads: np.ndarray
) -> np.ndarray:
    """Second moments of per-example gradients in the eigenbasis."""
    grads = _as_gradient_rows(state, per_example_grads)
    projected = project_rows(state, grads)
    return np.maximum(np.mean(projected**2, axis=0), 0.0)


def compute_s_star_from_record(state: KfeState, record: LayerBatchRecord) -> np.ndarray:
    """Same as the intrabatch estimate, without forming per-example gradients.

    The projection of vec(h delta^T) is vec((U_A^T h)(U_B^T delta)^T), so its
    square is an outer product of squared projected factors.
    """
    if record.d_in_h != state.d_in_h or record.d_out != state.d_out:
        raise ContractViolationError("Record shape does not match the eigenbasis")
    h_tilde = record.inputs_h @ state.u_a
    delta_tilde = record.deltas @ state.u_b
    s_star = (h_tilde**2).T @ (delta_tilde**2) / record.batch_size
    return np.maximum(vec(s_star), 0.0)


def _check_decay(decay: float) -> None:
    if not 0.0 < decay < 1.0:
        raise ContractViolationError(f"Running decay must lie in (0, 1), got {decay}")


def update_s_star_running(
    state: KfeState, minibatch_mean_grad: np.ndarray, decay: float
) -> np.ndarray:
    """Running average of the squared projected minibatch gradient.

    The first call after a basis refresh (``state.s_star is None``) initialises
    from the current squared projection.
    """
    _check_decay(decay)
    squared = kfe_project(state, minibatch_mean_grad) ** 2
    if state.s_star is None:
        return squared
    return np.maximum(decay * state.s_star + (1.0 - decay) * squared, 0.0)


def update_s_star_running_individual(
    state: KfeState, record: LayerBatchRecord, decay: float
) -> np.ndarray:
    """Running average fed with squared individual gradients."""
    _check_decay(decay)
    intrabatch = compute_s_star_from_record(state, record)
    if state.s_star is None:
        return intrabatch
    return np.maximum(decay * state.s_star + (1.0 - decay) * intrabatch, 0.0)


def kfac_eigenvalues(state: KfeState) -> np.ndarray:
    """Diagonal of S_A kron S_B in the vec layout."""
    return vec(np.outer(state.s_a, state.s_b))


def exact_fisher_block(
    per_example_grads: np.ndarray, max_params: int = DEFAULT_ORACLE_MAX_PARAMS
) -> ExactFisherBlock:
    grads = np.asarray(per_example_grads, dtype=np.float64)
    if grads.ndim == 1:
        grads = grads[None, :]
    if grads.ndim != 2 or grads.shape[0] < 1:
        raise ContractViolationError("Need at least one gradient")
    if grads.shape[1] > max_params:
        raise ResourceLimitError(
            "Layer too large for the exact Fisher oracle",
            requested=grads.shape[1],
            limit=max_params,
        )
    return ExactFisherBlock(g=_symmetrize(grads.T @ grads / grads.shape[0]))
