"""Preconditioners applied to minibatch gradients.

The module has two layers: pure functions (``precondition_*``) that apply a
fixed linear map, and strategy classes that own the per-layer state and know
when to refresh it. A training step drives a strategy through
``needs_refresh -> refresh -> update_scalings -> precondition`` for each layer.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Sequence, Tuple, Type

import numpy as np
import scipy.linalg

from domain.entities.kfe_state import KfeState
from domain.entities.precond_state import PrecondState
from domain.exceptions import (
    ContractViolationError,
    NumericError,
    PreconditionerStateError,
    ResourceLimitError,
)
from domain.services.backprop import per_example_gradients
from domain.services.curvature import (
    blend_factors,
    compute_s_star_from_record,
    estimate_factors,
    exact_fisher_block,
    kfac_eigenvalues,
    kfe_project,
    kfe_state_from_factors,
    kfe_unproject,
    update_s_star_running,
    update_s_star_running_individual,
)
from domain.services.linalg import vec
from domain.value_objects.exact_fisher import ExactFisherBlock
from domain.value_objects.layer_record import LayerBatchRecord
from domain.value_objects.optimizer_hyperparams import (
    KfacDamping,
    OptimizerHyperParams,
    PreconditionerKind,
    RunningSource,
)

logger = logging.getLogger(__name__)

EXACT_RESIDUAL_TOLERANCE = 1e-8


def rescale_in_kfe(
    state: KfeState, mean_grad: np.ndarray, denominators: np.ndarray
) -> np.ndarray:
    """Project, divide elementwise, project back."""
    if np.any(~np.isfinite(denominators)) or np.any(denominators <= 0.0):
        raise NumericError("Non-positive scaling in the eigenbasis; increase damping")
    return kfe_unproject(state, kfe_project(state, mean_grad) / denominators)


def precondition_kfac(
    state: KfeState,
    mean_grad: np.ndarray,
    damping: float,
    damping_mode: KfacDamping = KfacDamping.EIGEN,
) -> np.ndarray:
    if state is None:
        raise PreconditionerStateError("KFAC basis has not been computed")
    if KfacDamping(damping_mode) == KfacDamping.FACTORED:
        root = np.sqrt(damping)
        denominators = vec(np.outer(state.s_a + root, state.s_b + root))
    else:
        denominators = kfac_eigenvalues(state) + damping
    return rescale_in_kfe(state, mean_grad, denominators)


def precondition_ekfac(
    state: KfeState, mean_grad: np.ndarray, damping: float
) -> np.ndarray:
    if state is None:
        raise PreconditionerStateError("EKFAC basis has not been computed")
    return rescale_in_kfe(state, mean_grad, state.require_s_star() + damping)


def precondition_diagonal(
    second_moment: np.ndarray, mean_grad: np.ndarray, damping: float
) -> np.ndarray:
    if second_moment is None:
        raise PreconditionerStateError("Second-moment accumulator is empty")
    denominators = np.asarray(second_moment) + damping
    if np.any(denominators <= 0.0):
        raise NumericError("Zero diagonal scaling; increase damping")
    return np.asarray(mean_grad, dtype=np.float64) / denominators


def precondition_exact(
    block: ExactFisherBlock, mean_grad: np.ndarray, damping: float
) -> np.ndarray:
    """Solve (G + damping I) x = mean_grad by Cholesky."""
    if block is None:
        raise PreconditionerStateError("Exact Fisher block has not been computed")
    g = np.asarray(mean_grad, dtype=np.float64)
    if g.shape != (block.size,):
        raise ContractViolationError(
            f"Gradient of shape {g.shape} does not match block size {block.size}"
        )
    system = block.g + damping * np.eye(block.size)
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Cholesky breakdown of damped Fisher block: {e}") from e
    solution = scipy.linalg.cho_solve(factor, g)
    scale = max(float(np.linalg.norm(g)), np.finfo(np.float64).tiny)
    residual = float(np.linalg.norm(system @ solution - g)) / scale
    if residual >= EXACT_RESIDUAL_TOLERANCE:
        raise NumericError(
            f"Damped Fisher solve is inaccurate (residual {residual:.2e})"
        )
    return solution


class Preconditioner(ABC):
    kind: PreconditionerKind

    def __init__(
        self, hyper: OptimizerHyperParams, layer_shapes: Sequence[Tuple[int, int]]
    ):
        self.hyper = hyper
        self.layer_shapes = list(layer_shapes)
        self.state = PrecondState(n_layers=len(self.layer_shapes))

    def needs_refresh(self, iteration: int) -> bool:
        return False

    def refresh(self, layer: int, record: LayerBatchRecord, iteration: int) -> None:
        """Recompute the expensive curvature structure of one layer."""

    def update_scalings(
        self, layer: int, record: LayerBatchRecord, mean_grad: np.ndarray
    ) -> None:
        """Update the cheap per-iteration statistics of one layer."""

    @abstractmethod
    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        pass


class SgdPreconditioner(Preconditioner):
    kind = PreconditionerKind.SGD

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        return np.array(mean_grad, dtype=np.float64)


class MomentumPreconditioner(Preconditioner):
    kind = PreconditionerKind.SGD_MOMENTUM

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        velocity = self.state.first_moments[layer]
        if velocity is None:
            velocity = np.zeros_like(mean_grad, dtype=np.float64)
        velocity = self.hyper.momentum * velocity + mean_grad
        self.state.first_moments[layer] = velocity
        return velocity.copy()


class AdamPreconditioner(Preconditioner):
    kind = PreconditionerKind.ADAM

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        beta1, beta2 = self.hyper.adam_beta1, self.hyper.adam_beta2
        m = self.state.first_moments[layer]
        v = self.state.second_moments[layer]
        if m is None or v is None:
            m = np.zeros_like(mean_grad, dtype=np.float64)
            v = np.zeros_like(mean_grad, dtype=np.float64)
        m = beta1 * m + (1.0 - beta1) * mean_grad
        v = beta2 * v + (1.0 - beta2) * mean_grad**2
        self.state.first_moments[layer] = m
        self.state.second_moments[layer] = v
        self.state.steps[layer] += 1
        t = self.state.steps[layer]
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        return m_hat / (np.sqrt(v_hat) + self.hyper.adam_epsilon)


def _individual_second_moment(record: LayerBatchRecord) -> np.ndarray:
    return vec((record.inputs_h**2).T @ (record.deltas**2) / record.batch_size)


class DiagonalPreconditioner(Preconditioner):
    """Diagonal empirical Fisher in the parameter basis."""

    kind = PreconditionerKind.DIAGONAL

    def update_scalings(
        self, layer: int, record: LayerBatchRecord, mean_grad: np.ndarray
    ) -> None:
        if self.hyper.ra_source == RunningSource.INDIVIDUAL:
            squared = _individual_second_moment(record)
        else:
            squared = np.asarray(mean_grad, dtype=np.float64) ** 2
        previous = self.state.second_moments[layer]
        if previous is None:
            self.state.second_moments[layer] = squared
            return
        decay = self.hyper.running_decay
        self.state.second_moments[layer] = decay * previous + (1.0 - decay) * squared

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        return precondition_diagonal(
            self.state.second_moments[layer], mean_grad, self.hyper.damping
        )


class _AmortizedPreconditioner(Preconditioner):
    def needs_refresh(self, iteration: int) -> bool:
        return iteration % self.hyper.refresh_every == 0

    def refresh(self, layer: int, record: LayerBatchRecord, iteration: int) -> None:
        factors = estimate_factors(record)
        if self.hyper.factor_decay is not None:
            factors = blend_factors(
                self.state.factors[layer], factors, self.hyper.factor_decay
            )
        self.state.factors[layer] = factors
        self.state.kfe[layer] = kfe_state_from_factors(factors, iteration)
        if layer == 0:
            self.state.refresh_iterations.append(iteration)
        logger.debug(
            "Refreshed eigenbasis of layer %d at iteration %d", layer, iteration
        )


class KfacPreconditioner(_AmortizedPreconditioner):
    kind = PreconditionerKind.KFAC

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        return precondition_kfac(
            self.state.kfe[layer],
            mean_grad,
            self.hyper.damping,
            self.hyper.kfac_damping,
        )


class EkfacPreconditioner(_AmortizedPreconditioner):
    """s* re-estimated from scratch on every minibatch."""

    kind = PreconditionerKind.EKFAC

    def _kfe(self, layer: int) -> KfeState:
        state = self.state.kfe[layer]
        if state is None:
            raise PreconditionerStateError(f"Layer {layer} has no eigenbasis yet")
        return state

    def update_scalings(
        self, layer: int, record: LayerBatchRecord, mean_grad: np.ndarray
    ) -> None:
        state = self._kfe(layer)
        state.set_s_star(compute_s_star_from_record(state, record))

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        return precondition_ekfac(self.state.kfe[layer], mean_grad, self.hyper.damping)


class EkfacRunningPreconditioner(EkfacPreconditioner):
    """s* as a running average; restarted whenever the basis changes."""

    kind = PreconditionerKind.EKFAC_RA

    def update_scalings(
        self, layer: int, record: LayerBatchRecord, mean_grad: np.ndarray
    ) -> None:
        state = self._kfe(layer)
        if self.hyper.ra_source == RunningSource.INDIVIDUAL:
            s_star = update_s_star_running_individual(
                state, record, self.hyper.running_decay
            )
        else:
            s_star = update_s_star_running(state, mean_grad, self.hyper.running_decay)
        state.set_s_star(s_star)


class ExactFisherPreconditioner(Preconditioner):
    kind = PreconditionerKind.EXACT_FISHER

    def __init__(
        self, hyper: OptimizerHyperParams, layer_shapes: Sequence[Tuple[int, int]]
    ):
        super().__init__(hyper, layer_shapes)
        for d_in_h, d_out in self.layer_shapes:
            if d_in_h * d_out > hyper.oracle_max_params:
                raise ResourceLimitError(
                    "Layer too large for exact Fisher preconditioning",
                    requested=d_in_h * d_out,
                    limit=hyper.oracle_max_params,
                )

    def needs_refresh(self, iteration: int) -> bool:
        return iteration % self.hyper.refresh_every == 0

    def refresh(self, layer: int, record: LayerBatchRecord, iteration: int) -> None:
        self.state.exact[layer] = exact_fisher_block(
            per_example_gradients(record), max_params=self.hyper.oracle_max_params
        )
        if layer == 0:
            self.state.refresh_iterations.append(iteration)

    def precondition(self, layer: int, mean_grad: np.ndarray) -> np.ndarray:
        return precondition_exact(
            self.state.exact[layer], mean_grad, self.hyper.damping
        )


PRECONDITIONERS: Dict[PreconditionerKind, Type[Preconditioner]] = {
    cls.kind: cls
    for cls in (
        SgdPreconditioner,
        MomentumPreconditioner,
        AdamPreconditioner,
        DiagonalPreconditioner,
        KfacPreconditioner,
        EkfacPreconditioner,
        EkfacRunningPreconditioner,
        ExactFisherPreconditioner,
    )
}


def build_optimizer(
    hyper: OptimizerHyperParams, layer_shapes: Sequence[Tuple[int, int]]
) -> Preconditioner:
    return PRECONDITIONERS[hyper.kind](hyper, layer_shapes)

