import logging
from typing import List, Optional

import numpy as np

from application.dto.diagnostics_dto import SpectrumTraceRow
from application.services.training_step import StepOutcome
from domain.entities.kfe_state import KfeState
from domain.entities.network import Network
from domain.exceptions import ContractViolationError, ResourceLimitError
from domain.services.backprop import backward, forward, per_example_gradients
from domain.services.curvature import (
    DEFAULT_ORACLE_MAX_PARAMS,
    DEFAULT_RUNNING_DECAY,
    compute_s_star_from_record,
    estimate_factors,
    exact_fisher_block,
    kfe_state_from_factors,
    update_s_star_running,
)
from domain.services.diagnostics import spectrum_trace
from domain.value_objects.diagnostics import SpectrumTrace
from domain.value_objects.layer_record import LayerBatchRecord

logger = logging.getLogger(__name__)

DEFAULT_TRACE_BATCH = 500


class TrainingObserver:
    """Hooks called by the training loop; the default does nothing."""

    def on_start(self, net: Network, inputs: np.ndarray, targets: np.ndarray) -> None:
        pass

    def on_step(self, net: Network, outcome: StepOutcome) -> None:
        pass


class SpectrumTracker(TrainingObserver):
    """Eigenspectra of one layer in a Kronecker-factored eigenbasis fixed at start.

    At every ``stride``-th iteration a trace batch is drawn and the exact
    empirical Fisher of the layer is compared with KFAC's eigenvalues and with
    two EKFAC scalings: the intrabatch estimate on the trace batch and a running
    average fed by the training minibatches. KFAC's eigenvalues stay those of
    the initial factors unless ``kfac_refresh_every`` is set, in which case new
    factors are projected into the fixed basis on that schedule.
    """

    def __init__(
        self,
        layer: int,
        stride: int,
        trace_batch_size: int = DEFAULT_TRACE_BATCH,
        running_decay: float = DEFAULT_RUNNING_DECAY,
        kfac_refresh_every: Optional[int] = None,
        max_params: int = DEFAULT_ORACLE_MAX_PARAMS,
        seed: int = 0,
    ):
        if stride < 1 or trace_batch_size < 1:
            raise ContractViolationError("Stride and trace batch size must be positive")
        if kfac_refresh_every is not None and kfac_refresh_every < 1:
            raise ContractViolationError("KFAC refresh period must be positive")
        self.layer = layer
        self.stride = stride
        self.trace_batch_size = trace_batch_size
        self.running_decay = running_decay
        self.kfac_refresh_every = kfac_refresh_every
        self.max_params = max_params
        self.traces: List[SpectrumTrace] = []
        self._rng = np.random.default_rng(seed)
        self._inputs: Optional[np.ndarray] = None
        self._targets: Optional[np.ndarray] = None
        self._kfac: Optional[KfeState] = None
        self._running: Optional[KfeState] = None

    def on_start(self, net: Network, inputs: np.ndarray, targets: np.ndarray) -> None:
        if not 0 <= self.layer < net.depth:
            raise ContractViolationError(
                f"Layer {self.layer} out of range for a {net.depth}-layer network"
            )
        d_in_h, d_out = net.layer_shapes()[self.layer]
        if d_in_h * d_out > self.max_params:
            raise ResourceLimitError(
                f"Layer {self.layer} too large to trace",
                requested=d_in_h * d_out,
                limit=self.max_params,
            )
        self._inputs, self._targets = inputs, targets
        basis = kfe_state_from_factors(estimate_factors(self._trace_record(net)))
        self._kfac = basis
        self._running = KfeState(
            u_a=basis.u_a, s_a=basis.s_a, u_b=basis.u_b, s_b=basis.s_b
        )
        logger.info(
            "Tracking spectrum of layer %d (%d parameters) every %d iterations",
            self.layer,
            d_in_h * d_out,
            self.stride,
        )

    def on_step(self, net: Network, outcome: StepOutcome) -> None:
        if self._kfac is None or self._running is None:
            raise ContractViolationError("Tracker was not started")
        mean_grad = outcome.backward.mean_gradients[self.layer]
        self._running.set_s_star(
            update_s_star_running(self._running, mean_grad, self.running_decay)
        )
        if outcome.iteration % self.stride != 0:
            return

        record = self._trace_record(net)
        if (
            self.kfac_refresh_every is not None
            and outcome.iteration > 0
            and outcome.iteration % self.kfac_refresh_every == 0
        ):
            self._kfac = self._projected_kfac(record)
        block = exact_fisher_block(
            per_example_gradients(record), max_params=self.max_params
        )
        trace = spectrum_trace(
            iteration=outcome.iteration,
            block=block,
            kfac_state=self._kfac,
            ekfac_s_star=compute_s_star_from_record(self._kfac, record),
            ekfac_ra_s_star=self._running.s_star,
        )
        self.traces.append(trace)
        logger.debug(
            "Spectrum at iteration %d: kfac %.4g, ekfac %.4g, ekfac-ra %.4g",
            trace.iteration,
            trace.dist_kfac,
            trace.dist_ekfac,
            trace.dist_ekfac_ra,
        )

    @property
    def rows(self) -> List[SpectrumTraceRow]:
        return [
            SpectrumTraceRow(
                iteration=t.iteration,
                dist_kfac=t.dist_kfac,
                dist_ekfac_intrabatch=t.dist_ekfac,
                dist_ekfac_ra=t.dist_ekfac_ra,
            )
            for t in self.traces
        ]

    def _trace_record(self, net: Network) -> LayerBatchRecord:
        n = self._inputs.shape[0]
        index = np.sort(
            self._rng.choice(n, size=min(self.trace_batch_size, n), replace=False)
        )
        _, cache = forward(net, self._inputs[index])
        return backward(net, cache, self._targets[index]).records[self.layer]

    def _projected_kfac(self, record: LayerBatchRecord) -> KfeState:
        factors = estimate_factors(record)
        u_a, u_b = self._kfac.u_a, self._kfac.u_b
        return KfeState(
            u_a=u_a,
            s_a=np.maximum(np.einsum("ij,ik,kj->j", u_a, factors.a, u_a), 0.0),
            u_b=u_b,
            s_b=np.maximum(np.einsum("ij,ik,kj->j", u_b, factors.b, u_b), 0.0),
        )
