"""One optimizer step in the order: forward, backward, then per layer
refresh the eigenbasis on schedule, update the scalings, precondition and
update the parameters.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from application.services.phase_timer import PhaseTimer
from domain.entities.network import Network
from domain.exceptions import NumericError
from domain.services.backprop import BackwardResult, backward, forward
from domain.services.preconditioners import Preconditioner


@dataclass(frozen=True)
class StepOutcome:
    iteration: int
    loss: float
    refreshed: bool
    backward: BackwardResult
    updates: List[np.ndarray]


def step(
    net: Network,
    optimizer: Preconditioner,
    batch: np.ndarray,
    targets: np.ndarray,
    lr: float,
    timer: Optional[PhaseTimer] = None,
) -> StepOutcome:
    """Take one step on ``net`` in place; the loss is measured before the update."""
    timer = timer or PhaseTimer()
    iteration = optimizer.state.iteration

    with timer.phase("forward"):
        _, cache = forward(net, batch)
    with timer.phase("backward"):
        result = backward(net, cache, targets)

    refreshed = optimizer.needs_refresh(iteration)
    if refreshed:
        with timer.phase("basis_refresh"):
            for layer, record in enumerate(result.records):
                optimizer.refresh(layer, record, iteration)

    with timer.phase("scaling"):
        for layer, record in enumerate(result.records):
            optimizer.update_scalings(layer, record, result.mean_gradients[layer])

    with timer.phase("precondition"):
        directions = [
            optimizer.precondition(layer, grad)
            for layer, grad in enumerate(result.mean_gradients)
        ]

    updates = [lr * direction for direction in directions]
    for layer, update in enumerate(updates):
        if not np.all(np.isfinite(update)):
            raise NumericError(f"Non-finite update for layer {layer}")
    with timer.phase("update"):
        for layer, update in enumerate(updates):
            net.apply_update(layer, update)

    optimizer.state.advance()
    return StepOutcome(
        iteration=iteration,
        loss=result.loss,
        refreshed=refreshed,
        backward=result,
        updates=updates,
    )
