"""Forward and backward passes with per-example capture of h and delta."""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.special import expit

from domain.entities.network import Network
from domain.exceptions import ContractViolationError, NumericError
from domain.services.linalg import vec
from domain.value_objects.layer_record import LayerBatchRecord
from domain.value_objects.layer_spec import Activation, LossKind


@dataclass(frozen=True)
class ForwardCache:
    inputs: List[np.ndarray]
    preactivations: List[np.ndarray]
    outputs: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.outputs.shape[0]


@dataclass(frozen=True)
class BackwardResult:
    records: List[LayerBatchRecord]
    mean_gradients: List[np.ndarray]
    loss: float


def activate(activation: Activation, a: np.ndarray) -> np.ndarray:
    if activation == Activation.SIGMOID:
        return expit(a)
    if activation == Activation.RELU:
        return np.maximum(a, 0.0)
    return a


def activation_derivative(activation: Activation, a: np.ndarray) -> np.ndarray:
    if activation == Activation.SIGMOID:
        s = expit(a)
        return s * (1.0 - s)
    if activation == Activation.RELU:
        # subgradient at 0 is 0
        return (a > 0.0).astype(np.float64)
    return np.ones_like(a)


def with_bias_coordinate(h: np.ndarray) -> np.ndarray:
    return np.hstack([h, np.ones((h.shape[0], 1))])


def _as_batch(batch: np.ndarray, width: int, what: str) -> np.ndarray:
    array = np.asarray(batch, dtype=np.float64)
    if array.ndim != 2 or array.shape[1] != width or array.shape[0] < 1:
        raise ContractViolationError(
            f"Expected {what} of shape (n, {width}), got {array.shape}"
        )
    return array


def forward(net: Network, batch: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    h = _as_batch(batch, net.input_dim, "input batch")
    inputs, preactivations = [], []
    for spec, params in net.layers:
        a = h @ params.weights + params.bias
        inputs.append(h)
        preactivations.append(a)
        h = activate(spec.activation, a)
    if not np.all(np.isfinite(h)):
        raise NumericError("Forward pass produced non-finite outputs")
    return h, ForwardCache(inputs=inputs, preactivations=preactivations, outputs=h)


def per_example_losses(
    net: Network, cache: ForwardCache, targets: np.ndarray
) -> np.ndarray:
    t = _as_batch(targets, net.output_dim, "targets")
    if t.shape[0] != cache.batch_size:
        raise ContractViolationError(
            f"Got {t.shape[0]} targets for {cache.batch_size} examples"
        )
    if net.loss == LossKind.BCE:
        a = cache.preactivations[-1]
        return np.sum(np.logaddexp(0.0, a) - t * a, axis=1)
    return 0.5 * np.sum((cache.outputs - t) ** 2, axis=1)


def output_deltas(net: Network, cache: ForwardCache, targets: np.ndarray) -> np.ndarray:
    """d loss / d a for the last layer, one row per example."""
    t = np.asarray(targets, dtype=np.float64)
    if net.loss == LossKind.BCE:
        return cache.outputs - t
    return (cache.outputs - t) * activation_derivative(
        net.specs[-1].activation, cache.preactivations[-1]
    )


def backward(net: Network, cache: ForwardCache, targets: np.ndarray) -> BackwardResult:
    losses = per_example_losses(net, cache, targets)
    loss = float(np.mean(losses))
    if not np.isfinite(loss):
        raise NumericError("Loss is not finite")

    delta = output_deltas(net, cache, targets)
    records: List[LayerBatchRecord] = [None] * net.depth  # type: ignore[list-item]
    mean_gradients: List[np.ndarray] = [None] * net.depth  # type: ignore[list-item]
    for layer in reversed(range(net.depth)):
        h = with_bias_coordinate(cache.inputs[layer])
        records[layer] = LayerBatchRecord(inputs_h=h, deltas=delta)
        mean_gradients[layer] = vec(h.T @ delta / cache.batch_size)
        if layer > 0:
            previous = net.specs[layer - 1]
            delta = (delta @ net.params[layer].weights.T) * activation_derivative(
                previous.activation, cache.preactivations[layer - 1]
            )
    return BackwardResult(records=records, mean_gradients=mean_gradients, loss=loss)


def per_example_gradients(record: LayerBatchRecord) -> np.ndarray:
    """Rows are vec(h delta^T), one per example."""
    outer = record.inputs_h[:, :, None] * record.deltas[:, None, :]
    return outer.reshape(record.batch_size, record.param_count)


def evaluate_loss(net: Network, batch: np.ndarray, targets: np.ndarray) -> float:
    _, cache = forward(net, batch)
    return float(np.mean(per_example_losses(net, cache, targets)))
