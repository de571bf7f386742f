from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from domain.exceptions import ContractViolationError
from domain.services.linalg import unvec, vec
from domain.value_objects.layer_spec import Activation, LayerSpec, LossKind


@dataclass
class LayerParams:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ContractViolationError(
                f"Bias of shape {self.bias.shape} does not fit weights "
                f"{self.weights.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ContractViolationError("Layer parameters must be finite")

    def augmented(self) -> np.ndarray:
        """Weights with the bias folded in as the last row."""
        return np.vstack([self.weights, self.bias[None, :]])


@dataclass
class Network:
    specs: List[LayerSpec]
    params: List[LayerParams]
    loss: LossKind = LossKind.MSE
    seed: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        if not self.specs:
            raise ContractViolationError("Network needs at least one layer")
        if len(self.specs) != len(self.params):
            raise ContractViolationError("Every layer needs parameters")
        for index, (spec, params) in enumerate(zip(self.specs, self.params)):
            if params.weights.shape != (spec.d_in, spec.d_out):
                raise ContractViolationError(
                    f"Layer {index} weights {params.weights.shape} do not match "
                    f"spec {spec.d_in}x{spec.d_out}"
                )
        for index in range(len(self.specs) - 1):
            if self.specs[index].d_out != self.specs[index + 1].d_in:
                raise ContractViolationError(
                    f"Layer {index} outputs {self.specs[index].d_out} units but "
                    f"layer {index + 1} expects {self.specs[index + 1].d_in}"
                )
        output = self.specs[-1].activation
        if self.loss == LossKind.BCE and output != Activation.SIGMOID:
            raise ContractViolationError("Binary cross-entropy needs a sigmoid output")

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        activations: Optional[Sequence[Activation]] = None,
        loss: LossKind = LossKind.MSE,
        seed: int = 0,
    ) -> "Network":
        if len(sizes) < 2:
            raise ContractViolationError("Architecture needs at least two sizes")
        n_layers = len(sizes) - 1
        if activations is None:
            activations = [Activation.SIGMOID] * n_layers
        if len(activations) != n_layers:
            raise ContractViolationError(
                f"Expected {n_layers} activations, got {len(activations)}"
            )

        rng = np.random.default_rng(seed)
        specs, params = [], []
        for d_in, d_out, activation in zip(sizes[:-1], sizes[1:], activations):
            spec = LayerSpec(d_in=int(d_in), d_out=int(d_out), activation=activation)
            bound = 1.0 / np.sqrt(spec.d_in)
            specs.append(spec)
            params.append(
                LayerParams(
                    weights=rng.uniform(-bound, bound, size=(spec.d_in, spec.d_out)),
                    bias=np.zeros(spec.d_out),
                )
            )
        return cls(specs=specs, params=params, loss=loss, seed=seed)

    @property
    def layers(self) -> List[Tuple[LayerSpec, LayerParams]]:
        return list(zip(self.specs, self.params))

    @property
    def depth(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].d_in

    @property
    def output_dim(self) -> int:
        return self.specs[-1].d_out

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(d_in + 1, d_out) per layer, the shape of each gradient matrix."""
        return [(spec.homogeneous_in, spec.d_out) for spec in self.specs]

    def parameter_vector(self, layer: int) -> np.ndarray:
        return vec(self.params[layer].augmented())

    def set_parameter_vector(self, layer: int, theta: np.ndarray) -> None:
        spec = self.specs[layer]
        matrix = unvec(theta, spec.homogeneous_in, spec.d_out)
        self.params[layer] = LayerParams(weights=matrix[:-1], bias=matrix[-1])

    def apply_update(self, layer: int, step: np.ndarray) -> None:
        """theta <- theta - step for one layer, ``step`` in vec layout."""
        self.set_parameter_vector(layer, self.parameter_vector(layer) - step)

    def copy(self) -> "Network":
        return Network(
            specs=list(self.specs),
            params=[
                LayerParams(weights=p.weights.copy(), bias=p.bias.copy())
                for p in self.params
            ],
            loss=self.loss,
            seed=self.seed,
        )
