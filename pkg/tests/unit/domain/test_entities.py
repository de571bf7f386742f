"""
Unit tests for domain entities.
"""

import numpy as np
import pytest

from domain.entities.kfe_state import KfeState
from domain.entities.network import LayerParams, Network
from domain.entities.precond_state import PrecondState
from domain.exceptions import ContractViolationError, PreconditionerStateError
from domain.value_objects.layer_spec import Activation, LayerSpec, LossKind


class TestNetwork:
    """Tests for Network entity."""

    def test_create_network(self):
        """Test a created network has the requested shapes and initialisation."""
        net = Network.create([5, 8, 6, 4], seed=3)

        assert net.depth == 3
        assert net.input_dim == 5
        assert net.output_dim == 4
        assert net.layer_shapes() == [(6, 8), (9, 6), (7, 4)]
        assert sum(r * c for r, c in net.layer_shapes()) == 130
        for spec, params in net.layers:
            assert spec.activation == Activation.SIGMOID
            assert np.all(np.abs(params.weights) <= 1.0 / np.sqrt(spec.d_in))
            np.testing.assert_array_equal(params.bias, 0.0)

    def test_create_is_deterministic(self):
        a = Network.create([4, 3, 4], seed=11)
        b = Network.create([4, 3, 4], seed=11)
        c = Network.create([4, 3, 4], seed=12)

        np.testing.assert_array_equal(a.params[0].weights, b.params[0].weights)
        assert not np.array_equal(a.params[0].weights, c.params[0].weights)

    def test_invalid_architectures(self):
        with pytest.raises(ContractViolationError, match="at least two sizes"):
            Network.create([5])
        with pytest.raises(ContractViolationError, match="Expected 2 activations"):
            Network.create([5, 3, 5], activations=[Activation.RELU])

    def test_layer_chain_must_connect(self):
        specs = [LayerSpec(3, 2), LayerSpec(4, 3)]
        params = [
            LayerParams(weights=np.zeros((3, 2)), bias=np.zeros(2)),
            LayerParams(weights=np.zeros((4, 3)), bias=np.zeros(3)),
        ]

        with pytest.raises(ContractViolationError, match="expects 4"):
            Network(specs=specs, params=params)

    def test_bce_needs_sigmoid_output(self):
        with pytest.raises(ContractViolationError, match="sigmoid output"):
            Network.create(
                [3, 2, 3],
                activations=[Activation.SIGMOID, Activation.IDENTITY],
                loss=LossKind.BCE,
            )

    def test_parameter_vector_layout(self, small_network):
        """Test the bias is the last row of the vectorised gradient matrix."""
        theta = small_network.parameter_vector(2)
        matrix = theta.reshape(7, 4)

        np.testing.assert_array_equal(matrix[:-1], small_network.params[2].weights)
        np.testing.assert_array_equal(matrix[-1], small_network.params[2].bias)

    def test_apply_update(self, small_network):
        before = small_network.parameter_vector(1)
        step = np.full(before.shape, 0.25)

        small_network.apply_update(1, step)

        np.testing.assert_allclose(small_network.parameter_vector(1), before - 0.25)

    def test_copy_is_independent(self, small_network):
        clone = small_network.copy()
        clone.apply_update(0, np.ones(48))

        assert not np.array_equal(
            clone.parameter_vector(0), small_network.parameter_vector(0)
        )
        assert clone.seed == small_network.seed

    def test_non_finite_parameters_rejected(self):
        with pytest.raises(ContractViolationError, match="finite"):
            LayerParams(weights=np.array([[np.nan]]), bias=np.zeros(1))


class TestKfeState:
    """Tests for KfeState entity."""

    def test_identity_state(self):
        state = KfeState.identity(d_in_h=3, d_out=2)

        assert state.param_count == 6
        assert state.s_star is None

    def test_require_s_star_before_estimate(self):
        """Test reading s* before it is estimated raises."""
        state = KfeState.identity(3, 2)

        with pytest.raises(PreconditionerStateError):
            state.require_s_star()

    def test_set_s_star(self):
        state = KfeState.identity(3, 2)

        state.set_s_star(np.arange(6.0))

        np.testing.assert_array_equal(state.require_s_star(), np.arange(6.0))

    def test_invalid_s_star(self):
        state = KfeState.identity(3, 2)
        invalid = [np.ones(5), -np.ones(6), np.full(6, np.nan)]

        for s_star in invalid:
            with pytest.raises(ContractViolationError):
                state.set_s_star(s_star)

    def test_non_orthogonal_basis_rejected(self):
        with pytest.raises(ContractViolationError, match="u_a is not orthogonal"):
            KfeState(
                u_a=2.0 * np.eye(2), s_a=np.ones(2), u_b=np.eye(1), s_b=np.ones(1)
            )

    def test_eigenvalue_shapes_checked(self):
        with pytest.raises(ContractViolationError, match="do not match"):
            KfeState(u_a=np.eye(2), s_a=np.ones(3), u_b=np.eye(1), s_b=np.ones(1))


class TestPrecondState:
    """Tests for PrecondState entity."""

    def test_slots_created_per_layer(self):
        state = PrecondState(n_layers=3)

        assert state.kfe == [None, None, None]
        assert state.steps == [0, 0, 0]
        assert state.refresh_iterations == []

    def test_advance(self):
        state = PrecondState(n_layers=1)

        state.advance()
        state.advance()

        assert state.iteration == 2
