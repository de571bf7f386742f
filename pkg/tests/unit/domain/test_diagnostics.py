"""
Unit tests for the curvature diagnostics.
"""

import numpy as np
import pytest

from domain.exceptions import (
    ContractViolationError,
    PreconditionerStateError,
    ResourceLimitError,
)
from domain.services.backprop import per_example_gradients
from domain.services.curvature import (
    compute_s_star_from_record,
    estimate_factors,
    exact_fisher_block,
    kfac_eigenvalues,
    kfe_state_from_factors,
)
from domain.services.diagnostics import (
    MAX_CORRELATION_SUBSET,
    correlation_matrix,
    correlation_report,
    exact_spectrum,
    frobenius_errors,
    spectrum_trace,
)
from domain.value_objects.diagnostics import SpectrumTrace, spectrum_distances


@pytest.fixture
def measured_layer(record_factory):
    """A record with its factors, eigenbasis and intrabatch scalings."""
    record = record_factory(batch=64, d_in=4, d_out=3)
    factors = estimate_factors(record)
    state = kfe_state_from_factors(factors)
    state.set_s_star(compute_s_star_from_record(state, record))
    return record, factors, state


class TestFrobeniusErrors:
    """Tests for Frobenius errors against the exact Fisher block."""

    def test_ekfac_dominates(self, measured_layer):
        record, factors, state = measured_layer

        errors = frobenius_errors(per_example_gradients(record), factors, state)

        assert errors.err_kfac > 0.0
        assert errors.ekfac_dominates

    def test_needs_scalings(self, measured_layer):
        record, factors, _ = measured_layer
        fresh = kfe_state_from_factors(factors)

        with pytest.raises(PreconditionerStateError):
            frobenius_errors(per_example_gradients(record), factors, fresh)

    def test_oracle_limit(self, measured_layer):
        record, factors, state = measured_layer

        with pytest.raises(ResourceLimitError):
            frobenius_errors(
                per_example_gradients(record), factors, state, max_params=10
            )

    def test_kron_limit(self, measured_layer):
        record, factors, state = measured_layer

        with pytest.raises(ResourceLimitError) as excinfo:
            frobenius_errors(
                per_example_gradients(record), factors, state, max_kron_dim=10
            )

        assert excinfo.value.limit == 10

    def test_sizes_must_agree(self, measured_layer, record_factory):
        _, factors, state = measured_layer
        other = record_factory(batch=8, d_in=2, d_out=2)

        with pytest.raises(ContractViolationError, match="disagree"):
            frobenius_errors(per_example_gradients(other), factors, state)


class TestSpectra:
    """Tests for spectrum measurements."""

    def test_exact_spectrum_sorted(self, rng):
        block = exact_fisher_block(rng.standard_normal((20, 5)))

        spectrum = exact_spectrum(block)

        assert np.all(np.diff(spectrum) <= 0)
        assert spectrum[-1] >= 0.0
        np.testing.assert_allclose(np.sum(spectrum), np.trace(block.g))

    def test_spectrum_trace(self, measured_layer):
        """Test distances are taken between descending-sorted spectra."""
        record, _, state = measured_layer
        block = exact_fisher_block(per_example_gradients(record))

        trace = spectrum_trace(3, block, state, state.s_star)

        assert trace.iteration == 3
        assert trace.dist_ekfac_ra is None
        np.testing.assert_allclose(trace.kfac, np.sort(kfac_eigenvalues(state))[::-1])
        assert trace.dist_ekfac == pytest.approx(
            np.linalg.norm(exact_spectrum(block) - np.sort(state.s_star)[::-1])
        )

    def test_spectrum_distances(self):
        distances = spectrum_distances([1.0, 3.0], [3.0, 1.0], None, [0.0, 3.0])

        assert distances == [0.0, None, 1.0]

    def test_spectrum_distances_length_mismatch(self):
        with pytest.raises(ContractViolationError):
            spectrum_distances([1.0, 2.0], [1.0])

    def test_trace_distances_match_spectrum_distances(self, rng):
        exact, kfac, ekfac, ekfac_ra = rng.uniform(0.0, 2.0, size=(4, 12))

        trace = SpectrumTrace(
            iteration=0, exact=exact, kfac=kfac, ekfac=ekfac, ekfac_ra=ekfac_ra
        )

        assert [
            trace.dist_kfac,
            trace.dist_ekfac,
            trace.dist_ekfac_ra,
        ] == spectrum_distances(exact, kfac, ekfac, ekfac_ra)

    def test_trace_length_mismatch(self):
        with pytest.raises(ContractViolationError):
            SpectrumTrace(iteration=0, exact=np.ones(3), kfac=np.ones(3), ekfac=[1.0])


class TestCorrelation:
    """Tests for gradient correlation reports."""

    def test_correlation_matrix(self, rng):
        x = rng.standard_normal((200, 3))
        x[:, 2] = 2.0 * x[:, 0]

        corr = correlation_matrix(x)

        np.testing.assert_allclose(corr, np.corrcoef(x, rowvar=False), atol=1e-12)
        assert corr[0, 2] == pytest.approx(1.0)

    def test_constant_coordinate(self, rng):
        """Test a zero-variance coordinate is uncorrelated with everything."""
        x = rng.standard_normal((10, 3))
        x[:, 1] = 4.0

        corr = correlation_matrix(x)

        np.testing.assert_array_equal(corr[1], [0.0, 1.0, 0.0])

    def test_correlation_report(self, measured_layer):
        record, _, state = measured_layer
        grads = per_example_gradients(record)

        report = correlation_report(grads, state, subset=range(record.param_count))

        assert report.parameter_basis.shape == (15, 15)
        assert 0.0 <= report.kfe_offdiag_mean <= 1.0
        assert 0.0 <= report.parameter_offdiag_mean <= 1.0

    def test_invalid_subsets(self, measured_layer):
        record, _, state = measured_layer
        grads = per_example_gradients(record)
        invalid = [[], [0, 99], [-1], list(range(MAX_CORRELATION_SUBSET + 1))]

        for subset in invalid:
            with pytest.raises(ContractViolationError):
                correlation_report(grads, state, subset)

    def test_needs_two_examples(self, measured_layer):
        record, _, state = measured_layer

        with pytest.raises(ContractViolationError, match="two examples"):
            correlation_report(per_example_gradients(record)[:1], state, [0])
