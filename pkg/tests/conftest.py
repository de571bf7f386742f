"""
Pytest configuration and fixtures for the curvature benchmark.
"""

import copy
from typing import Any, Dict, List, Mapping, Optional, Sequence
from unittest.mock import Mock

import numpy as np
import pytest
from scipy.special import expit

from domain.entities.network import Network
from domain.repositories.checkpoint_repository import CheckpointRepository
from domain.repositories.metrics_repository import MetricsRepository
from domain.repositories.report_repository import ReportRepository
from domain.services.backprop import backward, forward
from domain.value_objects.dataset import Dataset
from domain.value_objects.layer_record import LayerBatchRecord


class FakeClock:
    """Advances by a fixed tick on every reading."""

    def __init__(self, tick: float = 0.001):
        self.tick = tick
        self.now = 0.0

    def __call__(self) -> float:
        self.now += self.tick
        return self.now


class InMemoryMetricsRepository(MetricsRepository):
    def __init__(self):
        self.streams: Dict[str, List[Dict[str, Any]]] = {}
        self.flushes: Dict[str, int] = {}

    def reset(self, path: str) -> None:
        self.streams[path] = []
        self.flushes[path] = 0

    def append(self, path: str, records: Sequence[Mapping[str, Any]]) -> None:
        self.streams.setdefault(path, []).extend(dict(r) for r in records)
        self.flushes[path] = self.flushes.get(path, 0) + 1

    def read(self, path: str) -> List[Dict[str, Any]]:
        return copy.deepcopy(self.streams.get(path, []))


class InMemoryCheckpointRepository(CheckpointRepository):
    def __init__(self):
        self.saved: Dict[str, Network] = {}

    def save(self, network: Network, path: str) -> None:
        self.saved[path] = network.copy()

    def load(self, path: str) -> Network:
        return self.saved[path].copy()


class InMemoryReportRepository(ReportRepository):
    def __init__(self):
        self.tables: Dict[str, Dict[str, Any]] = {}

    def write_table(
        self,
        path: str,
        columns: Sequence[str],
        rows: Sequence[Mapping[str, Any]],
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> None:
        self.tables[path] = {
            "columns": list(columns),
            "rows": [dict(row) for row in rows],
            "metadata": None if metadata is None else dict(metadata),
        }


@pytest.fixture
def rng():
    """Seeded generator so every test sees the same draws."""
    return np.random.default_rng(1234)


@pytest.fixture
def spd_factory(rng):
    """Factory for random symmetric positive definite matrices."""

    def _create(n: int, jitter: float = 1e-3) -> np.ndarray:
        m = rng.standard_normal((n, n))
        spd = m @ m.T / n + jitter * np.eye(n)
        return 0.5 * (spd + spd.T)

    return _create


@pytest.fixture
def record_factory(rng):
    """Factory for layer records with a homogeneous input column."""

    def _create(batch: int = 16, d_in: int = 3, d_out: int = 2) -> LayerBatchRecord:
        h = rng.standard_normal((batch, d_in))
        return LayerBatchRecord(
            inputs_h=np.hstack([h, np.ones((batch, 1))]),
            deltas=rng.standard_normal((batch, d_out)),
        )

    return _create


@pytest.fixture
def small_network():
    """5-8-6-4 sigmoid network, 130 parameters."""
    return Network.create([5, 8, 6, 4], seed=3)


@pytest.fixture
def small_batch(rng):
    inputs = expit(rng.standard_normal((12, 5)))
    targets = expit(rng.standard_normal((12, 4)))
    return inputs, targets


@pytest.fixture
def small_backward(small_network, small_batch):
    inputs, targets = small_batch
    _, cache = forward(small_network, inputs)
    return backward(small_network, cache, targets)


@pytest.fixture
def autoencoder_dataset():
    """60 six-dimensional examples from a rank-2 sigmoid model."""
    generator = np.random.default_rng(7)
    latents = generator.standard_normal((60, 2))
    mixing = generator.standard_normal((2, 6))
    return Dataset(inputs=expit(latents @ mixing), name="toy")


@pytest.fixture
def fake_clock():
    return FakeClock()


@pytest.fixture
def metrics_repository():
    return InMemoryMetricsRepository()


@pytest.fixture
def checkpoint_repository():
    return InMemoryCheckpointRepository()


@pytest.fixture
def report_repository():
    return InMemoryReportRepository()


@pytest.fixture
def mock_dataset_repository(autoencoder_dataset):
    """Dataset repository that always hands out the toy dataset."""
    mock = Mock()
    mock.load_mnist.return_value = autoencoder_dataset
    mock.generate_synthetic.return_value = autoencoder_dataset
    return mock
