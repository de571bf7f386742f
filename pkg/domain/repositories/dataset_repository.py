from abc import ABC, abstractmethod
from typing import Optional

from domain.value_objects.dataset import Dataset


class DatasetRepository(ABC):

    @abstractmethod
    def load_mnist(self, directory: Optional[str] = None) -> Dataset:
        """Load MNIST training images (and labels when present) from IDX files

        With no directory the configured data directory is used.
        """
        pass

    @abstractmethod
    def generate_synthetic(
        self,
        n: int,
        dim: int,
        latent_dim: int,
        seed: int,
        identity_mixing: bool = False,
    ) -> Dataset:
        """Generate a deterministic synthetic dataset with low-dimensional structure"""
        pass
