from abc import ABC, abstractmethod

from domain.entities.network import Network


class CheckpointRepository(ABC):

    @abstractmethod
    def save(self, network: Network, path: str) -> None:
        """Persist network parameters and architecture"""
        pass

    @abstractmethod
    def load(self, path: str) -> Network:
        """Restore a network saved by save"""
        pass
