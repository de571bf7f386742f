from abc import ABC, abstractmethod
from typing import Any, Dict, List, Mapping, Sequence


class MetricsRepository(ABC):

    @abstractmethod
    def reset(self, path: str) -> None:
        """Start an empty metrics stream at path, discarding any previous one"""
        pass

    @abstractmethod
    def append(self, path: str, records: Sequence[Mapping[str, Any]]) -> None:
        """Append records to the stream and flush them to storage"""
        pass

    @abstractmethod
    def read(self, path: str) -> List[Dict[str, Any]]:
        """Read every record of a stream in order"""
        pass
