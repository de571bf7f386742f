from abc import ABC, abstractmethod
from typing import Any, Mapping, Optional, Sequence


class ReportRepository(ABC):

    @abstractmethod
    def write_table(
        self,
        path: str,
        columns: Sequence[str],
        rows: Sequence[Mapping[str, Any]],
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> None:
        """Write a table with a header row; metadata goes to a sidecar file"""
        pass
