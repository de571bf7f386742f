import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

from domain.exceptions import ContractViolationError
from domain.repositories.metrics_repository import MetricsRepository


class JsonLinesMetricsRepository(MetricsRepository):
    """One JSON object per line, appended and flushed per call."""

    def reset(self, path: str) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("")

    def append(self, path: str, records: Sequence[Mapping[str, Any]]) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("a") as f:
            for record in records:
                f.write(json.dumps(dict(record), allow_nan=False) + "\n")
            f.flush()

    def read(self, path: str) -> List[Dict[str, Any]]:
        records = []
        with Path(path).open() as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ContractViolationError(
                        f"{path}:{number}: not a JSON record ({e})"
                    ) from e
        return records
