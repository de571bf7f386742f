import csv
import json
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from domain.repositories.report_repository import ReportRepository


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


class CsvReportRepository(ReportRepository):
    def write_table(
        self,
        path: str,
        columns: Sequence[str],
        rows: Sequence[Mapping[str, Any]],
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(row.get(key)) for key in columns})
        if metadata is not None:
            sidecar = target.with_name(f"{target.name}.meta.json")
            sidecar.write_text(json.dumps(dict(metadata), indent=2, sort_keys=True))
