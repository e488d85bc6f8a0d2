"""
Metric table: (dataset, method) rows serialized to CSV
"""

import csv
from pathlib import Path
from typing import Iterable, List, Union

from aspstain.core.exceptions import DataError
from aspstain.schemas.reports import MetricRow

CSV_HEADER = [
    "dataset", "method", "SSIM",
    "PHV_layer1", "PHV_layer2", "PHV_layer3", "PHV_layer4", "PHV_avg",
    "FID", "KIDx1000",
]


def row_to_csv(row: MetricRow) -> List[str]:
    values = [row.ssim, *row.phv_layers, row.phv_avg, row.fid, row.kid_x1000]
    return [row.dataset, row.method] + [f"{v:.6f}" for v in values]


def row_from_csv(record: dict) -> MetricRow:
    return MetricRow(
        dataset=record["dataset"],
        method=record["method"],
        ssim=float(record["SSIM"]),
        phv_layers=[float(record[f"PHV_layer{i}"]) for i in range(1, 5)],
        phv_avg=float(record["PHV_avg"]),
        fid=float(record["FID"]),
        kid_x1000=float(record["KIDx1000"]),
    )


class MetricTable:
    """Rows keyed by (dataset, method); adding a row with an existing key replaces it"""

    def __init__(self, rows: Iterable[MetricRow] = ()):
        self._rows = {}
        for row in rows:
            self.add(row)

    def add(self, row: MetricRow) -> None:
        self._rows[(row.dataset, row.method)] = row

    @property
    def rows(self) -> List[MetricRow]:
        return list(self._rows.values())

    def __len__(self) -> int:
        return len(self._rows)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_HEADER)
            for row in self.rows:
                writer.writerow(row_to_csv(row))
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "MetricTable":
        """
        Read a table written by to_csv.

        Raises:
            DataError: If the file is unreadable or not a metric table
        """
        try:
            with open(path, newline="") as handle:
                reader = csv.DictReader(handle)
                if reader.fieldnames != CSV_HEADER:
                    raise DataError(f"{path}: unexpected metric CSV header {reader.fieldnames}")
                rows = []
                for record in reader:
                    try:
                        rows.append(row_from_csv(record))
                    except (KeyError, TypeError, ValueError) as e:
                        raise DataError(f"{path}: malformed metric row on line {reader.line_num}: {e}") from e
        except OSError as e:
            raise DataError(f"Cannot read metric table {path}: {e}") from e
        return cls(rows)

    @classmethod
    def load_or_empty(cls, path: Union[str, Path]) -> "MetricTable":
        return cls.from_csv(path) if Path(path).is_file() else cls()
