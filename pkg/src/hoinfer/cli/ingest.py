"""CSV ingestion with typed columns and missing-value reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..exceptions import ValidationError

MISSING = {"", "NA", "NaN", "nan", "."}


@dataclass
class Table:
    """Numeric columns read from a CSV file.

    Missing cells are stored as NaN; :meth:`select` drops incomplete rows
    and records which ones were dropped.
    """

    columns: dict[str, np.ndarray]
    source: str = ""
    dropped: list[int] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    def missing_report(self) -> dict[str, int]:
        return {k: int(np.isnan(v).sum()) for k, v in self.columns.items()}

    def select(self, names: Sequence[str]) -> dict[str, np.ndarray]:
        """Columns ``names`` restricted to rows complete in all of them."""
        unknown = [n for n in names if n not in self.columns]
        if unknown:
            raise ValidationError(f"unknown column(s) {unknown} in {self.source}; available: {self.names}")
        keep = np.ones(self.n_rows, bool)
        for n in names:
            keep &= ~np.isnan(self.columns[n])
        self.dropped = [int(i) for i in np.nonzero(~keep)[0]]
        return {n: self.columns[n][keep] for n in names}

    def is_binary(self, name: str) -> bool:
        v = self.columns[name]
        v = v[~np.isnan(v)]
        return bool(np.all((v == 0) | (v == 1)))


def ingest(path: str | Path) -> Table:
    """Read a comma-separated file with a header row into a :class:`Table`.

    Raises
    ------
    ValidationError
        On an empty file, a row with the wrong number of fields or a
        non-numeric cell; the message carries the line number.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or any(h == "" for h in header):
            raise ValidationError(f"{path}: line 1: malformed header")
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: line 1: duplicate column names")
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {line_no}: expected {len(header)} fields, found {len(row)}")
            vals = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell in MISSING:
                    vals.append(np.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValidationError(f"{path}: line {line_no}: non-numeric value {cell!r} in column {name!r}") from None
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    return Table({h: arr[:, j] for j, h in enumerate(header)}, source=str(path))
