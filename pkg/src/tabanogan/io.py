"""CSV ingestion and emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .preprocess import Dataset


class CsvError(ValueError):
    pass


@dataclass
class DatasetSchema:
    path: str = ""
    label_column: str = "label"
    anomaly_value: str = "0"
    drop: tuple[str, ...] = ("dow", "hod")
    features: tuple[str, ...] = ()  # empty: every non-label, non-dropped column

    def __post_init__(self):
        self.drop = tuple(self.drop)
        self.features = tuple(self.features)
        clash = set(self.drop) & set(self.features)
        if clash:
            raise ValueError(f"columns both dropped and used as features: {sorted(clash)}")
        if self.label_column in self.features or self.label_column in self.drop:
            raise ValueError("label column cannot be a feature or a dropped column")


def load_csv(path, schema: DatasetSchema | None = None, require_label: bool = False) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Every column other than the label column must hold finite numbers; the
    label column is kept as raw strings.  With ``schema.features`` set, only
    those columns (plus dropped ones, still present for ``drop_columns``)
    are read.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise CsvError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = list(reader)
    if len(set(header)) != len(header):
        raise CsvError(f"{path}: duplicate column names")

    label = None
    if schema is not None and schema.label_column in header:
        label = schema.label_column
    elif schema is not None and require_label:
        raise CsvError(f"{path}: missing label column {schema.label_column!r}")
    if schema is not None and schema.features:
        wanted = [c for c in header if c in schema.features or c in schema.drop]
        missing = [c for c in (*schema.features, *schema.drop) if c not in header]
        if missing:
            raise CsvError(f"{path}: missing column(s) {', '.join(missing)}")
    else:
        wanted = [c for c in header if c != label]
    col_idx = [header.index(c) for c in wanted]
    label_idx = header.index(label) if label is not None else None

    values = np.empty((len(rows), len(wanted)))
    labels = np.empty(len(rows), dtype=object) if label is not None else None
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise CsvError(f"{path}: row {r + 1} has {len(row)} fields, expected {len(header)}")
        for j, c in enumerate(col_idx):
            cell = row[c].strip()
            try:
                v = float(cell)
            except ValueError:
                raise CsvError(f"{path}: row {r + 1}, column {wanted[j]!r}: cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise CsvError(f"{path}: row {r + 1}, column {wanted[j]!r}: non-finite value {cell!r}")
            values[r, j] = v
        if labels is not None:
            labels[r] = row[label_idx].strip()
    return Dataset(wanted, values, labels, label)


def format_number(x) -> str:
    """Shortest round-tripping text for a float; integers print without '.0'."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_number(v) for v in row])


def write_dataset(path, dataset: Dataset) -> None:
    header = list(dataset.columns)
    if dataset.labels is not None:
        header.append(dataset.label_column)
    rows = []
    for i in range(len(dataset)):
        row = [format_number(v) for v in dataset.values[i]]
        if dataset.labels is not None:
            row.append(str(dataset.labels[i]))
        rows.append(row)
    write_csv(path, header, rows)
