"""Longitudinal binary cohort data with explicit missing entries.

Cells are stored as float64 with ``nan`` marking a missing answer, so that
``np.isnan`` gives the missingness mask directly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import EmptyResultError, ParseError, StructuralError

MISSING_TOKENS = ("nan", "")


@dataclass(frozen=True, eq=False)
class CohortDataset:
    values: np.ndarray
    column_labels: tuple[str, ...]
    patient_ids: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise StructuralError(f"values must be 2-D, got shape {values.shape}")
        n, m = values.shape
        if n < 1 or m < 1:
            raise StructuralError(f"dataset needs N >= 1 and M >= 1, got {n}x{m}")
        observed = values[~np.isnan(values)]
        if not np.all((observed == 0.0) | (observed == 1.0)):
            raise StructuralError("every observed cell must be exactly 0 or 1")
        labels = tuple(str(c) for c in self.column_labels)
        if len(labels) != m:
            raise StructuralError(f"{len(labels)} column labels for {m} columns")
        ids = np.array(self.patient_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise StructuralError(f"{ids.size} patient ids for {n} rows")
        if np.any(ids < 0):
            raise StructuralError("patient ids must be non-negative")
        if np.unique(ids).size != n:
            raise StructuralError("duplicate patient ids")
        values.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_labels", labels)
        object.__setattr__(self, "patient_ids", ids)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float | None]],
                  column_labels: Sequence[str] | None = None,
                  patient_ids: Sequence[int] | None = None) -> "CohortDataset":
        """Build a dataset from nested lists where ``None`` or ``nan`` is missing."""
        values = np.array([[np.nan if v is None else v for v in row] for row in rows],
                          dtype=np.float64)
        if values.ndim != 2:
            raise StructuralError("rows must all have the same length")
        n, m = values.shape
        if column_labels is None:
            column_labels = [f"Col {i + 1}" for i in range(m)]
        if patient_ids is None:
            patient_ids = np.arange(n)
        return cls(values, tuple(column_labels), np.asarray(patient_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def filled(self) -> np.ndarray:
        """Values with missing cells replaced by 0; pair with ``observed``."""
        return np.where(self.observed, self.values, 0.0)

    def take(self, index: np.ndarray | Iterable[int]) -> "CohortDataset":
        index = np.asarray(index)
        return CohortDataset(self.values[index], self.column_labels, self.patient_ids[index])

    def row_pattern(self, n: int) -> list[int | None]:
        return [None if np.isnan(v) else int(v) for v in self.values[n]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CohortDataset):
            return NotImplemented
        return (self.column_labels == other.column_labels
                and np.array_equal(self.patient_ids, other.patient_ids)
                and np.array_equal(self.values, other.values, equal_nan=True))

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class MissingProfile:
    per_column_missing: tuple[int, ...]
    complete_rows: int
    incomplete_rows: int

    @property
    def n(self) -> int:
        return self.complete_rows + self.incomplete_rows


def _parse_token(token: str, line: int, column: int) -> float:
    t = token.strip()
    if t == "0":
        return 0.0
    if t == "1":
        return 1.0
    if t.lower() in MISSING_TOKENS:
        return np.nan
    raise ParseError(f"expected 0, 1, NaN or empty, got {token!r}", line, column)


def parse_csv(text: str | TextIO) -> CohortDataset:
    """Parse a cohort CSV: a header of column labels, then one row per patient.

    Patient ids are assigned ``0..N-1`` in file order.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise StructuralError("empty input: missing header line") from None
    labels = [h.strip() for h in header]
    m = len(labels)
    if m == 0 or labels == [""]:
        raise StructuralError("header line has no column labels")

    rows = []
    for fields in reader:
        line = reader.line_num
        if not fields and m == 1:
            # a single empty field is a missing answer
            fields = [""]
        elif not fields or (len(fields) == 1 and not fields[0].strip() and m > 1):
            continue
        if len(fields) != m:
            raise StructuralError(f"line {line}: expected {m} fields, got {len(fields)}")
        rows.append([_parse_token(f, line, c + 1) for c, f in enumerate(fields)])
    if not rows:
        raise StructuralError("no data rows after the header")
    values = np.array(rows, dtype=np.float64)
    return CohortDataset(values, tuple(labels), np.arange(len(rows)))


def read_csv(path) -> CohortDataset:
    with open(path, newline="") as fh:
        return parse_csv(fh)


def to_csv(ds: CohortDataset) -> str:
    """Serialize in the format ``parse_csv`` reads; missing cells become ``NaN``."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ds.column_labels)
    for row in ds.values:
        writer.writerow(["NaN" if np.isnan(v) else str(int(v)) for v in row])
    return out.getvalue()


def to_dict(ds: CohortDataset) -> dict:
    return {
        "column_labels": list(ds.column_labels),
        "patient_ids": [int(i) for i in ds.patient_ids],
        "values": [ds.row_pattern(n) for n in range(ds.n)],
    }


def from_dict(obj: dict) -> CohortDataset:
    return CohortDataset.from_rows(obj["values"], obj["column_labels"], obj["patient_ids"])


def to_json(ds: CohortDataset) -> str:
    return json.dumps(to_dict(ds))


def from_json(text: str) -> CohortDataset:
    return from_dict(json.loads(text))


def complete_rows(ds: CohortDataset) -> CohortDataset:
    """Rows with no missing cell, keeping their original patient ids."""
    keep = np.flatnonzero(ds.observed.all(axis=1))
    if keep.size == 0:
        raise EmptyResultError("no complete rows")
    if keep.size == ds.n:
        return ds
    return ds.take(keep)


def missing_profile(ds: CohortDataset) -> MissingProfile:
    miss = ds.missing
    incomplete = int(miss.any(axis=1).sum())
    return MissingProfile(
        per_column_missing=tuple(int(c) for c in miss.sum(axis=0)),
        complete_rows=ds.n - incomplete,
        incomplete_rows=incomplete,
    )
