"""Establishment microdata model, CSV ingestion, and group-by sum queries.

The record schema mirrors quarterly establishment files: public attributes
(year, quarter, state, county, 6-digit industry code, ownership code) plus
four confidential nonnegative attributes (three monthly employment counts
and quarterly wages) and a unique primary key.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

from .errors import InputError, LoadError

__all__ = [
    "PUBLIC_ATTRS",
    "CONFIDENTIAL_ATTRS",
    "CSV_COLUMNS",
    "EstablishmentRecord",
    "Dataset",
    "GroupBySumQuery",
    "QueryAnswerVector",
    "load_csv",
    "write_csv",
    "answer_exact",
    "group_membership",
]

PUBLIC_ATTRS = ("year", "qtr", "state", "cnty", "naics", "own")
CONFIDENTIAL_ATTRS = ("m1emp", "m2emp", "m3emp", "wage")
CSV_COLUMNS = PUBLIC_ATTRS + CONFIDENTIAL_ATTRS + ("primary_key",)

_NAICS_RE = re.compile(r"^\d{6}$")


@dataclass(frozen=True)
class EstablishmentRecord:
    """One establishment: public attributes, confidential values, unique key."""

    year: int
    qtr: int
    state: str
    cnty: str
    naics: str
    own: str
    m1emp: float
    m2emp: float
    m3emp: float
    wage: float
    primary_key: str

    def __post_init__(self):
        if not _NAICS_RE.match(self.naics):
            raise InputError(f"naics must be exactly 6 digits, got {self.naics!r}")
        for attr in CONFIDENTIAL_ATTRS:
            if getattr(self, attr) < 0:
                raise InputError(f"{attr} must be nonnegative, got {getattr(self, attr)}")

    def confidential(self, attr: str) -> float:
        if attr not in CONFIDENTIAL_ATTRS:
            raise InputError(f"unknown confidential attribute {attr!r}")
        return float(getattr(self, attr))


class Dataset:
    """Immutable collection of establishment records with unique keys."""

    def __init__(self, records: Iterable[EstablishmentRecord]):
        self.records: Tuple[EstablishmentRecord, ...] = tuple(records)
        self._by_key: Dict[str, EstablishmentRecord] = {}
        for r in self.records:
            if r.primary_key in self._by_key:
                raise InputError(f"duplicate primary_key {r.primary_key!r}")
            self._by_key[r.primary_key] = r

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, primary_key: str) -> EstablishmentRecord:
        try:
            return self._by_key[primary_key]
        except KeyError as exc:
            raise InputError(f"unknown primary_key {primary_key!r}") from exc

    @property
    def primary_keys(self) -> Tuple[str, ...]:
        return tuple(r.primary_key for r in self.records)


_GROUPERS = ("identity", "total", "county", "naics_prefix", "county_naics_prefix")


@dataclass(frozen=True)
class GroupBySumQuery:
    """Group-by sum over one confidential attribute.

    ``grouper`` is one of ``identity`` (per record), ``total``, ``county``,
    ``naics_prefix`` or ``county_naics_prefix``; the prefix groupers take a
    prefix length ``k`` between 2 and 6.  Group membership depends on public
    attributes only.
    """

    grouper: str
    target: str
    k: int = 0

    def __post_init__(self):
        if self.grouper not in _GROUPERS:
            raise InputError(f"unknown grouper {self.grouper!r}; expected one of {_GROUPERS}")
        if self.target not in CONFIDENTIAL_ATTRS:
            raise InputError(f"query target must be confidential, got {self.target!r}")
        if self.grouper.endswith("naics_prefix") and not (2 <= self.k <= 6):
            raise InputError(f"naics prefix length must be in 2..6, got {self.k}")

    def group_key(self, record: EstablishmentRecord) -> str:
        if self.grouper == "identity":
            return f"id={record.primary_key}"
        if self.grouper == "total":
            return "total"
        if self.grouper == "county":
            return f"county={record.cnty}"
        if self.grouper == "naics_prefix":
            return f"naics{self.k}={record.naics[: self.k]}"
        return f"county={record.cnty}|naics{self.k}={record.naics[: self.k]}"

    def label(self) -> str:
        base = self.grouper if not self.k else f"{self.grouper}{self.k}"
        return f"{base}_{self.target}"


@dataclass(frozen=True)
class QueryAnswerVector:
    """Ordered (group key, exact sum) pairs, lexicographic in the key."""

    entries: Tuple[Tuple[str, float], ...]

    def as_dict(self) -> Dict[str, float]:
        return dict(self.entries)

    def keys(self) -> Tuple[str, ...]:
        return tuple(k for k, _ in self.entries)

    def values(self) -> Tuple[float, ...]:
        return tuple(v for _, v in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _parse_row(row: Mapping[str, str], line_no: int) -> EstablishmentRecord:
    values = {}
    for col in ("year", "qtr"):
        try:
            values[col] = int(float(row[col]))
        except ValueError as exc:
            raise LoadError(f"row {line_no}: non-numeric {col}={row[col]!r}") from exc
    for col in ("state", "cnty", "naics", "own", "primary_key"):
        values[col] = row[col].strip()
    for col in CONFIDENTIAL_ATTRS:
        try:
            values[col] = float(row[col])
        except ValueError as exc:
            raise LoadError(f"row {line_no}: non-numeric {col}={row[col]!r}") from exc
        if values[col] < 0:
            raise LoadError(f"row {line_no}: negative {col}={values[col]}")
    try:
        return EstablishmentRecord(**values)
    except InputError as exc:
        raise LoadError(f"row {line_no}: {exc}") from exc


def load_csv(path) -> Dataset:
    """Load establishment microdata; extra columns are ignored.

    Raises :class:`~gedp.errors.LoadError` naming the offending row for a
    missing column, non-numeric or negative confidential value, malformed
    industry code, or duplicate primary key.
    """
    records: List[EstablishmentRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise LoadError(f"{path}: missing required columns {missing}")
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            rec = _parse_row(row, line_no)
            if rec.primary_key in seen:
                raise LoadError(f"row {line_no}: duplicate primary_key {rec.primary_key!r}")
            seen.add(rec.primary_key)
            records.append(rec)
    return Dataset(records)


def write_csv(dataset: Dataset, path, synthetic: bool = False) -> None:
    """Write records in the standard schema; ``synthetic=True`` appends a
    ``synthetic=1`` marker column (used for reconstructed microdata)."""
    columns = list(CSV_COLUMNS) + (["synthetic"] if synthetic else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in dataset:
            row = [getattr(r, c) for c in CSV_COLUMNS]
            if synthetic:
                row.append(1)
            writer.writerow(row)


def answer_exact(dataset: Dataset, query: GroupBySumQuery) -> QueryAnswerVector:
    """Exact per-group sums of the query target, keyed canonically."""
    sums: Dict[str, float] = {}
    for r in dataset:
        sums.setdefault(query.group_key(r), 0.0)
        sums[query.group_key(r)] += r.confidential(query.target)
    return QueryAnswerVector(tuple(sorted(sums.items())))


def group_membership(dataset: Dataset, query: GroupBySumQuery) -> Dict[str, List[str]]:
    """Partition of primary keys by group, consistent with answer_exact."""
    groups: Dict[str, List[str]] = {}
    for r in dataset:
        groups.setdefault(query.group_key(r), []).append(r.primary_key)
    return {k: sorted(v) for k, v in sorted(groups.items())}
