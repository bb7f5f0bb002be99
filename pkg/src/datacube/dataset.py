"""Population health dataset: CSV ingestion, filtering, channel normalization,
and the watchlist.

File format: comma-separated UTF-8 with a header row. Required columns `id`
and `year`, optional `zipcode` (region), every other column numeric. Values
must not contain commas or quotes (no quoting support), lines end with `\\n`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence


class CsvFormatError(ValueError):
    """Base class for all custom-CSV parse failures."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row  # 1-based data-row index, 0 for the header
        self.column = column


class MissingHeader(CsvFormatError):
    pass


class DuplicateColumn(CsvFormatError):
    pass


class MissingIdOrYearColumn(CsvFormatError):
    pass


class NonNumericValue(CsvFormatError):
    pass


class DuplicateIdYearPair(CsvFormatError):
    pass


class QuotedValueUnsupported(CsvFormatError):
    pass


class MalformedRow(CsvFormatError):
    pass


class UnknownColumn(KeyError):
    pass


class IndexOutOfRange(IndexError):
    pass


class UnknownIndividual(KeyError):
    pass


class ColumnKind(enum.Enum):
    ID = "id"
    YEAR = "year"
    REGION = "region"
    NUMERIC = "numeric"


class ColumnDescriptor(NamedTuple):
    name: str
    kind: ColumnKind


class Record(NamedTuple):
    individual_id: str
    year: int
    region: Optional[str]
    values: tuple[float, ...]  # one per numeric column, in schema order


ID_COLUMN = "id"
YEAR_COLUMN = "year"
REGION_COLUMN = "zipcode"
YEAR_MIN, YEAR_MAX = 1900, 2200


@dataclass(frozen=True)
class Dataset:
    columns: tuple[ColumnDescriptor, ...]
    rows: tuple[Record, ...]
    # individual id -> row indices ordered by ascending year
    individuals: dict[str, tuple[int, ...]]

    @property
    def numeric_columns(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.kind is ColumnKind.NUMERIC)

    @property
    def has_region(self) -> bool:
        return any(c.kind is ColumnKind.REGION for c in self.columns)

    def numeric_index(self, name: str) -> int:
        """Position of `name` within the numeric value tuple of each record."""
        try:
            return self.numeric_columns.index(name)
        except ValueError:
            raise UnknownColumn(name) from None

    def numeric_values(self, name: str) -> tuple[float, ...]:
        i = self.numeric_index(name)
        return tuple(r.values[i] for r in self.rows)


class DimensionMapping(NamedTuple):
    x: str
    y: str
    z: str
    color: str
    size: str
    traces_enabled: bool = False

    @property
    def channels(self) -> tuple[str, str, str, str, str]:
        return (self.x, self.y, self.z, self.color, self.size)


@dataclass(frozen=True)
class FilterState:
    """Visibility constraints; all bounds inclusive, None means unconstrained."""

    numeric_ranges: dict[str, tuple[float, float]]
    year_range: Optional[tuple[int, int]] = None
    regions: Optional[frozenset[str]] = None

    def __init__(
        self,
        numeric_ranges: Optional[dict[str, tuple[float, float]]] = None,
        year_range: Optional[tuple[int, int]] = None,
        regions: Optional[Iterable[str]] = None,
    ):
        object.__setattr__(self, "numeric_ranges", dict(numeric_ranges or {}))
        object.__setattr__(self, "year_range", tuple(year_range) if year_range is not None else None)
        object.__setattr__(self, "regions", frozenset(regions) if regions is not None else None)
        for col, (lo, hi) in self.numeric_ranges.items():
            if not (lo <= hi):
                raise ValueError(f"empty range for {col}: [{lo}, {hi}]")
        if self.year_range is not None and not (self.year_range[0] <= self.year_range[1]):
            raise ValueError(f"empty year range: {self.year_range}")

    def __eq__(self, other):
        if not isinstance(other, FilterState):
            return NotImplemented
        return (
            self.numeric_ranges == other.numeric_ranges
            and self.year_range == other.year_range
            and self.regions == other.regions
        )

    def __hash__(self):
        return hash((tuple(sorted(self.numeric_ranges.items())), self.year_range, self.regions))


class NormalizedPoint(NamedTuple):
    row_index: int
    position: tuple[float, float, float]  # unit-cube coordinates
    color_t: float
    size_t: float


class Trace(NamedTuple):
    individual_id: str
    points: tuple[NormalizedPoint, ...]  # ascending year order


class WatchlistEntry(NamedTuple):
    individual_id: str
    created_at: float


@dataclass(frozen=True)
class Watchlist:
    entries: tuple[WatchlistEntry, ...] = ()

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.individual_id for e in self.entries)


def _split_row(line: str, row: int) -> list[str]:
    if '"' in line:
        raise QuotedValueUnsupported("quoted values are not supported", row=row)
    return line.split(",")


def _read_lines(data: bytes | str) -> list[str]:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRow(f"not valid UTF-8: {exc}") from exc
    else:
        text = data
    text = text.removeprefix("﻿")
    lines = text.split("\n")
    while lines and lines[-1].strip("\r") == "":
        lines.pop()
    if not lines:
        raise MissingHeader("input has no header line")
    return [line.removesuffix("\r") for line in lines]


def _parse_header(header_line: str) -> tuple[ColumnDescriptor, ...]:
    names = _split_row(header_line, row=0)
    if any(n == "" for n in names):
        raise MalformedRow("empty column name in header", row=0)
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise DuplicateColumn(f"duplicate column {dup!r}", row=0, column=dup)
    if ID_COLUMN not in names or YEAR_COLUMN not in names:
        raise MissingIdOrYearColumn(f"header must contain {ID_COLUMN!r} and {YEAR_COLUMN!r}", row=0)

    columns = []
    for n in names:
        if n == ID_COLUMN:
            kind = ColumnKind.ID
        elif n == YEAR_COLUMN:
            kind = ColumnKind.YEAR
        elif n == REGION_COLUMN:
            kind = ColumnKind.REGION
        else:
            kind = ColumnKind.NUMERIC
        columns.append(ColumnDescriptor(n, kind))
    return tuple(columns)


def _parse_row(
    columns: tuple[ColumnDescriptor, ...],
    line: str,
    row_no: int,
    seen: dict[tuple[str, int], int],
) -> Record:
    fields = _split_row(line, row=row_no)
    if len(fields) > len(columns):
        raise QuotedValueUnsupported(
            f"row has {len(fields)} fields for {len(columns)} columns "
            "(values must not contain commas)",
            row=row_no,
        )
    if len(fields) < len(columns):
        raise MalformedRow(
            f"row has {len(fields)} fields for {len(columns)} columns", row=row_no
        )
    individual_id = ""
    year = 0
    region: Optional[str] = None
    values: list[float] = []
    for col, field in zip(columns, fields):
        if col.kind is ColumnKind.ID:
            if field == "":
                raise MalformedRow("empty id", row=row_no, column=col.name)
            individual_id = field
        elif col.kind is ColumnKind.YEAR:
            try:
                year = int(field)
            except ValueError:
                raise NonNumericValue(
                    f"year value {field!r} is not an integer", row=row_no, column=col.name
                ) from None
            if not (YEAR_MIN <= year <= YEAR_MAX):
                raise MalformedRow(
                    f"year {year} outside [{YEAR_MIN}, {YEAR_MAX}]", row=row_no, column=col.name
                )
        elif col.kind is ColumnKind.REGION:
            region = field or None
        else:
            try:
                v = float(field)
            except ValueError:
                raise NonNumericValue(
                    f"value {field!r} in column {col.name!r} is not numeric",
                    row=row_no,
                    column=col.name,
                ) from None
            if not math.isfinite(v):
                raise NonNumericValue(
                    f"value {field!r} in column {col.name!r} is not finite",
                    row=row_no,
                    column=col.name,
                )
            values.append(v)
    key = (individual_id, year)
    if key in seen:
        raise DuplicateIdYearPair(
            f"duplicate (id, year) pair {key!r} at rows {seen[key]} and {row_no}", row=row_no
        )
    seen[key] = row_no
    return Record(individual_id, year, region, tuple(values))


def _build_dataset(columns: tuple[ColumnDescriptor, ...], rows: list[Record]) -> Dataset:
    by_individual: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        by_individual.setdefault(r.individual_id, []).append(i)
    individuals = {
        ind: tuple(sorted(ixs, key=lambda i: rows[i].year)) for ind, ixs in by_individual.items()
    }
    return Dataset(columns=columns, rows=tuple(rows), individuals=individuals)


def parse_csv(data: bytes | str) -> Dataset:
    """Parse the custom CSV format into a validated Dataset."""
    lines = _read_lines(data)
    columns = _parse_header(lines[0])
    rows: list[Record] = []
    seen: dict[tuple[str, int], int] = {}
    for row_no, line in enumerate(lines[1:], start=1):
        rows.append(_parse_row(columns, line, row_no, seen))
    return _build_dataset(columns, rows)


def validate_csv(data: bytes | str) -> tuple[Optional[Dataset], list[CsvFormatError]]:
    """Lenient full scan: every row-level error, not just the first.

    Header problems are fatal (no dataset, one error). Otherwise bad rows are
    skipped and reported; the returned Dataset holds the valid rows.
    """
    try:
        lines = _read_lines(data)
        columns = _parse_header(lines[0])
    except CsvFormatError as exc:
        return None, [exc]
    rows: list[Record] = []
    errors: list[CsvFormatError] = []
    seen: dict[tuple[str, int], int] = {}
    for row_no, line in enumerate(lines[1:], start=1):
        try:
            rows.append(_parse_row(columns, line, row_no, seen))
        except CsvFormatError as exc:
            errors.append(exc)
    return _build_dataset(columns, rows), errors


def format_number(v: float) -> str:
    """Shortest decimal that round-trips back to the same float."""
    return repr(v)


def export_csv(dataset: Dataset, rows: Iterable[int]) -> str:
    """Serialize a row subset; re-parsing yields the same columns and rows."""
    indices = list(rows)
    for i in indices:
        if not (0 <= i < len(dataset.rows)):
            raise IndexOutOfRange(f"row index {i} out of range (0..{len(dataset.rows) - 1})")
    lines = [",".join(c.name for c in dataset.columns)]
    for i in indices:
        r = dataset.rows[i]
        fields = []
        vi = 0
        for col in dataset.columns:
            if col.kind is ColumnKind.ID:
                fields.append(r.individual_id)
            elif col.kind is ColumnKind.YEAR:
                fields.append(str(r.year))
            elif col.kind is ColumnKind.REGION:
                fields.append(r.region or "")
            else:
                fields.append(format_number(r.values[vi]))
                vi += 1
        for f in fields:
            if "," in f or '"' in f or "\n" in f or "\r" in f:
                raise QuotedValueUnsupported(
                    f"value {f!r} cannot be represented without quoting", row=i
                )
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def apply_filters(dataset: Dataset, filt: FilterState) -> tuple[int, ...]:
    """Indices of rows passing every active constraint, in ascending order."""
    numeric_ix: dict[int, tuple[float, float]] = {}
    for col, rng in filt.numeric_ranges.items():
        numeric_ix[dataset.numeric_index(col)] = rng
    out = []
    for i, r in enumerate(dataset.rows):
        if filt.year_range is not None and not (filt.year_range[0] <= r.year <= filt.year_range[1]):
            continue
        if filt.regions is not None and r.region not in filt.regions:
            continue
        ok = True
        for vi, (lo, hi) in numeric_ix.items():
            if not (lo <= r.values[vi] <= hi):
                ok = False
                break
        if ok:
            out.append(i)
    return tuple(out)


def normalize_channel(dataset: Dataset, column: str) -> tuple[float, ...]:
    """Min-max normalize a numeric column over the full dataset.

    Constant columns map to 0.5 so the points sit at the cube center instead
    of collapsing onto a face.
    """
    values = dataset.numeric_values(column)
    if not values:
        return ()
    lo, hi = min(values), max(values)
    if lo == hi:
        return tuple(0.5 for _ in values)
    span = hi - lo
    return tuple((v - lo) / span for v in values)


def project_points(
    dataset: Dataset, mapping: DimensionMapping, visible: Sequence[int]
) -> list[NormalizedPoint]:
    """One unit-cube point per visible row, channels per the mapping."""
    cache: dict[str, tuple[float, ...]] = {}

    def channel(col: str) -> tuple[float, ...]:
        if col not in cache:
            cache[col] = normalize_channel(dataset, col)
        return cache[col]

    xs, ys, zs = channel(mapping.x), channel(mapping.y), channel(mapping.z)
    cs, ss = channel(mapping.color), channel(mapping.size)
    return [
        NormalizedPoint(i, (xs[i], ys[i], zs[i]), cs[i], ss[i]) for i in visible
    ]


def build_traces(
    dataset: Dataset, mapping: DimensionMapping, visible: Sequence[int]
) -> list[Trace]:
    """Per-individual polylines over visible rows, vertices in year order.

    Individuals with fewer than two visible rows yield no polyline.
    """
    points = {p.row_index: p for p in project_points(dataset, mapping, visible)}
    traces = []
    for ind, row_ixs in dataset.individuals.items():
        verts = tuple(points[i] for i in row_ixs if i in points)
        if len(verts) >= 2:
            traces.append(Trace(ind, verts))
    return traces


# Cool-to-warm gradient control points at t = 0, 1/3, 2/3, 1.
_COLOR_STOPS = ((0, 0, 255), (0, 255, 0), (255, 255, 0), (255, 0, 0))


def colormap(t: float) -> tuple[int, int, int]:
    """Piecewise-linear blue -> green -> yellow -> red, rounded half-up."""
    t = min(1.0, max(0.0, t))
    scaled = t * 3.0
    seg = min(2, int(scaled))
    frac = scaled - seg
    a, b = _COLOR_STOPS[seg], _COLOR_STOPS[seg + 1]
    return tuple(int(math.floor(a[c] + (b[c] - a[c]) * frac + 0.5)) for c in range(3))


def display_value(v: float) -> str:
    """Numeric rendering for detail panels: 6 significant digits."""
    return f"{v:#.6g}"


def record_detail(dataset: Dataset, row_index: int) -> list[tuple[str, str]]:
    """(column, display value) pairs for one row, in schema order."""
    if not (0 <= row_index < len(dataset.rows)):
        raise IndexOutOfRange(f"row index {row_index} out of range")
    r = dataset.rows[row_index]
    out = []
    vi = 0
    for col in dataset.columns:
        if col.kind is ColumnKind.ID:
            out.append((col.name, r.individual_id))
        elif col.kind is ColumnKind.YEAR:
            out.append((col.name, str(r.year)))
        elif col.kind is ColumnKind.REGION:
            out.append((col.name, r.region or ""))
        else:
            out.append((col.name, display_value(r.values[vi])))
            vi += 1
    return out


def watchlist_add(
    watchlist: Watchlist, dataset: Dataset, individual_id: str, created_at: float = 0.0
) -> Watchlist:
    """Append an individual; adding an existing id is a no-op."""
    if individual_id not in dataset.individuals:
        raise UnknownIndividual(individual_id)
    if individual_id in watchlist.ids:
        return watchlist
    return Watchlist(watchlist.entries + (WatchlistEntry(individual_id, created_at),))


def watchlist_remove(watchlist: Watchlist, individual_id: str) -> Watchlist:
    return Watchlist(tuple(e for e in watchlist.entries if e.individual_id != individual_id))


def watchlist_export(watchlist: Watchlist, dataset: Dataset) -> str:
    """All rows of every listed individual, entry order then year order.

    Ids unknown to the dataset (stale after a dataset switch) are skipped.
    """
    rows: list[int] = []
    for entry in watchlist.entries:
        rows.extend(dataset.individuals.get(entry.individual_id, ()))
    return export_csv(dataset, rows)
