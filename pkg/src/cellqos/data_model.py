"""Cell record schema, table parsing/validation and the modeling-eligibility filter."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, TextIO

logger = logging.getLogger(__name__)

PRB_USAGE_THRESHOLD = 20.0

CELL_COLUMNS = (
    "cell_name",
    "site_id",
    "operator",
    "city",
    "longitude",
    "latitude",
    "azimuth",
    "height",
    "duplex_mode",
    "dl_narfcn",
    "frequency_band",
    "dl_bandwidth",
    "txrx_mode",
    "subframe_assignment",
    "special_patterns",
    "dl_prb_avail",
    "dl_prb_usage",
    "ul_prb_avail",
    "online_users",
    "dl_concurrent_users",
    "ul_concurrent_users",
    "dl_traffic",
    "ul_traffic",
    "total_traffic",
)

TEXT_COLUMNS = (
    "cell_name",
    "site_id",
    "operator",
    "city",
    "frequency_band",
    "txrx_mode",
    "subframe_assignment",
    "special_patterns",
)
INT_COLUMNS = ("dl_narfcn",)
NONNEGATIVE_COLUMNS = (
    "height",
    "dl_bandwidth",
    "dl_prb_avail",
    "ul_prb_avail",
    "online_users",
    "dl_concurrent_users",
    "ul_concurrent_users",
    "dl_traffic",
    "ul_traffic",
    "total_traffic",
)


class DataError(ValueError):
    """Base class for input validation failures."""


class SchemaError(DataError):
    def __init__(self, column: str):
        super().__init__(f"missing column: {column}")
        self.column = column


class RowError(DataError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class UniquenessError(DataError):
    pass


class SplitError(DataError):
    pass


class DuplexMode(str, enum.Enum):
    TDD = "TDD"
    FDD = "FDD"


@dataclass(frozen=True, slots=True)
class CellRecord:
    cell_name: str
    site_id: str
    operator: str
    city: str
    longitude: float
    latitude: float
    azimuth: float
    height: float
    duplex_mode: DuplexMode
    dl_narfcn: int
    frequency_band: str
    dl_bandwidth: float
    txrx_mode: str
    subframe_assignment: str
    special_patterns: str
    dl_prb_avail: float
    dl_prb_usage: float
    ul_prb_avail: float
    online_users: float
    dl_concurrent_users: float
    ul_concurrent_users: float
    dl_traffic: float
    ul_traffic: float
    total_traffic: float

    @property
    def city_operator(self) -> tuple[str, str]:
        return (self.city, self.operator)


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of cell records.

    ``universe`` holds the records before eligibility filtering; neighborhood
    queries run against it. For an unfiltered dataset it is ``records``.
    """

    records: tuple[CellRecord, ...]
    splits: Mapping[tuple[str, str], str] = field(default_factory=dict)
    universe: tuple[CellRecord, ...] | None = None

    def __post_init__(self):
        if self.universe is None:
            object.__setattr__(self, "universe", self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split_of(self, record: CellRecord) -> str | None:
        return self.splits.get(record.city_operator)

    def subset(self, split: str) -> tuple[CellRecord, ...]:
        return tuple(r for r in self.records if self.split_of(r) == split)

    def city_operators(self) -> list[tuple[str, str]]:
        return sorted({r.city_operator for r in self.universe})


def normalize_azimuth(value: float) -> float:
    az = math.fmod(value, 360.0)
    if az < 0:
        az += 360.0
    # fmod of tiny negatives can round up to exactly 360
    return 0.0 if az >= 360.0 else az


_TXRX = re.compile(r"^\s*(\d+)\s*T\s*(\d+)\s*R\s*$", re.IGNORECASE)


def parse_txrx(txrx_mode: str) -> tuple[int, int]:
    """Return ``(tx, rx)`` antenna counts from text like ``"4T4R"``."""
    m = _TXRX.match(txrx_mode)
    if m is None:
        raise ValueError(f"unrecognized TxRx mode: {txrx_mode!r}")
    return int(m.group(1)), int(m.group(2))


def site_id_from_cell_name(cell_name: str) -> str:
    """Fallback site id: the cell name up to its last underscore.

    The real naming convention is operator specific; this is a guess used only
    when no explicit site_id column is available.
    """
    head, sep, _ = cell_name.rpartition("_")
    return head if sep else cell_name


def _parse_number(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise RowError(row, f"unparsable numeric in {column}: {text!r}") from None
    if not math.isfinite(value):
        raise RowError(row, f"non-finite value in {column}: {text!r}")
    return value


def record_from_row(row: Mapping[str, str], index: int) -> CellRecord:
    values: dict = {}
    for name in CELL_COLUMNS:
        raw = row.get(name)
        raw = "" if raw is None else raw.strip()
        if name in TEXT_COLUMNS:
            values[name] = raw
        elif name == "duplex_mode":
            try:
                values[name] = DuplexMode(raw.upper())
            except ValueError:
                raise RowError(index, f"invalid duplex_mode: {raw!r}") from None
        elif name in INT_COLUMNS:
            number = _parse_number(raw, name, index)
            if number != int(number):
                raise RowError(index, f"non-integer {name}: {raw!r}")
            values[name] = int(number)
        else:
            values[name] = _parse_number(raw, name, index)

    for name in ("cell_name", "operator", "city"):
        if not values[name]:
            raise RowError(index, f"empty {name}")
    if not values["site_id"]:
        values["site_id"] = site_id_from_cell_name(values["cell_name"])
    values["azimuth"] = normalize_azimuth(values["azimuth"])
    usage = values["dl_prb_usage"]
    if not 0.0 <= usage <= 100.0:
        raise RowError(index, f"dl_prb_usage out of [0, 100]: {usage}")
    for name in NONNEGATIVE_COLUMNS:
        if values[name] < 0:
            raise RowError(index, f"negative {name}: {values[name]}")
    return CellRecord(**values)


def _open_text(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def parse_cells(source, splits: Mapping[tuple[str, str], str] | None = None) -> Dataset:
    """Parse a cells table (path or text stream) into a validated Dataset."""
    fh, owned = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for name in CELL_COLUMNS:
            if name not in header:
                raise SchemaError(name)
        records = [record_from_row(row, i) for i, row in enumerate(reader)]
    finally:
        if owned:
            fh.close()

    seen: set[str] = set()
    for r in records:
        if r.cell_name in seen:
            raise UniquenessError(f"duplicate cell_name: {r.cell_name}")
        seen.add(r.cell_name)
    return Dataset(tuple(records), dict(splits or {}))


def _format_value(value) -> str:
    if isinstance(value, DuplexMode):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_cells(records: Iterable[CellRecord], target) -> None:
    """Serialize records in the cells-table format (round-trips via parse_cells)."""
    fh, owned = (open(target, "w", newline="", encoding="utf-8"), True) if isinstance(
        target, (str, Path)
    ) else (target, False)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CELL_COLUMNS)
        for r in records:
            writer.writerow([_format_value(getattr(r, name)) for name in CELL_COLUMNS])
    finally:
        if owned:
            fh.close()


def cells_to_text(records: Iterable[CellRecord]) -> str:
    buf = io.StringIO()
    write_cells(records, buf)
    return buf.getvalue()


def parse_split_manifest(source) -> dict[tuple[str, str], str]:
    """Read ``city,operator,split`` rows into a ``(city, operator) -> split`` map."""
    fh, owned = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        for name in ("city", "operator", "split"):
            if name not in (reader.fieldnames or []):
                raise SchemaError(name)
        splits: dict[tuple[str, str], str] = {}
        for i, row in enumerate(reader):
            key = (row["city"].strip(), row["operator"].strip())
            split = row["split"].strip().lower()
            if split not in ("train", "test"):
                raise RowError(i, f"split must be train or test, got {split!r}")
            if key in splits and splits[key] != split:
                raise SplitError(f"city-operator {key} assigned to both splits")
            splits[key] = split
    finally:
        if owned:
            fh.close()
    return splits


def write_split_manifest(splits: Mapping[tuple[str, str], str], target) -> None:
    with open(target, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["city", "operator", "split"])
        for (city, operator), split in sorted(splits.items()):
            writer.writerow([city, operator, split])


def assign_splits(dataset: Dataset, splits: Mapping[tuple[str, str], str]) -> Dataset:
    """Attach a split manifest; every city-operator in the data must be listed."""
    missing = sorted({r.city_operator for r in dataset.universe} - set(splits))
    if missing:
        raise SplitError(f"city-operators without a split: {missing}")
    return Dataset(dataset.records, dict(splits), dataset.universe)


def filter_eligible(dataset: Dataset, threshold: float = PRB_USAGE_THRESHOLD) -> Dataset:
    """Keep records with ``dl_prb_usage >= threshold``; the universe is carried over."""
    kept = tuple(r for r in dataset.records if r.dl_prb_usage >= threshold)
    if not kept:
        logger.warning("no records with dl_prb_usage >= %s; modeling set is empty", threshold)
    return Dataset(kept, dataset.splits, dataset.universe)


def record_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(CellRecord))
