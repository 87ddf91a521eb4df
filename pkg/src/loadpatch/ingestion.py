"""Read meter and temperature CSVs and cut them into 96-point days.

CSV layout is two columns, ``timestamp,value``, with an optional header row.
Timestamps are ISO-8601; naive timestamps are read as local time in the
configured zone, offset-aware ones are converted into it.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .errors import (EmptyDatasetError, EmptySeriesError, OrderingError,
                     ParseError, DatasetReadError)

logger = logging.getLogger(__name__)

POINTS_PER_DAY = 96
SLOT_MINUTES = 15
DATASET_SCHEMA = "loadpatch.dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class RawSeries:
    timestamps: tuple[datetime, ...]
    values: tuple[float, ...]
    kind: str  # "load" or "temperature"
    source_id: str

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class DailyProfile:
    user_id: str
    date: date
    load: tuple[float, ...]
    temperature: tuple[float, ...]

    def __post_init__(self):
        if len(self.load) != POINTS_PER_DAY or len(self.temperature) != POINTS_PER_DAY:
            raise ValueError(
                f"{self.user_id} {self.date}: expected {POINTS_PER_DAY} points, got "
                f"{len(self.load)} load / {len(self.temperature)} temperature")
        if not all(math.isfinite(v) and v >= 0 for v in self.load):
            raise ValueError(f"{self.user_id} {self.date}: load must be finite and >= 0")
        if not all(math.isfinite(v) for v in self.temperature):
            raise ValueError(f"{self.user_id} {self.date}: temperature must be finite")

    @property
    def peak_load(self) -> float:
        return max(self.load)

    @property
    def peak_temperature(self) -> float:
        return max(self.temperature)


@dataclass(frozen=True)
class DatasetStats:
    load_min: float
    load_max: float
    temp_min: float
    temp_max: float
    n_days: int
    n_users: int
    daily_peaks: tuple[float, ...]


def _parse_timestamp(text: str, tz: ZoneInfo | None) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if tz is not None:
        ts = ts.replace(tzinfo=tz) if ts.tzinfo is None else ts.astimezone(tz)
    return ts


def _read_csv(path, kind: str, source_id: str, tz: ZoneInfo | None) -> RawSeries:
    path = Path(path)
    timestamps: list[datetime] = []
    values: list[float] = []
    last = None  # absolute time; aware datetimes sharing a zone compare by wall clock
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
            try:
                ts = _parse_timestamp(row[0], tz)
            except ValueError:
                if not timestamps and lineno == 1:
                    continue  # header row
                raise ParseError(f"bad timestamp {row[0]!r}", line=lineno) from None
            cell = row[1].strip()
            if not cell:
                raise ParseError("missing value", line=lineno)
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"bad value {cell!r}", line=lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {cell!r}", line=lineno)
            if kind == "load" and value < 0:
                raise ParseError(f"negative load {value}", line=lineno)
            now = _epoch(ts)
            if last is not None and now <= last:
                what = "duplicate" if now == last else "out-of-order"
                raise OrderingError(f"{path}: line {lineno}: {what} timestamp {row[0].strip()}")
            last = now
            timestamps.append(ts)
            values.append(value)
    if not timestamps:
        raise EmptySeriesError(f"{path}: no data rows")
    return RawSeries(tuple(timestamps), tuple(values), kind, source_id)


def ingest_load_csv(path, user_id: str, tz: str | None = None) -> RawSeries:
    return _read_csv(path, "load", user_id, ZoneInfo(tz) if tz else None)


def ingest_temperature_csv(path, tz: str | None = None) -> RawSeries:
    return _read_csv(path, "temperature", Path(path).stem, ZoneInfo(tz) if tz else None)


def _epoch(ts: datetime) -> float:
    if ts.tzinfo is None:
        return (ts - datetime(1970, 1, 1)).total_seconds()
    return ts.timestamp()


def align_and_segment(load: RawSeries, temp: RawSeries) -> list[DailyProfile]:
    """Resample temperature onto the meter timestamps and split into days.

    Temperature is linearly interpolated between bracketing readings and held
    flat beyond the first/last reading. A day is kept only when all 96
    quarter-hour slots of its local calendar date carry a meter reading.
    """
    t_knots = np.array([_epoch(t) for t in temp.timestamps])
    t_vals = np.array(temp.values)

    by_day: dict[date, dict[int, tuple[datetime, float]]] = defaultdict(dict)
    off_grid: set[date] = set()
    for ts, value in zip(load.timestamps, load.values):
        day = ts.date()
        if ts.minute % SLOT_MINUTES or ts.second or ts.microsecond:
            off_grid.add(day)
            continue
        slot = ts.hour * 4 + ts.minute // SLOT_MINUTES
        if slot in by_day[day]:
            # repeated wall-clock slot (DST fall-back)
            off_grid.add(day)
        by_day[day][slot] = (ts, value)

    days = []
    for day in sorted(by_day):
        slots = by_day[day]
        if day in off_grid or len(slots) != POINTS_PER_DAY:
            logger.debug("dropping %s %s: %d readings", load.source_id, day, len(slots))
            continue
        stamps = [slots[i][0] for i in range(POINTS_PER_DAY)]
        loads = tuple(slots[i][1] for i in range(POINTS_PER_DAY))
        x = np.array([_epoch(t) for t in stamps])
        temps = np.interp(x, t_knots, t_vals)
        days.append(DailyProfile(load.source_id, day, loads, tuple(float(v) for v in temps)))

    if not days:
        raise EmptyDatasetError(f"{load.source_id}: no complete days")
    return days


def summarize(days: list[DailyProfile]) -> DatasetStats:
    if not days:
        raise EmptyDatasetError("cannot summarize an empty dataset")
    load = np.array([d.load for d in days])
    temp = np.array([d.temperature for d in days])
    return DatasetStats(
        load_min=float(load.min()),
        load_max=float(load.max()),
        temp_min=float(temp.min()),
        temp_max=float(temp.max()),
        n_days=len(days),
        n_users=len({d.user_id for d in days}),
        daily_peaks=tuple(float(v) for v in load.max(axis=1)),
    )


def write_days(days: list[DailyProfile], path, tz: str | None = None) -> None:
    header = {"schema": DATASET_SCHEMA, "version": DATASET_VERSION, "tz": tz}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for d in days:
            fh.write(json.dumps({
                "user_id": d.user_id,
                "date": d.date.isoformat(),
                "load": list(d.load),
                "temperature": list(d.temperature),
            }) + "\n")


def read_days(path) -> list[DailyProfile]:
    days = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetReadError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DatasetReadError("unreadable header", line=1) from None
    if header.get("schema") != DATASET_SCHEMA:
        raise DatasetReadError(f"not a dataset file (schema={header.get('schema')!r})", line=1)
    if header.get("version") != DATASET_VERSION:
        raise DatasetReadError(f"unsupported dataset version {header.get('version')}", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            days.append(DailyProfile(rec["user_id"], date.fromisoformat(rec["date"]),
                                     tuple(rec["load"]), tuple(rec["temperature"])))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DatasetReadError(f"bad record: {exc}", line=lineno) from None
    return days

