"""Observation CSV ingestion and analysis output.

Observation files have the header ``date,hospitalized,recovered,deaths`` with
an optional trailing ``new_cases`` column. Dates are ISO-8601 and must be
strictly increasing; skipped days are filled with missing values. A blank
field marks a missing value.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, ObservationFormatError

log = logging.getLogger(__name__)

OBS_COLUMNS = ("date", "hospitalized", "recovered", "deaths")
NEW_CASES_COLUMN = "new_cases"

QUANTITIES = ("E", "Ia", "Is", "H", "R", "D", "Ra", "Rs", "beta_s", "Rt")
STATS = ("mean", "lo95", "lo68", "hi68", "hi95", "spread")
ANALYSIS_HEADER = ("date",) + tuple(f"{q}_{s}" for q in QUANTITIES for s in STATS)


class DataCorrection(NamedTuple):
    date: dt.date
    column: str
    raw: float
    corrected: float


@dataclass(frozen=True)
class ObservationSeries:
    """Daily H/R/D counts over consecutive calendar days.

    Missing values are NaN; ``missing`` lists days with no usable observation.
    """

    region: str
    dates: tuple
    H: np.ndarray
    R: np.ndarray
    D: np.ndarray
    new_cases: np.ndarray | None = None
    corrections: tuple = field(default=(), compare=False)

    def __post_init__(self):
        dates = tuple(self.dates)
        if not dates:
            raise DataError("observation series is empty")
        for a, b in zip(dates, dates[1:]):
            if (b - a).days != 1:
                raise DataError(f"dates must be consecutive days: {a} followed by {b}")
        object.__setattr__(self, "dates", dates)
        cols = ["H", "R", "D"] + (["new_cases"] if self.new_cases is not None else [])
        for name in cols:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (len(dates),):
                raise DataError(f"column {name} has {arr.size} values for {len(dates)} dates")
            if np.any(arr[np.isfinite(arr)] < 0) or np.any(np.isinf(arr)):
                raise DataError(f"column {name} must hold finite nonnegative counts")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def start_date(self) -> dt.date:
        return self.dates[0]

    @property
    def end_date(self) -> dt.date:
        return self.dates[-1]

    @property
    def missing(self) -> tuple:
        gone = np.isnan(self.H) & np.isnan(self.R) & np.isnan(self.D)
        return tuple(d for d, g in zip(self.dates, gone) if g)

    def index(self, date: dt.date) -> int:
        idx = (date - self.start_date).days
        if not 0 <= idx < len(self):
            raise DataError(f"{date} is outside the observed period {self.start_date}..{self.end_date}")
        return idx

    def values_on(self, date: dt.date) -> np.ndarray:
        i = self.index(date)
        return np.array([self.H[i], self.R[i], self.D[i]])

    def window(self, start: dt.date | None = None, end: dt.date | None = None) -> "ObservationSeries":
        i = self.index(start) if start else 0
        j = self.index(end) + 1 if end else len(self)
        nc = None if self.new_cases is None else self.new_cases[i:j]
        return ObservationSeries(self.region, self.dates[i:j], self.H[i:j], self.R[i:j], self.D[i:j],
                                 nc, self.corrections)


def _parse_count(text: str, path, line: int, column: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ObservationFormatError(path, line, f"{column}: not a number: {text!r}") from None
    if not math.isfinite(value) or value < 0:
        raise ObservationFormatError(path, line, f"{column}: expected a nonnegative count, got {text!r}")
    return value


def parse_observations(path, region: str = "") -> ObservationSeries:
    """Read an observation CSV.

    Cumulative columns (recovered, deaths) that decrease are replaced by their
    running maximum; each replacement is logged and kept in ``corrections``.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read observations {path}: {exc.strerror or exc}") from None

    rows = []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ObservationFormatError(path, 1, "file is empty")
        header = [h.strip() for h in header]
        if header not in (list(OBS_COLUMNS), list(OBS_COLUMNS) + [NEW_CASES_COLUMN]):
            raise ObservationFormatError(
                path, 1, f"header must be {','.join(OBS_COLUMNS)}[,{NEW_CASES_COLUMN}], got {','.join(header)}"
            )
        width = len(header)
        prev = None
        for record in reader:
            line = reader.line_num
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) != width:
                raise ObservationFormatError(path, line, f"expected {width} fields, got {len(record)}")
            try:
                date = dt.date.fromisoformat(record[0].strip())
            except ValueError:
                raise ObservationFormatError(path, line, f"bad date {record[0]!r}") from None
            if prev is not None:
                if date == prev:
                    raise ObservationFormatError(path, line, f"duplicate date {date}")
                if date < prev:
                    raise ObservationFormatError(path, line, f"date regression: {date} after {prev}")
            prev = date
            values = [_parse_count(f, path, line, c) for f, c in zip(record[1:], header[1:])]
            rows.append((date, values))

    if not rows:
        raise ObservationFormatError(path, 2, "no data rows")

    start, end = rows[0][0], rows[-1][0]
    n = (end - start).days + 1
    table = np.full((n, width - 1), np.nan)
    for date, values in rows:
        table[(date - start).days] = values
    dates = tuple(start + dt.timedelta(days=i) for i in range(n))
    gaps = n - len(rows)
    if gaps:
        log.warning("%s: %d calendar day(s) absent, treated as missing", path, gaps)

    corrections = []
    for col, name in ((1, "recovered"), (2, "deaths")):
        raw = table[:, col].copy()
        fixed = _running_max(raw)
        for i in np.flatnonzero(np.isfinite(raw) & (fixed != raw)):
            corrections.append(DataCorrection(dates[i], name, float(raw[i]), float(fixed[i])))
            log.warning("%s: %s on %s decreased to %g; corrected to %g", path, name, dates[i], raw[i], fixed[i])
        table[:, col] = fixed

    new_cases = table[:, 3] if width == 5 else None
    return ObservationSeries(region or path.stem, dates, table[:, 0], table[:, 1], table[:, 2],
                             new_cases, tuple(corrections))


def _running_max(values: np.ndarray) -> np.ndarray:
    out = np.fmax.accumulate(values)
    out[np.isnan(values)] = np.nan
    return out


def _fmt(value: float) -> str:
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def write_observations(series: ObservationSeries, path) -> None:
    header = list(OBS_COLUMNS) + ([NEW_CASES_COLUMN] if series.new_cases is not None else [])
    cols = [series.H, series.R, series.D] + ([series.new_cases] if series.new_cases is not None else [])
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, date in enumerate(series.dates):
                writer.writerow([date.isoformat()] + [_fmt(c[i]) for c in cols])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_analysis(records: Sequence, path, metadata: dict | None = None) -> None:
    """Write one CSV row per record plus a JSON metadata sidecar.

    Columns: ``date`` then ``<quantity>_<stat>`` for every quantity in
    ``QUANTITIES`` and stat in ``STATS``. Compartments and ``beta_s`` are
    summarized in log space (``spread`` is the log-scale standard deviation);
    ``Rt`` in linear space.
    """
    if not records:
        raise DataError("no analysis records to write")
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ANALYSIS_HEADER)
            for rec in records:
                row = [rec.date.isoformat()]
                for q in QUANTITIES:
                    summary = rec.summaries[q]
                    row.extend(_fmt(getattr(summary, s)) for s in STATS)
                writer.writerow(row)
        meta = dict(metadata or {})
        meta.setdefault("columns", list(ANALYSIS_HEADER))
        meta.setdefault("record_kinds", {r.date.isoformat(): r.kind for r in records if r.kind != "analysis"})
        metadata_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def read_analysis(path) -> tuple[list, dict]:
    """Read an analysis CSV back as ``(dates, {column: array})``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ANALYSIS_HEADER:
            raise DataError(f"{path}: unexpected analysis header")
        rows = list(reader)
    dates = [dt.date.fromisoformat(r[0]) for r in rows]
    columns = {
        name: np.array([float(r[j]) if r[j] else math.nan for r in rows])
        for j, name in enumerate(header) if j > 0
    }
    return dates, columns


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plain CSV writer used for comparison and reference tables."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


MISSING = "NA"


def _cell(value) -> str:
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, (float, np.floating)):
        return MISSING if math.isnan(value) else repr(float(value))
    return str(value)
