"""Trade record parsing and hourly bucketing of monthly samples.

Trading runs 08:00-16:30 local time; the first hour and the last half hour
are discarded, leaving seven one-hour buckets [h:00, h+1:00) for h = 9..15.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .errors import EmptySampleError, SchemaError

SESSION_START = dt.time(9, 0)
SESSION_END = dt.time(16, 0)
SESSION_MINUTES = 7 * 60


class Venue(str, enum.Enum):
    ON_BOOK = "on_book"
    OFF_BOOK = "off_book"


@dataclass(frozen=True)
class TradeRecord:
    timestamp: dt.datetime
    instrument: str
    venue: Venue
    institution: str
    signed_volume: float
    order_id: str | None = None

    def __post_init__(self):
        if not isinstance(self.venue, Venue):
            object.__setattr__(self, "venue", Venue(self.venue))
        if self.signed_volume == 0 or not math.isfinite(self.signed_volume):
            raise ValueError("signed_volume must be finite and nonzero")
        if self.venue is Venue.OFF_BOOK and self.order_id:
            raise ValueError("off_book records carry no order_id")
        if not self.institution:
            raise ValueError("empty institution code")

    @property
    def month(self) -> str:
        return month_key(self.timestamp)


@dataclass(frozen=True)
class TradeSchema:
    """Column names of the delimited input table."""

    timestamp: str = "timestamp"
    instrument: str = "instrument"
    venue: str = "venue"
    institution: str = "institution"
    signed_volume: str = "signed_volume"
    order_id: str = "order_id"
    delimiter: str = ","

    @property
    def required(self) -> tuple[str, ...]:
        return (self.timestamp, self.instrument, self.venue, self.institution, self.signed_volume)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.required + (self.order_id,)


@dataclass(frozen=True)
class Reject:
    line_no: int
    row: dict
    reason: str


@dataclass
class ParseResult:
    records: list[TradeRecord] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)


def month_key(ts: dt.datetime | dt.date) -> str:
    return f"{ts.year:04d}-{ts.month:02d}"


def parse_trades(stream: TextIO, schema: TradeSchema = TradeSchema()) -> ParseResult:
    """Parse a delimited trade table.

    Malformed lines do not abort the parse; each one becomes a `Reject`
    carrying its 1-based physical line number (the header is line 1).
    A missing required column raises `SchemaError`.
    """
    reader = csv.DictReader(stream, delimiter=schema.delimiter)
    if reader.fieldnames is None:
        raise SchemaError("input has no header row")
    missing = [c for c in schema.required if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    result = ParseResult()
    for row in reader:
        line_no = reader.line_num
        try:
            result.records.append(_record_from_row(row, schema))
        except (ValueError, TypeError) as exc:
            result.rejects.append(Reject(line_no, dict(row), str(exc)))
    return result


def _record_from_row(row: dict, schema: TradeSchema) -> TradeRecord:
    if None in row or any(row.get(c) is None for c in schema.required):
        raise ValueError("wrong number of fields")
    try:
        ts = dt.datetime.fromisoformat(row[schema.timestamp].strip())
    except ValueError:
        raise ValueError(f"unparseable timestamp {row[schema.timestamp]!r}") from None
    try:
        volume = float(row[schema.signed_volume])
    except ValueError:
        raise ValueError(f"unparseable signed_volume {row[schema.signed_volume]!r}") from None
    if volume == 0:
        raise ValueError("signed_volume invariant violated: volume is zero")
    order_id = (row.get(schema.order_id) or "").strip() or None
    return TradeRecord(
        timestamp=ts,
        instrument=row[schema.instrument].strip(),
        venue=Venue(row[schema.venue].strip()),
        institution=row[schema.institution].strip(),
        signed_volume=volume,
        order_id=order_id,
    )


def format_volume(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_trades(stream: TextIO, records: Iterable[TradeRecord]) -> None:
    """Write records in the canonical input format (re-parseable by `parse_trades`)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TradeSchema().columns)
    for r in records:
        w.writerow([
            r.timestamp.isoformat(),
            r.instrument,
            r.venue.value,
            r.institution,
            format_volume(r.signed_volume),
            r.order_id or "",
        ])


def write_rejects(stream: TextIO, rejects: Iterable[Reject]) -> None:
    cols = TradeSchema().columns
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("line_no",) + cols + ("reject_reason",))
    for rej in rejects:
        w.writerow([rej.line_no] + [rej.row.get(c, "") for c in cols] + [rej.reason])


def trades_to_csv(records: Iterable[TradeRecord]) -> str:
    buf = io.StringIO()
    write_trades(buf, records)
    return buf.getvalue()


# -- bucketing -------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Bucket:
    day: dt.date
    index: int

    def __str__(self) -> str:
        return f"{self.day.isoformat()}/{self.index}"

    @classmethod
    def parse(cls, text: str) -> "Bucket":
        day, idx = text.split("/")
        return cls(dt.date.fromisoformat(day), int(idx))


@dataclass(frozen=True)
class MonthSample:
    instrument: str
    venue: Venue
    month: str
    buckets: tuple[Bucket, ...]
    trades: tuple[TradeRecord, ...]
    bucket_index: tuple[int, ...]  # position in `buckets` for each trade
    excluded: tuple[tuple[TradeRecord, str], ...] = ()

    @property
    def T(self) -> int:
        return len(self.buckets)


def session_bucket(ts: dt.datetime, bucket_minutes: int = 60) -> int | None:
    """Bucket index within the 09:00-16:00 session, or None if outside it."""
    t = ts.time()
    if t < SESSION_START or t >= SESSION_END:
        return None
    minutes = (ts.hour - SESSION_START.hour) * 60 + ts.minute
    return minutes // bucket_minutes


def trading_days(trades: Iterable[TradeRecord]) -> list[dt.date]:
    """Days with at least one trade, sorted."""
    return sorted({r.timestamp.date() for r in trades})


def bucketize(
    trades: Sequence[TradeRecord],
    instrument: str,
    venue: Venue | str,
    month: str,
    *,
    days: Iterable[dt.date] | None = None,
    bucket_minutes: int = 60,
) -> MonthSample:
    """Assign one (instrument, venue, month) slice of trades to session buckets.

    `days` overrides the trading calendar; by default every day of `month`
    with at least one trade counts. Empty buckets are kept, so
    T = (420 / bucket_minutes) * number_of_days.
    """
    venue = Venue(venue)
    if SESSION_MINUTES % bucket_minutes:
        raise ValueError(f"bucket_minutes must divide {SESSION_MINUTES}")
    for r in trades:
        if r.instrument != instrument or r.venue is not venue:
            raise ValueError(f"trade for {r.instrument}/{r.venue.value} passed to {instrument}/{venue.value}")

    day_source = days if days is not None else (r.timestamp.date() for r in trades)
    day_list = sorted({d for d in day_source if month_key(d) == month})
    if not day_list:
        raise EmptySampleError(f"no trading days for {instrument}/{venue.value} in {month}")
    per_day = SESSION_MINUTES // bucket_minutes
    buckets = tuple(Bucket(d, i) for d in day_list for i in range(per_day))
    day_pos = {d: k for k, d in enumerate(day_list)}

    kept: list[tuple[dt.datetime, int, TradeRecord, int]] = []
    excluded: list[tuple[TradeRecord, str]] = []
    for seq, r in enumerate(trades):
        d = r.timestamp.date()
        if month_key(d) != month:
            excluded.append((r, "outside month"))
            continue
        if d not in day_pos:
            excluded.append((r, "not a trading day"))
            continue
        b = session_bucket(r.timestamp, bucket_minutes)
        if b is None:
            excluded.append((r, "outside session hours"))
            continue
        kept.append((r.timestamp, seq, r, day_pos[d] * per_day + b))
    kept.sort(key=lambda x: (x[0], x[1]))
    return MonthSample(
        instrument=instrument,
        venue=venue,
        month=month,
        buckets=buckets,
        trades=tuple(k[2] for k in kept),
        bucket_index=tuple(k[3] for k in kept),
        excluded=tuple(excluded),
    )


def split_samples(records: Iterable[TradeRecord]) -> dict[tuple[str, Venue, str], list[TradeRecord]]:
    """Group records by (instrument, venue, month), keys sorted."""
    groups: dict[tuple[str, Venue, str], list[TradeRecord]] = {}
    for r in records:
        groups.setdefault((r.instrument, r.venue, r.month), []).append(r)
    return dict(sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])))
