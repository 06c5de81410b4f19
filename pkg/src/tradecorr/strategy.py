"""Ternary strategy matrices: one row per institution, one column per bucket."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import EmptyMatrixError
from .ingest import Bucket, MonthSample, TradeRecord, Venue

ACTIVITY_THRESHOLD = 1.0 / 3.0


def net_volume(trades: Iterable[TradeRecord]) -> float:
    return float(sum(t.signed_volume for t in trades))


def ternary_sign(net: float, was_active: bool) -> int:
    if not was_active or net == 0:
        return 0
    return 1 if net > 0 else -1


@dataclass(frozen=True)
class StrategyMatrix:
    instrument: str
    venue: Venue
    month: str
    institutions: tuple[str, ...]
    buckets: tuple[Bucket, ...]
    values: np.ndarray
    # audit sidecar: (code, active bucket count) for institutions dropped by the filter
    excluded: tuple[tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape != (len(self.institutions), len(self.buckets)):
            raise ValueError(f"values shape {v.shape} does not match N={len(self.institutions)}, T={len(self.buckets)}")
        if not np.isin(v, (-1, 0, 1)).all():
            raise ValueError("strategy entries must be -1, 0 or +1")
        if len(set(self.institutions)) != len(self.institutions):
            raise ValueError("duplicate institution codes")
        v = v.astype(np.int8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "venue", Venue(self.venue))

    @property
    def N(self) -> int:
        return len(self.institutions)

    @property
    def T(self) -> int:
        return len(self.buckets)

    def with_values(self, values: np.ndarray) -> "StrategyMatrix":
        return StrategyMatrix(self.instrument, self.venue, self.month, self.institutions,
                              self.buckets, values, self.excluded)

    def cumulative(self) -> np.ndarray:
        """Running sum of each row, the cumulative-strategy path."""
        return np.cumsum(self.values.astype(np.int64), axis=1)


def activity_and_net(sample: MonthSample) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Institutions in first-appearance order, bucket activity flags and net volumes."""
    order: dict[str, int] = {}
    for t in sample.trades:
        order.setdefault(t.institution, len(order))
    codes = list(order)
    active = np.zeros((len(codes), sample.T), dtype=bool)
    net = np.zeros((len(codes), sample.T), dtype=np.float64)
    # per-cell lists keep the summation order identical to net_volume()
    cells: dict[tuple[int, int], list[TradeRecord]] = {}
    for t, b in zip(sample.trades, sample.bucket_index):
        cells.setdefault((order[t.institution], b), []).append(t)
    for (i, b), ts in cells.items():
        active[i, b] = True
        net[i, b] = net_volume(ts)
    return codes, active, net


def build_strategy_matrix(sample: MonthSample, threshold: float = ACTIVITY_THRESHOLD) -> StrategyMatrix:
    """Ternary matrix with the activity filter applied.

    An institution is kept iff the number of buckets in which it traded at
    all is strictly greater than ``threshold * T``.
    """
    codes, active, net = activity_and_net(sample)
    counts = active.sum(axis=1)
    keep = counts > threshold * sample.T
    if not keep.any():
        raise EmptyMatrixError(f"no institution passes the activity filter in {sample.instrument}/{sample.venue.value}/{sample.month}")
    signs = np.where(active, np.sign(net), 0).astype(np.int8)
    return StrategyMatrix(
        instrument=sample.instrument,
        venue=sample.venue,
        month=sample.month,
        institutions=tuple(c for c, k in zip(codes, keep) if k),
        buckets=sample.buckets,
        values=signs[keep],
        excluded=tuple((c, int(n)) for c, n, k in zip(codes, counts, keep) if not k),
    )


# -- canonical text format ---------------------------------------------------

_MAGIC = "# tradecorr strategy matrix"


def write_strategy_matrix(stream: TextIO, m: StrategyMatrix, comment: str | None = None) -> None:
    stream.write(_MAGIC + "\n")
    if comment:
        stream.write(f"# {comment}\n")
    stream.write(f"instrument={m.instrument} venue={m.venue.value} month={m.month} N={m.N} T={m.T}\n")
    stream.write("buckets," + ",".join(str(b) for b in m.buckets) + "\n")
    for code, row in zip(m.institutions, m.values):
        stream.write(code + "," + ",".join(str(int(x)) for x in row) + "\n")


def read_strategy_matrix(stream: TextIO) -> StrategyMatrix:
    lines = [ln.rstrip("\n") for ln in stream if ln.strip()]
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not a strategy matrix file")
    lines = lines[:1] + [ln for ln in lines[1:] if not ln.startswith("#")]
    meta = dict(kv.split("=", 1) for kv in lines[1].split())
    head, *bucket_text = lines[2].split(",")
    if head != "buckets":
        raise ValueError("missing buckets line")
    codes, rows = [], []
    for ln in lines[3:]:
        code, *vals = ln.split(",")
        codes.append(code)
        rows.append([int(v) for v in vals])
    n, t = int(meta["N"]), int(meta["T"])
    values = np.array(rows, dtype=np.int8).reshape(n, t)
    if len(codes) != n or len(bucket_text) != t:
        raise ValueError("header N/T disagree with body")
    return StrategyMatrix(meta["instrument"], Venue(meta["venue"]), meta["month"], tuple(codes),
                          tuple(Bucket.parse(b) for b in bucket_text), values)


def write_exclusions(stream: TextIO, m: StrategyMatrix) -> None:
    stream.write("institution,active_buckets,T\n")
    for code, n in m.excluded:
        stream.write(f"{code},{n},{m.T}\n")
