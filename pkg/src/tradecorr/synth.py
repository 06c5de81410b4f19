"""Synthetic order flow with a planted crowd/dealer structure.

Each session bucket draws a market direction f_t = +/-1. An active crowd
member follows f_t with probability `factor_strength` and otherwise picks a
fair random sign; dealers do the same against -f_t. Codes are rescrambled
every month and some orders rest in the book across each month boundary,
which is the only information that links codes between months.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence, TextIO

import numpy as np

from .cluster import ClusterCut, rand_index
from .ingest import SESSION_MINUTES, TradeRecord, Venue, month_key
from .persistence import LinkMap, MinorityRow, Track, next_month

CROWD, DEALER = 0, 1


@dataclass(frozen=True)
class SynthConfig:
    n_crowd: int = 70
    n_dealer: int = 12
    months: int = 32
    days_per_month: int = 20
    factor_strength: float = 0.6
    activity: float | tuple[float, ...] = 0.7
    volume_scale: float = 10_000.0
    volume_log_sd: float = 1.0
    resting_order_rate: float = 2.0
    seed: int = 0
    second_factor_strength: float = 0.0
    off_hours_rate: float = 0.05
    start_month: str = "1998-09"
    instrument: str = "SYN"
    venue: str = "on_book"

    def __post_init__(self):
        if not 0 < self.n_dealer < self.n_crowd:
            raise ValueError("need 0 < n_dealer < n_crowd")
        if not 0.0 <= self.factor_strength <= 1.0 or not 0.0 <= self.second_factor_strength <= 1.0:
            raise ValueError("factor strengths must lie in [0, 1]")
        act = np.asarray(self.activity, dtype=float)
        if act.ndim == 1 and act.size != self.n_institutions:
            raise ValueError("per-institution activity needs one entry per institution")
        if np.any(act <= 0) or np.any(act > 1):
            raise ValueError("activity must lie in (0, 1]")
        if not 1 <= self.days_per_month <= 20:
            raise ValueError("days_per_month must be in [1, 20]")
        if self.resting_order_rate < 0:
            raise ValueError("resting_order_rate must be non-negative")
        if isinstance(self.activity, list):
            object.__setattr__(self, "activity", tuple(self.activity))

    @property
    def n_institutions(self) -> int:
        return self.n_crowd + self.n_dealer

    @property
    def labels(self) -> np.ndarray:
        return np.array([CROWD] * self.n_crowd + [DEALER] * self.n_dealer)

    def activity_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.activity, dtype=float), (self.n_institutions,)).copy()


@dataclass
class GroundTruth:
    config: SynthConfig
    months: list[str]
    days: list[list[dt.date]]
    codes: list[list[str]]  # codes[m][true_id]
    labels: np.ndarray  # true_id -> CROWD / DEALER
    factor: list[np.ndarray]  # per month, length T
    signs: list[np.ndarray]  # per month, (n_institutions, T) by true id
    resting: dict[tuple[str, str], dict[str, int]] = field(default_factory=dict)  # boundary -> true_id -> n orders

    def true_id(self, month: str, code: str) -> int | None:
        m = self.months.index(month)
        try:
            return self.codes[m].index(code)
        except ValueError:
            return None

    def true_links(self, boundary: tuple[str, str]) -> dict[str, str]:
        a, b = self.months.index(boundary[0]), self.months.index(boundary[1])
        return dict(zip(self.codes[a], self.codes[b]))

    def label_of(self, month: str, code: str) -> int:
        return int(self.labels[self.true_id(month, code)])

    def to_json(self, stream: TextIO) -> None:
        json.dump({
            "config": asdict(self.config),
            "months": self.months,
            "days": [[d.isoformat() for d in ds] for ds in self.days],
            "codes": self.codes,
            "labels": self.labels.tolist(),
            "factor": [f.tolist() for f in self.factor],
            "signs": [s.tolist() for s in self.signs],
            "resting": [{"boundary": list(k), "orders": v} for k, v in self.resting.items()],
        }, stream)

    @classmethod
    def from_json(cls, stream: TextIO) -> "GroundTruth":
        d = json.load(stream)
        cfg = d["config"]
        if isinstance(cfg.get("activity"), list):
            cfg["activity"] = tuple(cfg["activity"])
        return cls(
            config=SynthConfig(**cfg),
            months=d["months"],
            days=[[dt.date.fromisoformat(x) for x in ds] for ds in d["days"]],
            codes=d["codes"],
            labels=np.array(d["labels"]),
            factor=[np.array(f, dtype=np.int8) for f in d["factor"]],
            signs=[np.array(s, dtype=np.int8) for s in d["signs"]],
            resting={tuple(r["boundary"]): r["orders"] for r in d["resting"]},
        )


def _month_days(month: str, n: int) -> list[dt.date]:
    y, m = map(int, month.split("-"))
    d = dt.date(y, m, 1)
    days = []
    while month_key(d) == month and len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def _stream(cfg: SynthConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


def month_signs(cfg: SynthConfig, month_index: int, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Factor series and (n_institutions, T) sign matrix for one month."""
    rng = _stream(cfg, 1, month_index)
    n = cfg.n_institutions
    f = rng.choice(np.array([-1, 1], dtype=np.int8), size=T)
    g = rng.choice(np.array([-1, 1], dtype=np.int8), size=T)
    active = rng.random((n, T)) < cfg.activity_vector()[:, None]
    follow = rng.random((n, T)) < cfg.factor_strength
    noise = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, T))
    direction = np.where(cfg.labels[:, None] == DEALER, -f[None, :], f[None, :])
    signs = np.where(follow, direction, noise)
    if cfg.second_factor_strength > 0:
        # second half of the crowd can also lean on an independent direction
        sub = np.zeros(n, dtype=bool)
        sub[cfg.n_crowd // 2:cfg.n_crowd] = True
        second = (rng.random((n, T)) < cfg.second_factor_strength) & sub[:, None]
        signs = np.where(second, g[None, :], signs)
    signs = np.where(active, signs, 0).astype(np.int8)
    return f, signs


def generate_signs(cfg: SynthConfig, n_months: int | None = None, T: int | None = None) -> list[np.ndarray]:
    """Sign matrices only, skipping trade synthesis."""
    T = T if T is not None else 7 * cfg.days_per_month
    return [month_signs(cfg, m, T)[1] for m in range(n_months if n_months is not None else cfg.months)]


def _volumes(rng: np.random.Generator, cfg: SynthConfig, size: int) -> np.ndarray:
    v = rng.lognormal(np.log(cfg.volume_scale), cfg.volume_log_sd, size=size)
    return np.maximum(1, np.rint(v)).astype(np.int64)


def _bucket_trades(rng, cfg, target: int) -> list[int]:
    """Signed integer volumes whose sum has sign ``target``."""
    n = 1 + rng.poisson(0.5)
    vol = _volumes(rng, cfg, n)
    sgn = rng.choice([-1, 1], size=n)
    signed = vol * sgn
    net = int(signed.sum())
    if net == 0:
        signed = np.append(signed, target)
    elif np.sign(net) != target:
        signed = -signed
    return [int(x) for x in signed]


def _timestamp(day: dt.date, minute_of_session: int, second: int) -> dt.datetime:
    return dt.datetime.combine(day, dt.time(9)) + dt.timedelta(minutes=int(minute_of_session), seconds=int(second))


def generate(cfg: SynthConfig) -> tuple[list[TradeRecord], GroundTruth]:
    """Trade stream in ingest order plus the ground truth that produced it."""
    venue = Venue(cfg.venue)
    on_book = venue is Venue.ON_BOOK
    n = cfg.n_institutions
    months = [cfg.start_month]
    for _ in range(cfg.months - 1):
        months.append(next_month(months[-1]))

    code_rng = _stream(cfg, 2)
    codes = [[f"{c:04d}" for c in code_rng.choice(np.arange(1000, 10000), size=n, replace=False)] for _ in months]

    counter = 0

    def new_order_id(prefix: str) -> str:
        nonlocal counter
        counter += 1
        return f"{prefix}{counter:08X}"

    truth = GroundTruth(cfg, months, [], codes, cfg.labels, [], [])
    by_month: list[list[TradeRecord]] = []
    for mi, month in enumerate(months):
        days = _month_days(month, cfg.days_per_month)
        per_day = SESSION_MINUTES // 60
        T = per_day * len(days)
        f, signs = month_signs(cfg, mi, T)
        truth.days.append(days)
        truth.factor.append(f)
        truth.signs.append(signs)
        rng = _stream(cfg, 3, mi)
        recs: list[TradeRecord] = []
        for t in range(T):
            day, hour = days[t // per_day], t % per_day
            for i in np.flatnonzero(signs[:, t]):
                for v in _bucket_trades(rng, cfg, int(signs[i, t])):
                    ts = _timestamp(day, hour * 60 + rng.integers(60), rng.integers(60))
                    recs.append(TradeRecord(ts, cfg.instrument, venue, codes[mi][i], float(v),
                                            new_order_id("OB") if on_book else None))
        # trades in the discarded opening hour and closing half hour
        n_off = rng.poisson(cfg.off_hours_rate * n * len(days))
        for _ in range(n_off):
            day = days[rng.integers(len(days))]
            i = rng.integers(n)
            if rng.random() < 0.5:
                ts = dt.datetime.combine(day, dt.time(8, int(rng.integers(60))))
            else:
                ts = dt.datetime.combine(day, dt.time(16, int(rng.integers(30))))
            v = float(_volumes(rng, cfg, 1)[0] * rng.choice([-1, 1]))
            recs.append(TradeRecord(ts, cfg.instrument, venue, codes[mi][i], v,
                                    new_order_id("OB") if on_book else None))
        by_month.append(recs)

    if on_book:
        for mi in range(len(months) - 1):
            rng = _stream(cfg, 4, mi)
            last, first = truth.days[mi][-1], truth.days[mi + 1][0]
            placed = {}
            for i in range(n):
                k = _resting_count(rng, cfg.resting_order_rate)
                placed[codes[mi][i]] = k
                for _ in range(k):
                    oid = new_order_id("RO")
                    side = int(rng.choice([-1, 1]))
                    # partial fills straddling the boundary, inside the discarded windows
                    t0 = dt.datetime.combine(last, dt.time(16, int(rng.integers(30)), int(rng.integers(60))))
                    t1 = dt.datetime.combine(first, dt.time(8, int(rng.integers(60)), int(rng.integers(60))))
                    by_month[mi].append(TradeRecord(t0, cfg.instrument, venue, codes[mi][i],
                                                    float(side * _volumes(rng, cfg, 1)[0]), oid))
                    by_month[mi + 1].append(TradeRecord(t1, cfg.instrument, venue, codes[mi + 1][i],
                                                        float(side * _volumes(rng, cfg, 1)[0]), oid))
            truth.resting[(months[mi], months[mi + 1])] = placed

    stream: list[TradeRecord] = []
    for recs in by_month:
        stream.extend(sorted(recs, key=lambda r: (r.timestamp, r.institution, r.order_id or "")))
    return stream, truth


def _resting_count(rng: np.random.Generator, rate: float) -> int:
    """Straddling orders for one institution: mean ``rate``, at least one when rate >= 1."""
    if rate >= 1:
        return 1 + int(rng.poisson(rate - 1))
    return int(rng.random() < rate)


# -- scoring against ground truth --------------------------------------------------

@dataclass
class Scorecard:
    rand_index: dict[str, float]
    link_precision: float
    link_recall: float
    track_false_joins: int
    n_tracks: int
    dealer_hit_rate: float | None
    crowd_false_rate: float | None
    n_dealer_tracks: int

    def as_dict(self) -> dict:
        return asdict(self)


def ground_truth_compare(
    truth: GroundTruth,
    cuts: Mapping[str, ClusterCut] | None = None,
    linkmaps: Sequence[LinkMap] = (),
    tracks: Sequence[Track] = (),
    minority: Sequence[MinorityRow] = (),
    threshold: float = 0.95,
) -> Scorecard:
    ri = {}
    for month, c in sorted((cuts or {}).items()):
        lab = c.label_of()
        codes = sorted(lab)
        ri[month] = rand_index([lab[x] for x in codes], [truth.label_of(month, x) for x in codes])

    tp = fp = total = 0
    for lm in linkmaps:
        true = truth.true_links(lm.boundary)
        total += len(true)
        for a, b in lm.links.items():
            if true.get(a) == b:
                tp += 1
            else:
                fp += 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / total if total else 1.0

    false_joins = 0
    for tr in tracks:
        ids = {truth.true_id(m, c) for m, c in zip(tr.months, tr.codes)}
        false_joins += len(ids) != 1 or None in ids

    dealer_flags, crowd_flags = [], []
    for row in minority:
        tr = row.track
        month = tr.months[0] if tr is not None else truth.months[0]
        lab = truth.label_of(month, row.code)
        (dealer_flags if lab == DEALER else crowd_flags).append(row.prob_nonrandom > threshold)
    return Scorecard(
        rand_index=ri,
        link_precision=precision,
        link_recall=recall,
        track_false_joins=int(false_joins),
        n_tracks=len(tracks),
        dealer_hit_rate=float(np.mean(dealer_flags)) if dealer_flags else None,
        crowd_false_rate=float(np.mean(crowd_flags)) if crowd_flags else None,
        n_dealer_tracks=len(dealer_flags),
    )
