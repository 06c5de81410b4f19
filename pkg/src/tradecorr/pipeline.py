"""In-memory orchestration of the analysis stages.

Each ``stage_*`` function consumes the previous stage's products, so the CLI
can stop after any of them. Nothing here touches the filesystem.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .bootstrap import BootstrapBand, bootstrap_band
from .cluster import ClusterCut, Dendrogram, complete_linkage, cut_k, distance_matrix
from .config import RunConfig
from .errors import EmptySampleError
from .ingest import ParseResult, TradeRecord, Venue, bucketize, parse_trades, split_samples
from .persistence import (
    LinkMap,
    MinorityRow,
    RegressionResult,
    Track,
    chain_links,
    link_codes,
    minority_counts,
    minority_report,
    next_month,
    ols,
    persistence_pairs,
    resting_orders,
)
from .spectra import CorrelationResult, EigenReport, PooledSpectrum, correlate, eigen_report, pooled_spectrum
from .strategy import StrategyMatrix, build_strategy_matrix


@dataclass
class GroupResult:
    """Everything computed for one (instrument, venue) series of months."""

    instrument: str
    venue: Venue
    matrices: dict[str, StrategyMatrix] = field(default_factory=dict)
    excluded_trades: dict[str, int] = field(default_factory=dict)
    corrs: dict[str, CorrelationResult] = field(default_factory=dict)
    reports: dict[str, EigenReport] = field(default_factory=dict)
    pooled: PooledSpectrum | None = None
    bands: dict[str, BootstrapBand] = field(default_factory=dict)
    dendrograms: dict[str, Dendrogram] = field(default_factory=dict)
    cuts: dict[str, ClusterCut] = field(default_factory=dict)
    linkmaps: list[LinkMap] = field(default_factory=list)
    tracks: list[Track] = field(default_factory=list)
    pairs: list[tuple[float, float]] = field(default_factory=list)
    regression: RegressionResult | None = None
    minority: list[MinorityRow] = field(default_factory=list)

    @property
    def key(self) -> str:
        return f"{self.instrument}_{self.venue.value}"

    @property
    def months(self) -> list[str]:
        return sorted(self.matrices)


def month_seed_key(instrument: str, venue: Venue, month: str) -> int:
    return zlib.crc32(f"{instrument}/{venue.value}/{month}".encode())


def load_inputs(paths: Sequence[str]) -> ParseResult:
    out = ParseResult()
    for p in paths:
        with open(p, newline="") as fh:
            res = parse_trades(fh)
        out.records.extend(res.records)
        out.rejects.extend(res.rejects)
    return out


def select(records: Iterable[TradeRecord], cfg: RunConfig) -> list[TradeRecord]:
    return [
        r for r in records
        if (not cfg.instruments or r.instrument in cfg.instruments)
        and (not cfg.venues or r.venue.value in cfg.venues)
        and (not cfg.months or r.month in cfg.months)
    ]


def stage_discretize(records: Sequence[TradeRecord], cfg: RunConfig) -> list[GroupResult]:
    records = select(records, cfg)
    if not records:
        raise EmptySampleError("no trade records to analyse")
    # trading days are days with any trade on any instrument or venue
    days_by_month: dict[str, set] = {}
    for r in records:
        days_by_month.setdefault(r.month, set()).add(r.timestamp.date())
    groups: dict[tuple[str, Venue], GroupResult] = {}
    for (inst, venue, month), recs in split_samples(records).items():
        g = groups.setdefault((inst, venue), GroupResult(inst, venue))
        sample = bucketize(recs, inst, venue, month, days=days_by_month[month], bucket_minutes=cfg.bucket_minutes)
        g.matrices[month] = build_strategy_matrix(sample, cfg.activity_threshold)
        g.excluded_trades[month] = len(sample.excluded)
    return list(groups.values())


def stage_correlate(groups: Sequence[GroupResult], cfg: RunConfig) -> None:
    for g in groups:
        g.corrs = {m: correlate(M) for m, M in sorted(g.matrices.items())}


def stage_eigen(groups: Sequence[GroupResult], cfg: RunConfig) -> None:
    for g in groups:
        g.reports = {m: eigen_report(c, cfg.sigma_mode, instrument=g.instrument, venue=g.venue.value)
                     for m, c in g.corrs.items()}
        g.pooled = pooled_spectrum(list(g.reports.values()))


def stage_bootstrap(groups: Sequence[GroupResult], cfg: RunConfig) -> None:
    for g in groups:
        g.bands = {
            m: bootstrap_band(M, cfg.bootstrap_B, cfg.bootstrap_k, cfg.seed,
                              month_index=month_seed_key(g.instrument, g.venue, m),
                              block_length=cfg.block_length, n_jobs=cfg.n_jobs)
            for m, M in sorted(g.matrices.items())
        }


def stage_cluster(groups: Sequence[GroupResult], cfg: RunConfig) -> None:
    for g in groups:
        for m, c in g.corrs.items():
            d = complete_linkage(distance_matrix(c.rho), c.codes, linkage=cfg.linkage)
            g.dendrograms[m] = d
            g.cuts[m] = cut_k(d, 2)


def stage_persist(groups: Sequence[GroupResult], records: Sequence[TradeRecord], cfg: RunConfig) -> None:
    """Code links, identity tracks and the consecutive-month regression (on-book only)."""
    for g in groups:
        if g.venue is not Venue.ON_BOOK:
            continue
        mine = [r for r in records if r.instrument == g.instrument and r.venue is g.venue]
        orders = resting_orders(mine)
        months = g.months
        g.linkmaps = [link_codes(orders.get((m0, m1), []), (m0, m1))
                      for m0, m1 in zip(months, months[1:]) if next_month(m0) == m1]
        g.tracks = chain_links(g.linkmaps)
        g.pairs = persistence_pairs(g.corrs, g.linkmaps)
        g.regression = ols(g.pairs) if len(g.pairs) >= 3 else None


def stage_minority(groups: Sequence[GroupResult], cfg: RunConfig) -> None:
    for g in groups:
        if g.venue is not Venue.ON_BOOK:
            continue
        counts = minority_counts(g.cuts, g.tracks, cfg.minority_min_months, cfg.exclude_singleton_minority)
        g.minority = minority_report(counts, cfg.minority_trials, cfg.seed)


STAGES = ("ingest", "discretize", "correlate", "eigen", "bootstrap", "cluster", "persist", "minority")


def run_all(records: Sequence[TradeRecord], cfg: RunConfig) -> list[GroupResult]:
    groups = stage_discretize(records, cfg)
    stage_correlate(groups, cfg)
    stage_eigen(groups, cfg)
    stage_bootstrap(groups, cfg)
    stage_cluster(groups, cfg)
    stage_persist(groups, records, cfg)
    stage_minority(groups, cfg)
    return groups
