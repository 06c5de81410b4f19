"""Tracking institutions across monthly code rescrambles and testing persistence.

Codes are reassigned every month. An order resting in the book across the
month boundary shows up under the old code before it and under the new code
after it, which links the two codes.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .cluster import ClusterCut
from .errors import DegenerateRegressorError, ExactModeLimitError
from .ingest import TradeRecord, Venue
from .spectra import CorrelationResult

EXACT_MAX_K = 64


@dataclass(frozen=True)
class RestingOrder:
    order_id: str
    before: str
    after: str
    boundary: tuple[str, str] = ("", "")


@dataclass(frozen=True)
class LinkMap:
    boundary: tuple[str, str]
    links: Mapping[str, str]
    evidence: Mapping[str, int]
    conflicts: tuple[RestingOrder, ...] = ()

    def __post_init__(self):
        targets = list(self.links.values())
        if len(set(targets)) != len(targets):
            raise ValueError("link map must be injective")
        if any(self.evidence.get(a, 0) < 1 for a in self.links):
            raise ValueError("every link needs at least one supporting order")


def resting_orders(records: Iterable[TradeRecord]) -> dict[tuple[str, str], list[RestingOrder]]:
    """Orders seen in two consecutive months, grouped by boundary.

    Only on-book records carry order ids. Within a month the last code seen
    before the boundary and the first code seen after it are used.
    """
    by_order: dict[str, dict[str, list[TradeRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        if r.venue is Venue.ON_BOOK and r.order_id:
            by_order[r.order_id][r.month].append(r)
    out: dict[tuple[str, str], list[RestingOrder]] = defaultdict(list)
    for oid in sorted(by_order):
        months = sorted(by_order[oid])
        for m0, m1 in zip(months, months[1:]):
            if next_month(m0) != m1:
                continue
            before = max(by_order[oid][m0], key=lambda r: r.timestamp).institution
            after = min(by_order[oid][m1], key=lambda r: r.timestamp).institution
            out[(m0, m1)].append(RestingOrder(oid, before, after, (m0, m1)))
    return dict(sorted(out.items()))


def next_month(month: str) -> str:
    y, m = map(int, month.split("-"))
    return f"{y + m // 12:04d}-{m % 12 + 1:02d}"


def link_codes(orders: Sequence[RestingOrder], boundary: tuple[str, str] | None = None) -> LinkMap:
    """Majority-vote code links for one boundary.

    Per old code the most supported new code wins; a tie between candidates
    drops all of them. If two old codes then claim the same new code the
    weaker link is dropped, and equal evidence drops both. Orders whose
    implied link disagrees with the final map are reported as conflicts.
    """
    if boundary is None:
        boundary = orders[0].boundary if orders else ("", "")
    votes: dict[str, Counter] = defaultdict(Counter)
    for o in orders:
        votes[o.before][o.after] += 1
    chosen: dict[str, tuple[str, int]] = {}
    for old in sorted(votes):
        (top, n), *rest = votes[old].most_common()
        if rest and rest[0][1] == n:
            continue
        chosen[old] = (top, n)
    by_target: dict[str, list[str]] = defaultdict(list)
    for old, (new, _) in chosen.items():
        by_target[new].append(old)
    links, evidence = {}, {}
    for new in sorted(by_target):
        claims = sorted(by_target[new], key=lambda o: -chosen[o][1])
        if len(claims) > 1 and chosen[claims[0]][1] == chosen[claims[1]][1]:
            continue
        old = claims[0]
        links[old] = new
        evidence[old] = chosen[old][1]
    links = dict(sorted(links.items()))
    conflicts = tuple(o for o in orders if links.get(o.before) != o.after)
    return LinkMap(boundary, links, {k: evidence[k] for k in links}, conflicts)


@dataclass(frozen=True)
class Track:
    start: int  # index of the first month in the chained sequence
    codes: tuple[str, ...]
    months: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.codes)

    def code_in(self, month: str) -> str | None:
        try:
            return self.codes[self.months.index(month)]
        except ValueError:
            return None


def chain_links(maps: Sequence[LinkMap]) -> list[Track]:
    """Compose consecutive link maps into maximal identity tracks.

    Tracks break where a code has no outgoing link or where consecutive maps
    do not share a month.
    """
    tracks: list[Track] = []
    open_tracks: dict[str, list[str]] = {}  # current code -> codes so far
    open_months: dict[str, list[str]] = {}
    open_start: dict[str, int] = {}
    prev_end = None
    for idx, lm in enumerate(maps):
        if prev_end is not None and lm.boundary[0] != prev_end:
            for code in sorted(open_tracks):
                tracks.append(Track(open_start[code], tuple(open_tracks[code]), tuple(open_months[code])))
            open_tracks, open_months, open_start = {}, {}, {}
        nxt, nxt_m, nxt_s = {}, {}, {}
        for old, new in lm.links.items():
            codes = open_tracks.pop(old, [old])
            months = open_months.pop(old, [lm.boundary[0]])
            start = open_start.pop(old, idx)
            nxt[new] = codes + [new]
            nxt_m[new] = months + [lm.boundary[1]]
            nxt_s[new] = start
        for code in sorted(open_tracks):
            tracks.append(Track(open_start[code], tuple(open_tracks[code]), tuple(open_months[code])))
        open_tracks, open_months, open_start = nxt, nxt_m, nxt_s
        prev_end = lm.boundary[1]
    for code in sorted(open_tracks):
        tracks.append(Track(open_start[code], tuple(open_tracks[code]), tuple(open_months[code])))
    tracks.sort(key=lambda t: (t.start, t.codes))
    return tracks


def persistence_pairs(corrs: Mapping[str, CorrelationResult], maps: Sequence[LinkMap]) -> list[tuple[float, float]]:
    """(rho in month m, rho in month m+1) for every linkable institution pair."""
    pairs = []
    for lm in maps:
        m0, m1 = lm.boundary
        if m0 not in corrs or m1 not in corrs:
            continue
        c0, c1 = corrs[m0], corrs[m1]
        idx0 = {c: i for i, c in enumerate(c0.codes)}
        idx1 = {c: i for i, c in enumerate(c1.codes)}
        linked = [(idx0[a], idx1[b]) for a, b in lm.links.items() if a in idx0 and b in idx1]
        linked.sort()
        for p in range(len(linked)):
            for q in range(p + 1, len(linked)):
                (i0, i1), (j0, j1) = linked[p], linked[q]
                pairs.append((float(c0.rho[i0, j0]), float(c1.rho[i1, j1])))
    return pairs


@dataclass(frozen=True)
class RegressionResult:
    alpha: float
    beta: float
    se_alpha: float
    se_beta: float
    p_alpha: float
    p_beta: float
    r2: float
    n_pairs: int


def ols(pairs: Sequence[tuple[float, float]]) -> RegressionResult:
    """Least squares fit of c2 = alpha + beta c1 + eps with t-based p-values."""
    xy = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    n = xy.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 pairs, got {n}")
    x, y = xy[:, 0], xy[:, 1]
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise DegenerateRegressorError("regressor has zero variance")
    sxy = float(np.sum((x - xm) * (y - ym)))
    syy = float(np.sum((y - ym) ** 2))
    beta = sxy / sxx
    alpha = ym - beta * xm
    resid = y - alpha - beta * x
    sse = float(np.sum(resid**2))
    s2 = sse / (n - 2)
    se_beta = math.sqrt(s2 / sxx)
    se_alpha = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    df = n - 2

    def pval(est: float, se: float) -> float:
        if se == 0:
            return 0.0 if est != 0 else 1.0
        return float(2 * stats.t.sf(abs(est / se), df))

    r2 = 1.0 - sse / syy if syy > 0 else 1.0
    return RegressionResult(alpha, beta, se_alpha, se_beta, pval(alpha, se_alpha), pval(beta, se_beta),
                            float(min(max(r2, 0.0), 1.0)), n)


def format_coef(est: float, se: float, p: float) -> str:
    """Render a coefficient as 'est ± se (p)'."""
    return f"{est:.3f} ± {se:.3f} ({p:.2f})"


# -- minority persistence -------------------------------------------------------

@dataclass(frozen=True)
class MinorityCount:
    track: Track
    x: int
    K_active: int
    p_k: tuple[float, ...]

    @property
    def code(self) -> str:
        return self.track.codes[0]


@dataclass(frozen=True)
class MinorityRow:
    code: str
    x: int
    K_active: int
    p_k: tuple[float, ...]
    prob_nonrandom: float
    track: Track | None = field(default=None, compare=False)


def minority_counts(
    cuts: Mapping[str, ClusterCut],
    tracks: Sequence[Track],
    min_months: int = 12,
    exclude_singleton_minority: bool = False,
) -> list[MinorityCount]:
    """Times each tracked institution sat in the minority cluster.

    Only tracks present in more than ``min_months`` clustered months are
    kept. p_k is the minority share of month k's active institutions.
    """
    out = []
    for tr in tracks:
        x, ps = 0, []
        for month, code in zip(tr.months, tr.codes):
            c = cuts.get(month)
            if c is None or c.minority_label is None:
                continue
            if exclude_singleton_minority and len(c.minority) == 1:
                continue
            members = set(c.minority) | set(c.majority)
            if code not in members:
                continue
            nu = len(members)
            ps.append(len(c.minority) / nu)
            x += code in c.minority
        if len(ps) > min_months:
            out.append(MinorityCount(tr, x, len(ps), tuple(ps)))
    return out


def exact_poisson_binomial(p_k: Sequence[float]) -> np.ndarray:
    """pmf of a sum of independent Bernoulli(p_k), by sequential convolution.

    All-`Fraction` input is convolved in rational arithmetic and returns a
    list of Fractions.
    """
    p_k = list(p_k)
    if len(p_k) > EXACT_MAX_K:
        raise ExactModeLimitError(f"K={len(p_k)} exceeds {EXACT_MAX_K}; use Monte Carlo")
    if any(not 0 <= p <= 1 for p in p_k):
        raise ValueError("probabilities must lie in [0, 1]")
    if p_k and all(isinstance(p, Fraction) for p in p_k):
        exact = [Fraction(1)]
        for p in p_k:
            exact = [a * (1 - p) + b * p for a, b in zip(exact + [Fraction(0)], [Fraction(0)] + exact)]
        return exact
    pmf = np.array([1.0])
    for p in p_k:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] += pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def upper_tail(pmf: np.ndarray, x: int) -> float:
    """P(X >= x)."""
    return float(np.sum(pmf[max(x, 0):])) if x < pmf.size else 0.0


def minority_probability(
    x: int,
    p_k: Sequence[float],
    trials: int = 100_000,
    seed: int = 0,
    *,
    method: str = "mc",
    chunk: int = 10_000,
) -> float:
    """One minus the chance of landing in the minority at least x times at random.

    ``method="mc"`` simulates independent monthly Bernoulli(p_k) draws in
    chunks seeded by ``SeedSequence([seed, chunk_index])``; ``"exact"`` uses
    the convolution pmf.
    """
    if method == "exact":
        return 1.0 - upper_tail(exact_poisson_binomial(p_k), x)
    if method != "mc":
        raise ValueError("method must be 'mc' or 'exact'")
    if trials < 10_000:
        raise ValueError("trials must be at least 1e4")
    p = np.asarray(p_k, dtype=np.float64)
    hits = 0
    for c, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        counts = (rng.random((n, p.size)) < p).sum(axis=1)
        hits += int(np.sum(counts >= x))
    return 1.0 - hits / trials


def minority_report(counts: Sequence[MinorityCount], trials: int = 100_000, seed: int = 0, method: str = "mc") -> list[MinorityRow]:
    rows = []
    for i, mc in enumerate(counts):
        prob = minority_probability(mc.x, mc.p_k, trials, seed + i, method=method)
        rows.append(MinorityRow(mc.code, mc.x, mc.K_active, mc.p_k, prob, mc.track))
    return rows
