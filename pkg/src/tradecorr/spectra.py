"""Correlation matrices, pairwise significance and the random-matrix eigenvalue null.

For N uncorrelated series of length T with Q = T/N >= 1 and variance sigma^2,
the limiting eigenvalue density of their correlation matrix is

    p(lam) = Q / (2 pi sigma^2) * sqrt((lmax - lam)(lam - lmin)) / lam
    lmin, lmax = sigma^2 (1 + 1/Q -/+ 2 sqrt(1/Q))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .errors import (
    DegenerateCorrelationError,
    InsufficientSampleError,
    NotSymmetricError,
    OutOfRegimeError,
)
from .strategy import StrategyMatrix

SIGMA_MODES = ("unit", "row_std")


@dataclass(frozen=True)
class CorrelationResult:
    codes: tuple[str, ...]
    rho: np.ndarray
    tail_prob: np.ndarray
    n_samples: int
    excluded_constant_rows: tuple[str, ...] = ()
    row_std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    month: str = ""

    @property
    def N(self) -> int:
        return len(self.codes)

    def index(self, code: str) -> int:
        return self.codes.index(code)


def correlate(M: StrategyMatrix | np.ndarray, codes: Sequence[str] | None = None) -> CorrelationResult:
    """Product-moment correlation between rows.

    Zero-variance rows are dropped (and reported) before the matrix is
    formed, so the result is always a proper correlation matrix.
    """
    if isinstance(M, StrategyMatrix):
        X = M.values.astype(np.float64)
        codes = M.institutions
        month = M.month
    else:
        X = np.asarray(M, dtype=np.float64)
        codes = tuple(codes) if codes is not None else tuple(str(i) for i in range(X.shape[0]))
        month = ""
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateCorrelationError("need at least 2 rows")
    std = X.std(axis=1, ddof=1) if X.shape[1] > 1 else np.zeros(X.shape[0])
    varying = std > 0
    if varying.sum() < 2:
        raise DegenerateCorrelationError("fewer than 2 rows with positive variance")
    Xv = X[varying]
    rho = _corr(Xv)
    n = X.shape[1]
    return CorrelationResult(
        codes=tuple(c for c, v in zip(codes, varying) if v),
        rho=rho,
        tail_prob=tail_probability(rho, n) if n >= 4 else np.full_like(rho, np.nan),
        n_samples=n,
        excluded_constant_rows=tuple(c for c, v in zip(codes, varying) if not v),
        row_std=std[varying],
        month=month,
    )


def _corr(X: np.ndarray) -> np.ndarray:
    Z = X - X.mean(axis=1, keepdims=True)
    Z /= np.sqrt((Z * Z).sum(axis=1, keepdims=True))
    rho = Z @ Z.T
    rho = np.clip((rho + rho.T) / 2, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


def tail_probability(rho, n: int):
    """Two-sided tail probability of a correlation coefficient.

    Uses t = rho sqrt((n-2)/(1-rho^2)) against Student-t with n-2 degrees of
    freedom. Works elementwise on arrays; |rho| = 1 gives 0.
    """
    if n < 4:
        raise InsufficientSampleError(f"tail probability needs n >= 4, got {n}")
    r = np.asarray(rho, dtype=np.float64)
    if np.any(np.abs(r) > 1 + 1e-12):
        raise ValueError("|rho| must not exceed 1")
    r = np.clip(r, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = np.abs(r) * np.sqrt((n - 2) / (1.0 - r * r))
    p = np.where(np.abs(r) >= 1.0, 0.0, 2.0 * stats.t.sf(t, n - 2))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if np.ndim(p) == 0 else p


def significant_share(result: CorrelationResult, alpha: float = 0.05) -> float:
    iu = np.triu_indices(result.N, k=1)
    return float(np.mean(result.tail_prob[iu] < alpha))


def eigenvalues_sym(A: np.ndarray, vectors: bool = False):
    """Eigenvalues of a real symmetric matrix, descending.

    Ties keep the solver's (ascending) order reversed, which is deterministic
    for a given input. With ``vectors=True`` returns ``(values, vectors)``
    with vectors as columns.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12):
        raise NotSymmetricError("matrix is not symmetric within 1e-12")
    if vectors:
        w, v = np.linalg.eigh(A)
        return w[::-1].copy(), v[:, ::-1].copy()
    return np.linalg.eigvalsh(A)[::-1].copy()


def mean_row_std(M: StrategyMatrix | np.ndarray) -> float:
    """Average per-row sample standard deviation of the raw series."""
    X = M.values if isinstance(M, StrategyMatrix) else np.asarray(M)
    X = X.astype(np.float64)
    std = X.std(axis=1, ddof=1)
    return float(std[std > 0].mean())


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray
    Q: float
    sigma: float
    sigma_row_std: float
    month: str = ""
    instrument: str = ""
    venue: str = ""

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        n = ev.size
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be descending")
        if abs(ev.sum() - n) > 1e-8 * n:
            raise ValueError(f"trace identity violated: sum={ev.sum()!r}, N={n}")
        if ev.min() < -1e-10:
            raise ValueError("correlation matrix has a negative eigenvalue")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def N(self) -> int:
        return self.eigenvalues.size


def eigen_report(corr: CorrelationResult, sigma_mode: str = "unit", *, instrument: str = "", venue: str = "") -> EigenReport:
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
    row_sigma = float(corr.row_std.mean()) if corr.row_std.size else 1.0
    return EigenReport(
        eigenvalues=eigenvalues_sym(corr.rho),
        Q=corr.n_samples / corr.N,
        sigma=1.0 if sigma_mode == "unit" else row_sigma,
        sigma_row_std=row_sigma,
        month=corr.month,
        instrument=instrument,
        venue=venue,
    )


# -- Marchenko-Pastur null ----------------------------------------------------

def mp_bounds(Q: float, sigma: float = 1.0) -> tuple[float, float]:
    if Q < 1:
        raise OutOfRegimeError(f"Q = {Q} < 1 is outside the supported regime")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    s2 = sigma * sigma
    r = np.sqrt(1.0 / Q)
    return s2 * (1 + 1 / Q - 2 * r), s2 * (1 + 1 / Q + 2 * r)


def mp_density(lam, Q: float, sigma: float = 1.0):
    lo, hi = mp_bounds(Q, sigma)
    lam = np.asarray(lam, dtype=np.float64)
    inside = (lam > lo) & (lam < hi)
    safe = np.where(inside, lam, 1.0)
    val = Q / (2 * np.pi * sigma**2) * np.sqrt(np.clip((hi - safe) * (safe - lo), 0, None)) / safe
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def mp_cdf(lam, Q: float, sigma: float = 1.0):
    """Cumulative distribution of the null density, by adaptive quadrature."""
    lo, hi = mp_bounds(Q, sigma)

    def one(x: float) -> float:
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        return integrate.quad(mp_density, lo, x, args=(Q, sigma), limit=200)[0]

    lam = np.asarray(lam, dtype=np.float64)
    out = np.array([one(x) for x in lam.ravel()]).reshape(lam.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MPNull:
    Q: float
    sigma: float
    lambda_min: float
    lambda_max: float

    @classmethod
    def from_params(cls, Q: float, sigma: float = 1.0) -> "MPNull":
        lo, hi = mp_bounds(Q, sigma)
        return cls(Q, sigma, lo, hi)

    def density(self, lam):
        return mp_density(lam, self.Q, self.sigma)

    def cdf(self, lam):
        return mp_cdf(lam, self.Q, self.sigma)


@dataclass(frozen=True)
class PooledSpectrum:
    edges: np.ndarray
    density: np.ndarray  # normalized histogram of pooled eigenvalues
    eigenvalues: np.ndarray
    null: MPNull  # built from the mean of the selected sigma mode
    null_row_std: MPNull  # same Q, mean mechanical row standard deviation
    n_above: int  # eigenvalues above null.lambda_max

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def ks_distance(self) -> float:
        return float(stats.kstest(self.eigenvalues, self.null.cdf).statistic)


def pooled_spectrum(reports: Sequence[EigenReport], edges: np.ndarray | None = None) -> PooledSpectrum:
    """Pool monthly spectra and compare them to the null at the mean (Q, sigma)."""
    if not reports:
        raise ValueError("need at least one EigenReport")
    ev = np.concatenate([r.eigenvalues for r in reports])
    q = float(np.mean([r.Q for r in reports]))
    null = MPNull.from_params(q, float(np.mean([r.sigma for r in reports])))
    null_rows = MPNull.from_params(q, float(np.mean([r.sigma_row_std for r in reports])))
    if edges is None:
        top = max(float(ev.max()), null.lambda_max) * 1.05
        edges = np.linspace(0.0, top, 101)
    hist, edges = np.histogram(ev, bins=edges, density=True)
    return PooledSpectrum(
        edges=np.asarray(edges, dtype=np.float64),
        density=hist,
        eigenvalues=np.sort(ev)[::-1],
        null=null,
        null_row_std=null_rows,
        n_above=int(np.sum(ev > null.lambda_max)),
    )
