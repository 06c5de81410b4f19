"""Row-shuffle bootstrap null for the largest eigenvalues of a monthly matrix.

Each replicate permutes every institution's row independently, which keeps
its counts of buy, sell and idle buckets (hence its mean and variance) but
destroys cross-sectional alignment. Replicate ``r`` of month ``m`` draws from
``SeedSequence([seed, m, r])`` so serial and pooled runs agree exactly.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .spectra import correlate, eigenvalues_sym
from .strategy import StrategyMatrix


def replicate_rng(seed: int, month_index: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, month_index, replicate]))


def _permute(values: np.ndarray, rng: np.random.Generator, block_length: int) -> np.ndarray:
    if block_length <= 1:
        return rng.permuted(values, axis=1)
    T = values.shape[1]
    starts = np.arange(0, T, block_length)
    out = np.empty_like(values)
    for i, row in enumerate(values):
        blocks = [row[s:s + block_length] for s in starts]
        order = rng.permutation(len(blocks))
        out[i] = np.concatenate([blocks[j] for j in order])
    return out


def shuffle_rows(M: StrategyMatrix, seed, block_length: int = 1) -> StrategyMatrix:
    """Independently permute each row (or its consecutive blocks when block_length > 1)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return M.with_values(_permute(np.asarray(M.values), rng, block_length))


@dataclass(frozen=True)
class BootstrapBand:
    month: str
    k: int
    draws: np.ndarray  # (B, k), each row descending
    empirical: np.ndarray  # observed top-k
    block_length: int = 1
    instrument: str = ""
    venue: str = ""

    @property
    def B(self) -> int:
        return self.draws.shape[0]

    @property
    def median(self) -> np.ndarray:
        return np.median(self.draws, axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.draws.std(axis=0, ddof=1)

    @property
    def upper(self) -> np.ndarray:
        return self.median + 2.0 * self.std

    @property
    def significant(self) -> np.ndarray:
        return self.empirical > self.upper


def _replicate_chunk(X: np.ndarray, k: int, seed: int, month_index: int, reps: range, block_length: int) -> np.ndarray:
    """Top-k eigenvalues for replicates ``reps`` of the standardized matrix X."""
    n, T = X.shape
    shuffled = np.empty((len(reps), n, T))
    for j, r in enumerate(reps):
        shuffled[j] = _permute(X, replicate_rng(seed, month_index, r), block_length)
    # rows keep mean 0 and unit norm under permutation, so Z Z^T is the correlation matrix
    C = np.einsum("bit,bjt->bij", shuffled, shuffled)
    C = (C + C.transpose(0, 2, 1)) / 2
    idx = np.arange(n)
    C[:, idx, idx] = 1.0
    w = np.linalg.eigvalsh(C)
    return w[:, ::-1][:, :k]


def _standardize(values: np.ndarray) -> np.ndarray:
    X = values.astype(np.float64)
    X -= X.mean(axis=1, keepdims=True)
    X /= np.sqrt((X * X).sum(axis=1, keepdims=True))
    return X


def bootstrap_band(
    M: StrategyMatrix,
    B: int = 1000,
    k: int = 2,
    seed: int = 0,
    *,
    month_index: int = 0,
    block_length: int = 1,
    n_jobs: int = 1,
    chunk: int = 250,
) -> BootstrapBand:
    """Null distribution of the k largest eigenvalues under row shuffling."""
    if B < 100:
        raise ValueError("B must be at least 100")
    if k < 1:
        raise ValueError("k must be at least 1")
    corr = correlate(M)
    keep = [M.institutions.index(c) for c in corr.codes]
    k = min(k, corr.N)
    empirical = eigenvalues_sym(corr.rho)[:k]
    # constant rows were dropped by correlate(); shuffling cannot make them vary
    X = _standardize(np.asarray(M.values)[keep])
    chunks = [range(s, min(s + chunk, B)) for s in range(0, B, chunk)]
    args = [(X, k, seed, month_index, c, block_length) for c in chunks]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_replicate_chunk, *zip(*args)))
    else:
        parts = [_replicate_chunk(*a) for a in args]
    draws = np.vstack(parts)
    assert draws.shape == (B, k)
    return BootstrapBand(M.month, k, draws, empirical, block_length, M.instrument, M.venue.value)
