"""Agglomerative clustering on the correlation metric d = sqrt(2 (1 - rho)).

Node ids follow the usual convention: leaves are 0..N-1 and the cluster
created by merge ``i`` is ``N + i``. Within each merge, ``left`` is the child
holding the smaller leaf index, so an in-order walk gives the display order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TrivialDendrogramError

LINKAGES = ("complete", "single")


def distance_matrix(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    rho = (rho + rho.T) / 2
    D = np.sqrt(np.clip(2.0 * (1.0 - rho), 0.0, 4.0))
    np.fill_diagonal(D, 0.0)
    return D


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    leaves: tuple[str, ...]
    merges: tuple[Merge, ...]
    linkage: str = "complete"

    def __post_init__(self):
        n = len(self.leaves)
        if len(self.merges) != n - 1:
            raise ValueError(f"{n} leaves need {n - 1} merges, got {len(self.merges)}")
        h = [m.height for m in self.merges]
        if any(b < a for a, b in zip(h, h[1:])):
            raise ValueError("merge heights must be non-decreasing")

    @property
    def N(self) -> int:
        return len(self.leaves)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def members(self, node: int) -> list[int]:
        """Leaf indices under ``node`` in display order."""
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < self.N:
                out.append(x)
            else:
                m = self.merges[x - self.N]
                stack.append(m.right)
                stack.append(m.left)
        return out

    def to_linkage_matrix(self) -> np.ndarray:
        """scipy.cluster.hierarchy-compatible (N-1, 4) array."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=np.float64)


def complete_linkage(D: np.ndarray, leaves: Sequence[str] | None = None, linkage: str = "complete") -> Dendrogram:
    """Agglomerate by repeatedly merging the closest pair of clusters.

    Cluster distance is the maximum (``complete``) or minimum (``single``)
    member distance. Ties go to the pair whose smallest leaf indices are
    lexicographically first.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if n < 2:
        raise TrivialDendrogramError("need at least 2 leaves")
    if D.shape != (n, n) or not np.array_equal(D, D.T) or np.any(np.diag(D) != 0) or np.any(D < 0):
        raise ValueError("D must be square, symmetric, non-negative with zero diagonal")
    leaves = tuple(leaves) if leaves is not None else tuple(str(i) for i in range(n))
    combine = np.maximum if linkage == "complete" else np.minimum

    # slot s holds the cluster whose smallest leaf is s
    work = D.copy()
    alive = np.ones(n, dtype=bool)
    node = list(range(n))
    size = [1] * n
    merges = []
    for step in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], work, np.inf)
        masked[np.tril_indices(n)] = np.inf
        flat = int(np.argmin(masked))  # row-major: first hit is the lexicographic tie-break
        i, j = divmod(flat, n)
        h = float(masked[i, j])
        merges.append(Merge(node[i], node[j], h, size[i] + size[j]))
        work[i, :] = combine(work[i, :], work[j, :])
        work[:, i] = work[i, :]
        work[i, i] = 0.0
        alive[j] = False
        node[i] = n + step
        size[i] += size[j]
    return Dendrogram(leaves, tuple(merges), linkage)


def leaf_order(dend: Dendrogram) -> list[int]:
    return dend.members(2 * dend.N - 2)


@dataclass(frozen=True)
class ClusterCut:
    height: float | None
    clusters: tuple[tuple[str, ...], ...]
    majority_label: int | None = None
    minority_label: int | None = None

    def label_of(self) -> dict[str, int]:
        return {code: c for c, members in enumerate(self.clusters) for code in members}

    @property
    def minority(self) -> tuple[str, ...]:
        return () if self.minority_label is None else self.clusters[self.minority_label]

    @property
    def majority(self) -> tuple[str, ...]:
        return () if self.majority_label is None else self.clusters[self.majority_label]


def _components(dend: Dendrogram, n_merges: int) -> tuple[tuple[str, ...], ...]:
    parent = list(range(2 * dend.N - 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, m in enumerate(dend.merges[:n_merges]):
        parent[find(m.left)] = dend.N + s
        parent[find(m.right)] = dend.N + s
    groups: dict[int, list[int]] = {}
    for leaf in range(dend.N):
        groups.setdefault(find(leaf), []).append(leaf)
    # clusters listed by their smallest leaf index
    ordered = sorted(groups.values(), key=min)
    return tuple(tuple(dend.leaves[i] for i in g) for g in ordered)


def _label(clusters: tuple[tuple[str, ...], ...]) -> tuple[int | None, int | None]:
    if len(clusters) != 2:
        return None, None
    a, b = clusters
    if len(a) != len(b):
        return (0, 1) if len(a) > len(b) else (1, 0)
    return (0, 1) if min(a) < min(b) else (1, 0)


def cut(dend: Dendrogram, height: float) -> ClusterCut:
    """Clusters joined by merges strictly below ``height``."""
    if height < 0:
        raise ValueError("height must be non-negative")
    n_merges = int(np.sum(dend.heights < height))
    clusters = _components(dend, n_merges)
    maj, mino = _label(clusters)
    return ClusterCut(height, clusters, maj, mino)


def cut_k(dend: Dendrogram, k: int) -> ClusterCut:
    """Undo the last k-1 merges. At k=2 the smaller cluster is the minority."""
    if not 1 <= k <= dend.N:
        raise ValueError(f"k must be in [1, {dend.N}]")
    clusters = _components(dend, dend.N - k)
    maj, mino = _label(clusters)
    return ClusterCut(None, clusters, maj, mino)


def reorder(rho: np.ndarray, order: Sequence[int]) -> np.ndarray:
    order = np.asarray(order)
    return np.asarray(rho)[np.ix_(order, order)]


def rand_index(a: Sequence, b: Sequence) -> float:
    """Fraction of item pairs on which two labelings agree (same vs different)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    n = a.size
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    same_a = (a[:, None] == a[None, :])[iu]
    same_b = (b[:, None] == b[None, :])[iu]
    return float(np.mean(same_a == same_b))
