"""Distance matrices, neighborhood systems and pairwise clique sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray
    dim_used: int
    normalized: bool = False

    @property
    def size(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class NeighborhoodSystem:
    """Per-point neighbor index arrays.

    ``mode`` is ``"knn"`` or ``"rball"`` and ``param`` holds k or r.
    """

    neighbors: tuple[np.ndarray, ...]
    mode: str
    param: float
    source_layer: int = 0

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def counts(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors], dtype=np.int64)

    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``i`` and columns ``j`` for every ``j in neighbors[i]``."""
        counts = self.counts()
        rows = np.repeat(np.arange(self.size), counts)
        cols = np.concatenate(self.neighbors) if self.size else np.empty(0, np.int64)
        return rows, cols.astype(np.int64)

    def cliques(self) -> "CliqueSet":
        return clique_union(self, self)


@dataclass(frozen=True)
class CliqueSet:
    """Unordered pairs stored as two index arrays with ``i < j``, sorted."""

    i: np.ndarray
    j: np.ndarray
    size: int

    def __len__(self) -> int:
        return len(self.i)

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.i.tolist(), self.j.tolist()))

    def mask(self) -> np.ndarray:
        """Symmetric boolean M x M membership matrix."""
        m = np.zeros((self.size, self.size), dtype=bool)
        m[self.i, self.j] = True
        m[self.j, self.i] = True
        return m


def pairwise_distances(X, normalize: bool = False) -> DistanceMatrix:
    """Euclidean distance matrix, divided by sqrt(n_features) when normalized."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("pairwise_distances: input contains non-finite values")
    n = X.shape[1]
    d = squareform(pdist(X)) if len(X) > 1 else np.zeros((len(X), len(X)))
    if normalize and n > 0:
        d /= np.sqrt(n)
    return DistanceMatrix(d=d, dim_used=n, normalized=normalize)


def _as_matrix(D) -> np.ndarray:
    return D.d if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)


def knn_neighborhood(D, k: int, source_layer: int = 0) -> NeighborhoodSystem:
    d = _as_matrix(D)
    m = d.shape[0]
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}], got {k}")
    d = d.copy()
    np.fill_diagonal(d, np.inf)
    # stable sort keeps ascending index order among ties
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return NeighborhoodSystem(tuple(order[i].copy() for i in range(m)), "knn", k, source_layer)


def rball_neighborhood(D, r: float, source_layer: int = 0) -> NeighborhoodSystem:
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    d = _as_matrix(D)
    inside = d < r
    np.fill_diagonal(inside, False)
    return NeighborhoodSystem(
        tuple(np.flatnonzero(row) for row in inside), "rball", float(r), source_layer
    )


def clique_union(A: NeighborhoodSystem, B: NeighborhoodSystem) -> CliqueSet:
    if A.size != B.size:
        raise ValueError(f"neighborhood systems differ in size: {A.size} vs {B.size}")
    m = A.size
    ra, ca = A.directed_pairs()
    rb, cb = B.directed_pairs()
    rows = np.concatenate([ra, rb])
    cols = np.concatenate([ca, cb])
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    keys = np.unique(lo * max(m, 1) + hi)
    return CliqueSet(i=keys // max(m, 1), j=keys % max(m, 1), size=m)


def neighborhood_for(D, mode: str, param: float, source_layer: int = 0) -> NeighborhoodSystem:
    if mode == "knn":
        return knn_neighborhood(D, int(param), source_layer)
    if mode == "rball":
        return rball_neighborhood(D, float(param), source_layer)
    raise ValueError(f"unknown neighborhood mode {mode!r}")
