"""Directed K-nearest-neighbor interaction graphs.

Units are integers 0..n-1.  An interaction measure d(i, j) >= 0 scores how
strongly unit i is tied to unit j (smaller = stronger); it may be asymmetric
and need not be measured for every ordered pair.  Each unit's neighborhood is
the K measured partners with the smallest d(i, .), ties broken by ascending
unit index so construction is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import PreconditionError

MeasureMap = Mapping[tuple[int, int], float]


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Immutable KNN interaction structure.

    Attributes:
        n: number of units.
        k: neighborhood size requested at construction.
        dist: dense (n, n) measure matrix; +inf marks unmeasured pairs and
            the diagonal.
        knn_out: per unit, its neighbors ordered by ascending measure
            (index tie-break).  Rows of under-connected units are shorter
            than ``k``.
        adjacency: (n, n) int8 matrix, ``adjacency[i, j] == 1`` iff j is one
            of i's nearest neighbors.
        undirected_edges: unordered pairs {i, j} present in either direction.
        under_connected: units with fewer than ``k`` measured partners; their
            rows use all available partners instead of being padded.
        unit_labels: optional external ids (e.g. from an edge file), parallel
            to internal indices.
    """

    n: int
    k: int
    dist: np.ndarray
    knn_out: tuple[tuple[int, ...], ...]
    adjacency: np.ndarray
    undirected_edges: frozenset[tuple[int, int]]
    under_connected: frozenset[int]
    undirected_adj: tuple[tuple[int, ...], ...] = field(repr=False)
    unit_labels: tuple[int, ...] | None = None

    def measure(self, i: int, j: int) -> float:
        """d(i, j), or +inf when the pair was not measured."""
        self._check_unit(i)
        self._check_unit(j)
        return float(self.dist[i, j])

    @property
    def measures(self) -> dict[tuple[int, int], float]:
        """All measured ordered pairs as a map (materialized on demand)."""
        ii, jj = np.nonzero(np.isfinite(self.dist))
        return {(int(a), int(b)): float(self.dist[a, b]) for a, b in zip(ii, jj)}

    def out_degree(self, i: int) -> int:
        return len(self.knn_out[i])

    def _check_unit(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise PreconditionError(f"unit index {i} outside 0..{self.n - 1}")

    def label_of(self, i: int) -> int:
        return self.unit_labels[i] if self.unit_labels is not None else i


def build_knn_graph(
    measures: MeasureMap | np.ndarray,
    n: int,
    k: int,
    unit_labels: tuple[int, ...] | None = None,
) -> InteractionGraph:
    """Construct the directed KNN graph from pairwise interaction measures.

    ``measures`` is either a map (i, j) -> d(i, j) over measured ordered
    pairs, or a dense (n, n) array in which +inf / NaN entries mean
    "not measured" (the diagonal is ignored).  Each unit's neighbor list
    holds the k measured partners with the smallest measure; units with
    fewer than k measured partners keep all their partners and are flagged
    in ``under_connected``.

    Raises:
        PreconditionError: k < 1, k >= n, a negative measure, a self-pair,
            or an out-of-range unit index.
    """
    if n < 1:
        raise PreconditionError(f"need at least one unit, got n={n}")
    if k < 1:
        raise PreconditionError(f"neighborhood size must be >= 1, got k={k}")
    if k >= n:
        raise PreconditionError(f"k must be <= n-1, got k={k} with n={n}")

    dist = np.full((n, n), np.inf)
    if isinstance(measures, np.ndarray):
        if measures.shape != (n, n):
            raise PreconditionError(
                f"measure matrix shape {measures.shape} does not match n={n}"
            )
        dist[:, :] = measures
        np.fill_diagonal(dist, np.inf)
        dist[np.isnan(dist)] = np.inf
        if (dist[np.isfinite(dist)] < 0).any():
            raise PreconditionError("interaction measures must be nonnegative")
    else:
        for (i, j), d in measures.items():
            if not (0 <= i < n and 0 <= j < n):
                raise PreconditionError(f"unit pair ({i}, {j}) outside 0..{n - 1}")
            if i == j:
                raise PreconditionError(f"self-measure d({i}, {i}) is not allowed")
            if not np.isfinite(d) or d < 0:
                raise PreconditionError(
                    f"interaction measure d({i}, {j})={d} must be finite and >= 0"
                )
            dist[i, j] = d

    # Stable argsort orders ties by ascending unit index.
    order = np.argsort(dist, axis=1, kind="stable")
    row_sorted = np.take_along_axis(dist, order, axis=1)
    counts = np.minimum(np.isfinite(row_sorted).sum(axis=1), k)

    knn_out = tuple(
        tuple(int(j) for j in order[i, : counts[i]]) for i in range(n)
    )
    under = frozenset(int(i) for i in np.nonzero(counts < k)[0])

    adjacency = np.zeros((n, n), dtype=np.int8)
    for i, nbrs in enumerate(knn_out):
        adjacency[i, list(nbrs)] = 1

    sym = (adjacency | adjacency.T).astype(bool)
    undirected_adj = tuple(
        tuple(int(j) for j in np.nonzero(sym[i])[0]) for i in range(n)
    )
    edges = frozenset(
        (i, j) for i in range(n) for j in undirected_adj[i] if i < j
    )

    dist.setflags(write=False)
    adjacency.setflags(write=False)
    return InteractionGraph(
        n=n,
        k=k,
        dist=dist,
        knn_out=knn_out,
        adjacency=adjacency,
        undirected_edges=edges,
        under_connected=under,
        undirected_adj=undirected_adj,
        unit_labels=unit_labels,
    )


def neighbors_within(graph: InteractionGraph, i: int, hops: int) -> set[int]:
    """Units reachable from i via at most ``hops`` undirected edges (i excluded)."""
    graph._check_unit(i)
    if not 1 <= hops <= 3:
        raise PreconditionError(f"hops must be in 1..3, got {hops}")
    seen = {i}
    frontier = {i}
    for _ in range(hops):
        nxt: set[int] = set()
        for u in frontier:
            nxt.update(graph.undirected_adj[u])
        nxt -= seen
        seen |= nxt
        frontier = nxt
    seen.discard(i)
    return seen


def knn_rank(graph: InteractionGraph, i: int, ell: int) -> int:
    """The ell-th nearest neighbor of unit i (ell counts from 1)."""
    graph._check_unit(i)
    row = graph.knn_out[i]
    if not 1 <= ell <= graph.k or ell > len(row):
        raise PreconditionError(
            f"rank {ell} out of range for unit {i} with {len(row)} neighbors (k={graph.k})"
        )
    return row[ell - 1]
