"""Focal-unit selection for conditional randomization tests.

Focal units keep their observed treatment across re-randomizations and
contribute their outcomes to the test statistic; everything else is a
variant unit whose treatment gets redrawn.  The two-net selector picks a
greedy maximal independent set in the two-hop undirected graph, so the
closed K-neighborhoods of any two focal units never overlap and no focal
outcome shares a treatment variable with another focal outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .graph import InteractionGraph

TWO_NET = "two_net"
RANDOM_HALF = "random_half"


@dataclass(frozen=True)
class FocalPartition:
    """A split of the units into focal and variant sets.

    ``trace`` records, for two-net selections, the exclusion set removed by
    each chosen focal unit in order; it allows replaying the construction.
    """

    focal: frozenset[int]
    variant: frozenset[int]
    method: str
    seed: int | None
    trace: tuple[tuple[int, frozenset[int]], ...] | None = None

    @property
    def n(self) -> int:
        return len(self.focal) + len(self.variant)

    @property
    def n_focal(self) -> int:
        return len(self.focal)

    def focal_indices(self) -> np.ndarray:
        return np.fromiter(sorted(self.focal), dtype=np.int64, count=len(self.focal))

    def variant_indices(self) -> np.ndarray:
        return np.fromiter(
            sorted(self.variant), dtype=np.int64, count=len(self.variant)
        )

    def focal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.focal_indices()] = True
        return mask


def select_focals_two_net(graph: InteractionGraph, seed: int) -> FocalPartition:
    """Select focal units by greedy two-hop exclusion on the undirected graph.

    Repeatedly draw a unit uniformly at random from the remaining candidates,
    mark it focal, and remove it together with every unit within two
    undirected hops.  Surviving candidates are therefore at undirected
    distance >= 3 from every earlier focal, which keeps the closed
    K-neighborhoods of the focal units pairwise disjoint, and every variant
    unit ends up within two hops of some focal unit.
    """
    rng = np.random.default_rng(seed)
    remaining = np.arange(graph.n)
    focal: list[int] = []
    trace: list[tuple[int, frozenset[int]]] = []

    while remaining.size:
        i = int(remaining[rng.integers(remaining.size)])
        focal.append(i)
        exclusion = set(graph.undirected_adj[i])
        second_hop: set[int] = set()
        for j in exclusion:
            second_hop.update(graph.undirected_adj[j])
        exclusion |= second_hop
        exclusion.discard(i)
        trace.append((i, frozenset(exclusion)))
        drop = exclusion | {i}
        remaining = remaining[~np.isin(remaining, list(drop))]

    focal_set = frozenset(focal)
    return FocalPartition(
        focal=focal_set,
        variant=frozenset(range(graph.n)) - focal_set,
        method=TWO_NET,
        seed=seed,
        trace=tuple(trace),
    )


def select_focals_random_half(n: int, seed: int) -> FocalPartition:
    """Mark a uniformly random floor(n/2)-subset of the units as focal."""
    if n < 2:
        raise PreconditionError(f"random-half selection needs n >= 2, got n={n}")
    rng = np.random.default_rng(seed)
    focal = frozenset(int(i) for i in rng.choice(n, size=n // 2, replace=False))
    return FocalPartition(
        focal=focal,
        variant=frozenset(range(n)) - focal,
        method=RANDOM_HALF,
        seed=seed,
    )
