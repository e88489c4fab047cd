"""Shared builders for test instances."""

import numpy as np

from knnim import (
    FocalPartition,
    StatisticInput,
    TreatmentVector,
    build_knn_graph,
    select_focals_random_half,
)


def make_partition(focal, n, method="manual"):
    focal = frozenset(focal)
    return FocalPartition(
        focal=focal, variant=frozenset(range(n)) - focal, method=method, seed=None
    )


def random_instance(seed, n=20, k=3, n_treated=None):
    """Fully measured asymmetric instance with random outcomes/treatment."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.1, 10.0, (n, n))
    np.fill_diagonal(d, np.inf)
    graph = build_knn_graph(d, n=n, k=k)
    w = np.zeros(n, dtype=np.int8)
    w[rng.permutation(n)[: (n_treated if n_treated is not None else n // 2)]] = 1
    y = rng.standard_normal(n)
    partition = select_focals_random_half(n, seed=seed + 1000)
    return StatisticInput(
        graph=graph,
        treatment=TreatmentVector(w),
        outcomes=y,
        partition=partition,
    )
