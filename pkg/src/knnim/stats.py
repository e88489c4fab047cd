"""Interference test statistics computed on the focal units.

Each statistic maps (graph, focal partition, treatment vector, outcomes) to
a scalar whose magnitude grows when variant treatments leak into focal
outcomes.  Degenerate inputs (zero variance, an empty comparison group)
yield ``defined=False`` with value 0 instead of raising, so randomization
loops never abort mid-stream; callers exclude undefined draws from p-value
denominators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .focal import FocalPartition
from .graph import InteractionGraph

STATISTIC_NAMES = ("pearson", "elc", "score", "htn", "knn")


@dataclass(frozen=True)
class TreatmentVector:
    """Binary treatment assignment over all units."""

    w: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.w, dtype=np.int8)
        if arr.ndim != 1:
            raise PreconditionError("treatment vector must be one-dimensional")
        if not np.isin(arr, (0, 1)).all():
            bad = int(np.nonzero(~np.isin(arr, (0, 1)))[0][0])
            raise PreconditionError(
                f"treatment entries must be 0 or 1; unit {bad} has {self.w[bad]}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "w", arr)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def n_treated(self) -> int:
        return int(self.w.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated


@dataclass(frozen=True)
class StatisticInput:
    """Everything a statistic needs, indexed over the same n units.

    ``partition`` may be None right after file ingestion; it must be set
    (e.g. via :func:`with_partition`) before any statistic is evaluated.
    """

    graph: InteractionGraph
    treatment: TreatmentVector
    outcomes: np.ndarray
    partition: FocalPartition | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.outcomes, dtype=float)
        if y.shape != (self.graph.n,):
            raise PreconditionError(
                f"outcomes shape {y.shape} does not match n={self.graph.n}"
            )
        if not np.isfinite(y).all():
            raise PreconditionError("outcomes must be finite")
        if self.treatment.n != self.graph.n:
            raise PreconditionError(
                f"treatment length {self.treatment.n} does not match n={self.graph.n}"
            )
        if self.partition is not None and self.partition.n != self.graph.n:
            raise PreconditionError(
                f"partition covers {self.partition.n} units, graph has {self.graph.n}"
            )
        y.setflags(write=False)
        object.__setattr__(self, "outcomes", y)

    def require_partition(self) -> FocalPartition:
        if self.partition is None:
            raise PreconditionError(
                "no focal partition set; select focal units before computing statistics"
            )
        return self.partition


def with_partition(inp: StatisticInput, partition: FocalPartition) -> StatisticInput:
    return StatisticInput(
        graph=inp.graph,
        treatment=inp.treatment,
        outcomes=inp.outcomes,
        partition=partition,
    )


@dataclass(frozen=True)
class StatisticValue:
    """A statistic evaluation; ``value`` is 0 by convention when undefined.

    ``per_rank`` carries the per-neighbor-rank components of the KNN
    contrast statistic; ``empty_cells`` lists (rank, own_treatment,
    neighbor_status) cells that had no focal units and contributed 0.
    """

    name: str
    value: float
    defined: bool
    per_rank: tuple[float, ...] | None = None
    empty_cells: tuple[tuple[int, int, int], ...] = ()


def _undefined(name: str, **kw) -> StatisticValue:
    return StatisticValue(name=name, value=0.0, defined=False, **kw)


def _focal_setup(inp: StatisticInput, minimum: int) -> tuple[np.ndarray, np.ndarray]:
    part = inp.require_partition()
    fidx = part.focal_indices()
    if fidx.size < minimum:
        raise PreconditionError(
            f"need at least {minimum} focal units, got {fidx.size}"
        )
    return fidx, part.variant_indices()


def stat_pearson(inp: StatisticInput) -> StatisticValue:
    """Correlation between focal outcomes and distance to the nearest
    treated variant unit.

    Undefined when either vector is constant or some focal unit has no
    measured treated variant partner.
    """
    fidx, vidx = _focal_setup(inp, minimum=2)
    w = inp.treatment.w
    treated_variants = vidx[w[vidx] == 1]
    if treated_variants.size == 0:
        return _undefined("pearson")
    d_nearest = inp.graph.dist[np.ix_(fidx, treated_variants)].min(axis=1)
    if not np.isfinite(d_nearest).all():
        return _undefined("pearson")
    y_f = inp.outcomes[fidx]
    if np.ptp(y_f) == 0 or np.ptp(d_nearest) == 0:
        return _undefined("pearson")
    yc = y_f - y_f.mean()
    dc = d_nearest - d_nearest.mean()
    value = float(yc.dot(dc) / np.sqrt(yc.dot(yc) * dc.dot(dc)))
    return StatisticValue("pearson", value, True)


def _focal_variant_edges(
    inp: StatisticInput, fidx: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges focal -> variant as (focal outcome index, variant unit)."""
    focal_mask = np.zeros(inp.graph.n, dtype=bool)
    focal_mask[fidx] = True
    src: list[int] = []
    dst: list[int] = []
    for pos, i in enumerate(fidx):
        for j in inp.graph.knn_out[int(i)]:
            if not focal_mask[j]:
                src.append(pos)
                dst.append(j)
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def stat_elc(inp: StatisticInput) -> StatisticValue:
    """Edge-level contrast: mean focal outcome over focal->variant edges with
    a treated endpoint minus the same mean over control endpoints.

    A focal unit appears once per qualifying edge.  Undefined when either
    edge set is empty.
    """
    fidx, _ = _focal_setup(inp, minimum=1)
    src, dst = _focal_variant_edges(inp, fidx)
    if src.size == 0:
        return _undefined("elc")
    w_edge = inp.treatment.w[dst]
    n_t = int(w_edge.sum())
    n_c = w_edge.size - n_t
    if n_t == 0 or n_c == 0:
        return _undefined("elc")
    y_edge = inp.outcomes[fidx][src]
    value = float(y_edge[w_edge == 1].mean() - y_edge[w_edge == 0].mean())
    return StatisticValue("elc", value, True)


def stat_score(inp: StatisticInput) -> StatisticValue:
    """Covariance between two-group-model residuals of focal outcomes and
    each focal unit's fraction of treated neighbors.

    Residuals subtract the control-focal mean and the focal treated-control
    gap times own treatment.  The covariance (1/(m-1) normalization) runs
    over focal units with at least one neighbor.  Undefined when the focal
    set lacks a treatment arm or fewer than two focal units qualify.
    """
    fidx, _ = _focal_setup(inp, minimum=1)
    w = inp.treatment.w
    y_f = inp.outcomes[fidx]
    w_f = w[fidx]
    if w_f.sum() == 0 or w_f.sum() == w_f.size:
        return _undefined("score")
    ybar1 = y_f[w_f == 1].mean()
    ybar0 = y_f[w_f == 0].mean()
    resid = y_f - ybar0 - (ybar1 - ybar0) * w_f

    deg = np.array([len(inp.graph.knn_out[int(i)]) for i in fidx])
    qual = deg > 0
    if qual.sum() < 2:
        return _undefined("score")
    frac = np.array(
        [
            w[list(inp.graph.knn_out[int(i)])].mean()
            for i in fidx[qual]
        ]
    )
    r_q = resid[qual]
    m = r_q.size
    value = float((r_q - r_q.mean()).dot(frac - frac.mean()) / (m - 1))
    return StatisticValue("score", value, True)


def stat_htn(inp: StatisticInput) -> StatisticValue:
    """Normalized association between focal outcomes and the indicator of
    having at least one treated variant neighbor.

    Undefined when either the focal outcomes or the indicators are constant.
    """
    fidx, _ = _focal_setup(inp, minimum=2)
    w = inp.treatment.w
    focal_mask = np.zeros(inp.graph.n, dtype=bool)
    focal_mask[fidx] = True
    has_treated = np.array(
        [
            any(w[j] == 1 and not focal_mask[j] for j in inp.graph.knn_out[int(i)])
            for i in fidx
        ],
        dtype=float,
    )
    y_f = inp.outcomes[fidx]
    s_y = y_f.std(ddof=1)
    s_e = has_treated.std(ddof=1)
    if s_y == 0 or s_e == 0:
        return _undefined("htn")
    m = fidx.size
    value = float((y_f - y_f.mean()).dot(has_treated) / m / (s_y * s_e))
    return StatisticValue("htn", value, True)


def stat_knn(inp: StatisticInput) -> StatisticValue:
    """Neighbor-rank contrast: for each rank ell, the mean focal outcome gap
    between units whose ell-th nearest neighbor is treated vs. control,
    averaged over own-treatment groups weighted by group size, then summed
    over ranks.

    Cells with no qualifying focal units contribute 0 and are recorded in
    ``empty_cells``.
    """
    part = inp.require_partition()
    fidx = part.focal_indices()
    if fidx.size == 0:
        raise PreconditionError("focal set is empty")
    w = inp.treatment.w
    y_f = inp.outcomes[fidx]
    w_f = w[fidx]
    m = fidx.size
    n_ft = int(w_f.sum())
    n_fc = m - n_ft

    per_rank: list[float] = []
    empty: list[tuple[int, int, int]] = []
    for ell in range(1, inp.graph.k + 1):
        has_rank = np.array(
            [len(inp.graph.knn_out[int(i)]) >= ell for i in fidx], dtype=bool
        )
        nbr_w = np.zeros(m, dtype=np.int8)
        for pos in np.nonzero(has_rank)[0]:
            nbr_w[pos] = w[inp.graph.knn_out[int(fidx[pos])][ell - 1]]
        t_ell = 0.0
        for own in (0, 1):
            group_weight = (n_ft if own == 1 else n_fc) / m
            diff = 0.0
            for status in (1, 0):
                cell = has_rank & (w_f == own) & (nbr_w == status)
                if cell.any():
                    mean = float(y_f[cell].mean())
                else:
                    mean = 0.0
                    empty.append((ell, own, status))
                diff += mean if status == 1 else -mean
            t_ell += group_weight * diff
        per_rank.append(t_ell)

    return StatisticValue(
        "knn",
        float(sum(per_rank)),
        True,
        per_rank=tuple(per_rank),
        empty_cells=tuple(empty),
    )


_DISPATCH = {
    "pearson": stat_pearson,
    "elc": stat_elc,
    "score": stat_score,
    "htn": stat_htn,
    "knn": stat_knn,
}


def compute_statistic(name: str, inp: StatisticInput) -> StatisticValue:
    if name not in _DISPATCH:
        raise PreconditionError(
            f"unknown statistic {name!r}; expected one of {STATISTIC_NAMES}"
        )
    return _DISPATCH[name](inp)
