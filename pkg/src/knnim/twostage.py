"""Two-stage experimental-design test for interference.

Units are grouped into small clusters of strongly interacting units.  Half
the clusters form a cluster-randomized arm (treatment assigned to whole
clusters); the units of the remaining clusters form a completely randomized
arm.  Under no interference both arms estimate the same direct effect, so a
large standardized gap between the two difference-in-means estimates is
evidence of spillover.

The pooled standard error treats the completely randomized arm at the unit
level and the cluster-randomized arm at the cluster-mean level; clusters are
the units of randomization in that arm, and cluster means absorb the
within-cluster outcome correlation that unit-level variances would miss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as spstats

from .errors import PreconditionError
from .graph import InteractionGraph


def conservative_threshold(alpha: float) -> float:
    """Distribution-free rejection cutoff: alpha**(-1/2)."""
    return alpha**-0.5


def asymptotic_threshold(alpha: float) -> float:
    """Normal-approximation rejection cutoff: z_{1 - alpha/2}."""
    return float(spstats.norm.ppf(1 - alpha / 2))


@dataclass(frozen=True)
class Clustering:
    """Fixed-size grouping of units by interaction strength."""

    labels: np.ndarray
    target_size: int
    n_clusters: int
    has_remainder: bool

    def members(self, cluster: int) -> np.ndarray:
        return np.nonzero(self.labels == cluster)[0]

    def member_lists(self) -> list[np.ndarray]:
        return [self.members(c) for c in range(self.n_clusters)]


def cluster_units(
    graph: InteractionGraph, size: int = 4, seed: int | None = None
) -> Clustering:
    """Greedy fixed-size clustering by interaction measure.

    Repeatedly takes the unclustered unit with the smallest index and
    attaches its size-1 nearest unclustered units by d(i, .), ties broken by
    ascending index.  Deterministic given the graph; ``seed`` is accepted
    for interface symmetry with the randomized stages but unused.  When n is
    not divisible by ``size`` the leftover units form one smaller cluster,
    flagged via ``has_remainder``.
    """
    n = graph.n
    if n < size:
        raise PreconditionError(f"cannot form clusters of {size} from {n} units")
    labels = np.full(n, -1, dtype=np.int64)
    unassigned = np.ones(n, dtype=bool)
    cid = 0
    while unassigned.any():
        i = int(np.nonzero(unassigned)[0][0])
        labels[i] = cid
        unassigned[i] = False
        pool = np.nonzero(unassigned)[0]
        if pool.size:
            take = min(size - 1, pool.size)
            d = graph.dist[i, pool]
            order = np.lexsort((pool, d))
            chosen = pool[order[:take]]
            labels[chosen] = cid
            unassigned[chosen] = False
        cid += 1
    has_remainder = n % size != 0
    labels.setflags(write=False)
    return Clustering(
        labels=labels, target_size=size, n_clusters=cid, has_remainder=has_remainder
    )


@dataclass(frozen=True)
class TwoStageResult:
    """Direct-effect estimates from both arms and the standardized gap."""

    tau_cr: float
    tau_cbr: float
    sigma_p: float
    t_exp: float

    def reject_conservative(self, alpha: float = 0.05) -> bool:
        return self.t_exp >= conservative_threshold(alpha)

    def reject_asymptotic(self, alpha: float = 0.05) -> bool:
        return self.t_exp >= asymptotic_threshold(alpha)

    def to_dict(self, alpha: float = 0.05) -> dict:
        return {
            "tau_cr": self.tau_cr,
            "tau_cbr": self.tau_cbr,
            "sigma_p": self.sigma_p,
            "t_exp": self.t_exp,
            "alpha": alpha,
            "conservative_threshold": conservative_threshold(alpha),
            "asymptotic_threshold": asymptotic_threshold(alpha),
            "reject_conservative": self.reject_conservative(alpha),
            "reject_asymptotic": self.reject_asymptotic(alpha),
        }


def _difference_in_means(values: np.ndarray, treated: np.ndarray) -> tuple[float, float]:
    """Difference in means and its variance over one arm's sampling units."""
    y_t = values[treated == 1]
    y_c = values[treated == 0]
    if y_t.size == 0 or y_c.size == 0:
        raise PreconditionError("a treatment group is empty")
    if y_t.size < 2 or y_c.size < 2:
        raise PreconditionError(
            "need at least two sampling units per treatment group for a variance"
        )
    tau = float(y_t.mean() - y_c.mean())
    var = float(y_t.var(ddof=1) / y_t.size + y_c.var(ddof=1) / y_c.size)
    return tau, var


def _one_assignment(
    rng: np.random.Generator,
    members: Sequence[np.ndarray],
    n: int,
    potential_outcomes: Callable[[np.ndarray], np.ndarray],
) -> TwoStageResult:
    n_clusters = len(members)
    order = rng.permutation(n_clusters)
    cbr = order[: n_clusters // 2]
    cr = order[n_clusters // 2 :]
    if cbr.size < 2 or cr.size < 1:
        raise PreconditionError(
            f"{n_clusters} clusters are too few to split into two arms"
        )

    w = np.zeros(n, dtype=np.int8)
    treated_clusters = rng.permutation(cbr)[: cbr.size // 2]
    for c in treated_clusters:
        w[members[c]] = 1
    cr_units = np.concatenate([members[c] for c in cr])
    w[rng.permutation(cr_units)[: cr_units.size // 2]] = 1

    y = potential_outcomes(w)

    tau_cr, var_cr = _difference_in_means(y[cr_units], w[cr_units])

    cluster_means = np.array([y[members[c]].mean() for c in cbr])
    cluster_treated = np.array([w[members[c][0]] for c in cbr], dtype=np.int8)
    tau_cbr, var_cbr = _difference_in_means(cluster_means, cluster_treated)

    sigma_p = float(np.sqrt(var_cr + var_cbr))
    t_exp = abs(tau_cr - tau_cbr) / sigma_p if sigma_p > 0 else 0.0
    return TwoStageResult(tau_cr=tau_cr, tau_cbr=tau_cbr, sigma_p=sigma_p, t_exp=t_exp)


def run_two_stage(
    graph: InteractionGraph,
    potential_outcomes: Callable[[np.ndarray], np.ndarray],
    clustering: Clustering,
    seed,
    alpha: float = 0.05,
) -> TwoStageResult:
    """One two-stage experiment on simulated potential outcomes.

    Draws the arm split and both randomizations from ``seed``, evaluates the
    outcome function at the assembled assignment, and returns the estimates
    with the standardized gap; rejection decisions at ``alpha`` come from
    the result's methods.
    """
    del alpha  # decisions are taken on the result; kept for interface clarity
    if clustering.labels.shape[0] != graph.n:
        raise PreconditionError("clustering does not cover the graph's units")
    rng = np.random.default_rng(seed)
    return _one_assignment(rng, clustering.member_lists(), graph.n, potential_outcomes)


def observed_two_stage(
    outcomes: np.ndarray,
    treatment: np.ndarray,
    clustering: Clustering,
    seed,
    alpha: float = 0.05,
) -> tuple[TwoStageResult, int]:
    """Two-stage statistic computed once on a realized assignment.

    The arm split is drawn from ``seed``; estimates use the treatments as
    observed.  Clusters in the cluster arm count as treated (control) only
    when every member is treated (control); mixed clusters are dropped and
    their count returned alongside the result.
    """
    del alpha
    y = np.asarray(outcomes, dtype=float)
    w = np.asarray(treatment)
    n = y.shape[0]
    if clustering.labels.shape[0] != n or w.shape[0] != n:
        raise PreconditionError("outcomes, treatment and clustering sizes differ")
    rng = np.random.default_rng(seed)
    members = clustering.member_lists()
    order = rng.permutation(clustering.n_clusters)
    cbr = order[: clustering.n_clusters // 2]
    cr = order[clustering.n_clusters // 2 :]

    cr_units = np.concatenate([members[c] for c in cr])
    tau_cr, var_cr = _difference_in_means(y[cr_units], w[cr_units])

    means, states = [], []
    n_mixed = 0
    for c in cbr:
        w_c = w[members[c]]
        if w_c.min() == w_c.max():
            means.append(y[members[c]].mean())
            states.append(int(w_c[0]))
        else:
            n_mixed += 1
    tau_cbr, var_cbr = _difference_in_means(
        np.asarray(means), np.asarray(states, dtype=np.int8)
    )
    sigma_p = float(np.sqrt(var_cr + var_cbr))
    t_exp = abs(tau_cr - tau_cbr) / sigma_p if sigma_p > 0 else 0.0
    result = TwoStageResult(
        tau_cr=tau_cr, tau_cbr=tau_cbr, sigma_p=sigma_p, t_exp=t_exp
    )
    return result, n_mixed


@dataclass(frozen=True)
class RejectionRates:
    conservative: float
    asymptotic: float
    n_assignments: int


def rejection_rates(
    graph: InteractionGraph,
    potential_outcomes: Callable[[np.ndarray], np.ndarray],
    clustering: Clustering,
    n_assignments: int,
    seed: int,
    alpha: float = 0.05,
) -> RejectionRates:
    """Fraction of repeated two-stage experiments rejecting at ``alpha``.

    Assignment b draws from an RNG stream keyed by (seed, b), so rates are
    reproducible and independent of evaluation order.
    """
    if n_assignments < 1:
        raise PreconditionError("n_assignments must be >= 1")
    members = clustering.member_lists()
    cons_cut = conservative_threshold(alpha)
    asymp_cut = asymptotic_threshold(alpha)
    cons = asymp = 0
    for b in range(n_assignments):
        rng = np.random.default_rng([seed, b])
        res = _one_assignment(rng, members, graph.n, potential_outcomes)
        cons += res.t_exp >= cons_cut
        asymp += res.t_exp >= asymp_cut
    return RejectionRates(
        conservative=cons / n_assignments,
        asymptotic=asymp / n_assignments,
        n_assignments=n_assignments,
    )
