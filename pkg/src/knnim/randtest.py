"""Conditional randomization tests for interference.

Focal treatments stay fixed at their observed values while variant
treatments are redrawn; the statistic is re-evaluated on the unchanged
observed outcomes for every draw (outcomes of focal units are invariant to
variant treatments under the no-interference null, so the statistic is
imputable).  The observed assignment is included as one reference draw, so
p-values are always positive and the test is valid at every sample size.

Draw b uses an RNG stream derived from (seed, b); results are therefore
independent of evaluation order and chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice, product

import numpy as np

from .errors import PreconditionError
from .stats import STATISTIC_NAMES, StatisticInput

COMPLETE = "complete"
BERNOULLI = "bernoulli"

_ENUM_BUDGET = 10**6


@dataclass(frozen=True)
class RandTestConfig:
    """Settings for one randomization test.

    ``scheme`` is how variant treatments are redrawn: ``complete`` permutes
    the observed variant treatment multiset (fixed treated count),
    ``bernoulli`` flips independent coins with probability ``bernoulli_p``.
    """

    statistic: str
    seed: int
    n_randomizations: int = 1000
    scheme: str = COMPLETE
    bernoulli_p: float | None = None
    two_sided: bool = True

    def __post_init__(self) -> None:
        if self.statistic not in STATISTIC_NAMES:
            raise PreconditionError(
                f"unknown statistic {self.statistic!r}; expected one of {STATISTIC_NAMES}"
            )
        if self.n_randomizations < 1:
            raise PreconditionError("n_randomizations must be >= 1")
        if self.scheme not in (COMPLETE, BERNOULLI):
            raise PreconditionError(f"unknown scheme {self.scheme!r}")
        if self.scheme == BERNOULLI:
            if self.bernoulli_p is None or not 0.0 < self.bernoulli_p < 1.0:
                raise PreconditionError("bernoulli scheme needs 0 < p < 1")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise PreconditionError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class TestReport:
    statistic: str
    observed: float
    p_value: float
    n_randomizations: int
    n_undefined_draws: int
    seed: int
    focal_method: str
    n: int
    k: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "observed": self.observed,
            "p_value": self.p_value,
            "n_randomizations": self.n_randomizations,
            "n_undefined_draws": self.n_undefined_draws,
            "seed": self.seed,
            "focal_method": self.focal_method,
            "n": self.n,
            "k": self.k,
        }


class _Engine:
    """Vectorized statistic evaluation across many treatment draws.

    Index structures depend only on (graph, partition); treatment-dependent
    gathers are computed once per draw chunk and shared across statistics
    and outcome vectors.  Semantics (values and definedness) mirror the
    single-input functions in :mod:`knnim.stats` exactly.
    """

    def __init__(self, graph, partition) -> None:
        self.graph = graph
        self.partition = partition
        self.fidx = partition.focal_indices()
        self.vidx = partition.variant_indices()
        self.m = self.fidx.size
        n, k = graph.n, graph.k

        focal_mask = np.zeros(n, dtype=bool)
        focal_mask[self.fidx] = True

        # Padded (m, k) neighbor matrix; invalid slots point at unit 0.
        self.nbr_idx = np.zeros((self.m, k), dtype=np.int64)
        self.nbr_valid = np.zeros((self.m, k), dtype=bool)
        for pos, i in enumerate(self.fidx):
            row = graph.knn_out[int(i)]
            self.nbr_idx[pos, : len(row)] = row
            self.nbr_valid[pos, : len(row)] = True
        self.degree = self.nbr_valid.sum(axis=1)

        # Focal -> variant edges (for the edge-level contrast).
        src, dst = [], []
        for pos, i in enumerate(self.fidx):
            for j in graph.knn_out[int(i)]:
                if not focal_mask[j]:
                    src.append(pos)
                    dst.append(j)
        self.edge_src = np.asarray(src, dtype=np.int64)
        self.edge_dst = np.asarray(dst, dtype=np.int64)

        # Variant out-neighbors (for the has-treated-neighbor indicator).
        self.vn_idx = self.nbr_idx.copy()
        self.vn_valid = self.nbr_valid & ~focal_mask[self.nbr_idx]

        self.d_fv = graph.dist[np.ix_(self.fidx, self.vidx)]

    def chunk_size(self, requested: int = 256) -> int:
        cells = max(1, self.m * max(1, self.vidx.size))
        return max(1, min(requested, 4_000_000 // cells))

    def draw_structures(self, w_matrix: np.ndarray) -> dict:
        """Treatment-dependent gathers for a (B, n) chunk of assignments."""
        s = w_matrix[:, self.nbr_idx]  # (B, m, k)
        structs = {
            "nbr_w": s,
            "frac": (s * self.nbr_valid).sum(axis=2) / np.maximum(self.degree, 1),
            "edge_w": w_matrix[:, self.edge_dst],
            "has_treated": ((s * self.vn_valid).sum(axis=2) > 0).astype(float),
            "w_variant": w_matrix[:, self.vidx],
            "w_matrix": w_matrix,
        }
        w_v = structs["w_variant"]
        masked = np.where(w_v[:, None, :] == 1, self.d_fv[None, :, :], np.inf)
        structs["d_nearest"] = masked.min(axis=2)  # (B, m); inf if no treated variant
        return structs

    def evaluate(
        self, structs: dict, outcomes: np.ndarray, names: tuple[str, ...]
    ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        y_f = outcomes[self.fidx]
        nb = structs["nbr_w"].shape[0]
        for name in names:
            out[name] = getattr(self, f"_eval_{name}")(structs, y_f, nb)
        return out

    def _eval_pearson(self, structs, y_f, nb):
        if self.m < 2:
            raise PreconditionError("need at least 2 focal units")
        d_nearest = structs["d_nearest"]
        finite = np.isfinite(d_nearest).all(axis=1)
        safe = np.where(np.isfinite(d_nearest), d_nearest, 0.0)
        defined = finite & (np.ptp(safe, axis=1) > 0) & (np.ptp(y_f) > 0)
        dc = safe - safe.mean(axis=1, keepdims=True)
        yc = y_f - y_f.mean()
        denom = np.sqrt(yc.dot(yc) * (dc * dc).sum(axis=1))
        values = np.divide(dc @ yc, denom, out=np.zeros(nb), where=denom > 0)
        return np.where(defined, values, 0.0), defined

    def _eval_elc(self, structs, y_f, nb):
        if self.edge_src.size == 0:
            return np.zeros(nb), np.zeros(nb, dtype=bool)
        w_e = structs["edge_w"].astype(float)
        y_e = y_f[self.edge_src]
        n_t = w_e.sum(axis=1)
        n_c = w_e.shape[1] - n_t
        defined = (n_t > 0) & (n_c > 0)
        sum_t = w_e @ y_e
        sum_all = y_e.sum()
        mean_t = np.divide(sum_t, n_t, out=np.zeros(nb), where=n_t > 0)
        mean_c = np.divide(sum_all - sum_t, n_c, out=np.zeros(nb), where=n_c > 0)
        return np.where(defined, mean_t - mean_c, 0.0), defined

    def _eval_score(self, structs, y_f, nb):
        w_f = structs["w_matrix"][0, self.fidx]  # focal treatments fixed across draws
        n_ft = int(w_f.sum())
        qual = self.degree > 0
        ok = 0 < n_ft < self.m and int(qual.sum()) >= 2
        if not ok:
            return np.zeros(nb), np.zeros(nb, dtype=bool)
        ybar1 = y_f[w_f == 1].mean()
        ybar0 = y_f[w_f == 0].mean()
        resid = y_f - ybar0 - (ybar1 - ybar0) * w_f
        r_q = resid[qual]
        r_c = r_q - r_q.mean()
        frac_q = structs["frac"][:, qual]
        values = (frac_q @ r_c) / (r_q.size - 1)
        return values, np.ones(nb, dtype=bool)

    def _eval_htn(self, structs, y_f, nb):
        if self.m < 2:
            raise PreconditionError("need at least 2 focal units")
        ind = structs["has_treated"]
        s_y = y_f.std(ddof=1)
        s_e = ind.std(axis=1, ddof=1)
        defined = (s_e > 0) & (s_y > 0)
        yc = y_f - y_f.mean()
        denom = self.m * s_y * s_e
        values = np.divide(ind @ yc, denom, out=np.zeros(nb), where=denom > 0)
        return np.where(defined, values, 0.0), defined

    def _eval_knn(self, structs, y_f, nb):
        if self.m == 0:
            raise PreconditionError("focal set is empty")
        w_f = structs["w_matrix"][0, self.fidx]
        n_ft = int(w_f.sum())
        n_fc = self.m - n_ft
        values = np.zeros(nb)
        for ell in range(self.graph.k):
            valid = self.nbr_valid[:, ell]
            s = structs["nbr_w"][:, :, ell]
            for own, weight in ((1, n_ft / self.m), (0, n_fc / self.m)):
                if weight == 0:
                    continue
                g = valid & (w_f == own)
                if not g.any():
                    continue
                y_g = y_f[g]
                s_g = s[:, g]
                cnt1 = s_g.sum(axis=1)
                cnt0 = g.sum() - cnt1
                sum1 = s_g @ y_g
                mean1 = np.divide(sum1, cnt1, out=np.zeros(nb), where=cnt1 > 0)
                mean0 = np.divide(
                    y_g.sum() - sum1, cnt0, out=np.zeros(nb), where=cnt0 > 0
                )
                values += weight * (mean1 - mean0)
        return values, np.ones(nb, dtype=bool)


def _draw_variant_row(
    seed: int, b: int, scheme: str, p: float | None, w_variant_obs: np.ndarray
) -> np.ndarray:
    rng = np.random.default_rng([seed, b])
    if scheme == COMPLETE:
        return rng.permutation(w_variant_obs)
    return (rng.random(w_variant_obs.size) < p).astype(np.int8)


def _accumulate(observed, values, defined, two_sided):
    # Draws within one part in 1e12 of the observed magnitude count as at
    # least as extreme: structurally tied assignments (e.g. treated/control
    # complements) must not be lost to rounding, and counting ties can only
    # make the p-value more conservative.
    tol = 1e-12 * max(1.0, abs(observed))
    if two_sided:
        hits = defined & (np.abs(values) >= abs(observed) - tol)
    else:
        hits = defined & (values >= observed - tol)
    return int(hits.sum()), int(defined.sum())


def run_shared_draws(
    graph,
    partition,
    treatment,
    outcomes_by_key: dict,
    config: RandTestConfig,
    statistics: tuple[str, ...],
    strict: bool = True,
) -> dict:
    """Randomization tests for several outcome vectors over one set of draws.

    All outcome vectors share the graph, partition, observed treatment and
    reference draws; only the statistic values differ.  Returns
    ``{key: {statistic: TestReport}}``.  The simulation harness uses this to
    evaluate many coefficient settings against identical randomizations.

    With ``strict=False``, a statistic that is undefined on the observed
    assignment (or on every draw) yields ``None`` instead of raising, so a
    long study can record the realization as inconclusive for that statistic
    and move on.
    """
    for name in statistics:
        if name not in STATISTIC_NAMES:
            raise PreconditionError(f"unknown statistic {name!r}")
    engine = _Engine(graph, partition)
    w_obs = treatment.w

    obs_structs = engine.draw_structures(w_obs[None, :].astype(np.int8))
    observed = {}
    skipped: set[tuple] = set()
    for key, outcomes in outcomes_by_key.items():
        observed[key] = engine.evaluate(obs_structs, outcomes, statistics)
        for name in statistics:
            if not observed[key][name][1][0]:
                if strict:
                    raise PreconditionError(
                        f"statistic {name!r} is undefined on the observed assignment "
                        f"for outcomes {key!r} (degenerate outcomes or exposure pattern)"
                    )
                skipped.add((key, name))

    w_variant_obs = w_obs[engine.vidx].astype(np.int8)
    hits = {(key, name): 0 for key in outcomes_by_key for name in statistics}
    n_defined = {(key, name): 0 for key in outcomes_by_key for name in statistics}
    chunk = engine.chunk_size()
    b = 0
    while b < config.n_randomizations:
        size = min(chunk, config.n_randomizations - b)
        w_matrix = np.tile(w_obs.astype(np.int8), (size, 1))
        for row in range(size):
            w_matrix[row, engine.vidx] = _draw_variant_row(
                config.seed, b + row, config.scheme, config.bernoulli_p, w_variant_obs
            )
        structs = engine.draw_structures(w_matrix)
        for key, outcomes in outcomes_by_key.items():
            results = engine.evaluate(structs, outcomes, statistics)
            for name in statistics:
                if (key, name) in skipped:
                    continue
                values, defined = results[name]
                h, d = _accumulate(
                    observed[key][name][0][0], values, defined, config.two_sided
                )
                hits[key, name] += h
                n_defined[key, name] += d
        b += size

    reports: dict = {}
    for key in outcomes_by_key:
        reports[key] = {}
        for name in statistics:
            if (key, name) in skipped:
                reports[key][name] = None
                continue
            if n_defined[key, name] == 0:
                if strict:
                    raise PreconditionError(
                        f"statistic {name!r} was undefined on every randomization draw"
                    )
                reports[key][name] = None
                continue
            reports[key][name] = TestReport(
                statistic=name,
                observed=float(observed[key][name][0][0]),
                p_value=(1 + hits[key, name]) / (1 + n_defined[key, name]),
                n_randomizations=config.n_randomizations,
                n_undefined_draws=config.n_randomizations - n_defined[key, name],
                seed=config.seed,
                focal_method=partition.method,
                n=graph.n,
                k=graph.k,
            )
    return reports


def run_randomization_tests(
    inp: StatisticInput,
    config: RandTestConfig,
    statistics: tuple[str, ...] | None = None,
) -> dict[str, TestReport]:
    """Run the conditional randomization test for several statistics at once.

    All statistics share the same reference draws (and the cost of building
    them).  Raises if any requested statistic is undefined on the observed
    assignment, or if every draw comes back undefined.
    """
    names = tuple(statistics) if statistics is not None else (config.statistic,)
    partition = inp.require_partition()
    return run_shared_draws(
        inp.graph, partition, inp.treatment, {None: inp.outcomes}, config, names
    )[None]


def run_randomization_test(inp: StatisticInput, config: RandTestConfig) -> TestReport:
    """Monte Carlo randomization p-value for ``config.statistic``."""
    return run_randomization_tests(inp, config)[config.statistic]


def _enumerated_rows(scheme, w_variant_obs, p):
    """Yield (variant assignment row, probability weight) for every draw."""
    m = w_variant_obs.size
    if scheme == COMPLETE:
        t = int(w_variant_obs.sum())
        total = math.comb(m, t)
        weight = 1.0 / total
        for pos in combinations(range(m), t):
            row = np.zeros(m, dtype=np.int8)
            row[list(pos)] = 1
            yield row, weight
    else:
        for bits in product((0, 1), repeat=m):
            row = np.asarray(bits, dtype=np.int8)
            s = int(row.sum())
            yield row, p**s * (1 - p) ** (m - s)


def enumeration_size(inp: StatisticInput, config: RandTestConfig) -> int:
    m = inp.require_partition().variant_indices().size
    if config.scheme == COMPLETE:
        t = int(inp.treatment.w[inp.partition.variant_indices()].sum())
        return math.comb(m, t)
    return 2**m


def enumerate_exact_p(inp: StatisticInput, config: RandTestConfig) -> TestReport:
    """Exact p-value by enumerating every variant assignment under the scheme.

    Intended as a testing oracle for small variant sets; refuses to
    enumerate more than 10^6 assignments.
    """
    partition = inp.require_partition()
    total = enumeration_size(inp, config)
    if total > _ENUM_BUDGET:
        raise PreconditionError(
            f"enumeration of {total} assignments exceeds budget {_ENUM_BUDGET}"
        )
    engine = _Engine(inp.graph, partition)
    w_obs = inp.treatment.w
    name = config.statistic

    obs_structs = engine.draw_structures(w_obs[None, :].astype(np.int8))
    obs_values, obs_defined = engine.evaluate(obs_structs, inp.outcomes, (name,))[name]
    if not obs_defined[0]:
        raise PreconditionError(
            f"statistic {name!r} is undefined on the observed assignment"
        )
    observed = obs_values[0]

    w_variant_obs = w_obs[engine.vidx].astype(np.int8)
    rows = _enumerated_rows(config.scheme, w_variant_obs, config.bernoulli_p)
    chunk = engine.chunk_size()
    hit_mass = 0.0
    defined_mass = 0.0
    n_undefined = 0
    while True:
        batch = list(islice(rows, chunk))
        if not batch:
            break
        w_matrix = np.tile(w_obs.astype(np.int8), (len(batch), 1))
        weights = np.empty(len(batch))
        for row_i, (variant_row, weight) in enumerate(batch):
            w_matrix[row_i, engine.vidx] = variant_row
            weights[row_i] = weight
        structs = engine.draw_structures(w_matrix)
        values, defined = engine.evaluate(structs, inp.outcomes, (name,))[name]
        tol = 1e-12 * max(1.0, abs(observed))
        if config.two_sided:
            hit = defined & (np.abs(values) >= abs(observed) - tol)
        else:
            hit = defined & (values >= observed - tol)
        hit_mass += weights[hit].sum()
        defined_mass += weights[defined].sum()
        n_undefined += int((~defined).sum())

    if defined_mass == 0:
        raise PreconditionError(
            f"statistic {name!r} was undefined on every enumerated assignment"
        )
    return TestReport(
        statistic=name,
        observed=float(observed),
        p_value=float(hit_mass / defined_mass),
        n_randomizations=total,
        n_undefined_draws=n_undefined,
        seed=config.seed,
        focal_method=partition.method,
        n=inp.graph.n,
        k=inp.graph.k,
    )
