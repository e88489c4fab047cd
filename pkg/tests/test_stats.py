"""Tests for the five interference statistics.

Random instances are checked against independent brute-force oracles that
evaluate the displayed formulas with explicit loops over the adjacency
matrix, so an indexing mistake in the implementation cannot hide.
"""

import math

import numpy as np
import pytest

from conftest import make_partition, random_instance as random_input

from knnim import (
    StatisticInput,
    TreatmentVector,
    build_knn_graph,
    compute_statistic,
    stat_elc,
    stat_htn,
    stat_knn,
    stat_pearson,
    stat_score,
    with_partition,
)
from knnim.errors import PreconditionError


# ---------------------------------------------------------------------------
# Independent oracles (explicit loops over the displayed formulas)


def oracle_pearson(inp):
    focal = sorted(inp.partition.focal)
    w = inp.treatment.w
    d_nearest = []
    for i in focal:
        ds = [
            inp.graph.dist[i, j]
            for j in sorted(inp.partition.variant)
            if w[j] == 1
        ]
        if not ds or not math.isfinite(min(ds)):
            return None
        d_nearest.append(min(ds))
    y = [inp.outcomes[i] for i in focal]
    m = len(focal)
    ybar = sum(y) / m
    dbar = sum(d_nearest) / m
    num = sum((a - ybar) * (b - dbar) for a, b in zip(y, d_nearest))
    vy = sum((a - ybar) ** 2 for a in y)
    vd = sum((b - dbar) ** 2 for b in d_nearest)
    if vy == 0 or vd == 0:
        return None
    return num / math.sqrt(vy * vd)


def oracle_elc(inp):
    a = inp.graph.adjacency
    w = inp.treatment.w
    is_focal = [i in inp.partition.focal for i in range(inp.graph.n)]
    num_t = den_t = num_c = den_c = 0.0
    for i in range(inp.graph.n):
        for j in range(inp.graph.n):
            if i == j or not is_focal[i] or is_focal[j] or a[i, j] == 0:
                continue
            if w[j] == 1:
                num_t += inp.outcomes[i]
                den_t += 1
            else:
                num_c += inp.outcomes[i]
                den_c += 1
    if den_t == 0 or den_c == 0:
        return None
    return num_t / den_t - num_c / den_c


def oracle_score(inp):
    a = inp.graph.adjacency
    w = inp.treatment.w
    focal = sorted(inp.partition.focal)
    treated = [i for i in focal if w[i] == 1]
    control = [i for i in focal if w[i] == 0]
    if not treated or not control:
        return None
    ybar1 = sum(inp.outcomes[i] for i in treated) / len(treated)
    ybar0 = sum(inp.outcomes[i] for i in control) / len(control)
    pairs = []
    for i in focal:
        deg = int(a[i].sum())
        if deg == 0:
            continue
        frac = sum(a[i, j] * w[j] for j in range(inp.graph.n)) / deg
        resid = inp.outcomes[i] - ybar0 - (ybar1 - ybar0) * w[i]
        pairs.append((resid, frac))
    if len(pairs) < 2:
        return None
    m = len(pairs)
    rbar = sum(r for r, _ in pairs) / m
    fbar = sum(f for _, f in pairs) / m
    return sum((r - rbar) * (f - fbar) for r, f in pairs) / (m - 1)


def oracle_htn(inp):
    a = inp.graph.adjacency
    w = inp.treatment.w
    focal = sorted(inp.partition.focal)
    is_focal = [i in inp.partition.focal for i in range(inp.graph.n)]
    e = [
        1.0
        if sum(a[i, j] * w[j] * (1 - is_focal[j]) for j in range(inp.graph.n)) > 0
        else 0.0
        for i in focal
    ]
    y = [inp.outcomes[i] for i in focal]
    m = len(focal)
    ybar = sum(y) / m
    ebar = sum(e) / m
    s_y = math.sqrt(sum((v - ybar) ** 2 for v in y) / (m - 1))
    s_e = math.sqrt(sum((v - ebar) ** 2 for v in e) / (m - 1))
    if s_y == 0 or s_e == 0:
        return None
    return sum((y[i] - ybar) * e[i] for i in range(m)) / m / (s_y * s_e)


def oracle_knn(inp):
    w = inp.treatment.w
    focal = sorted(inp.partition.focal)
    m = len(focal)
    n_ft = sum(int(w[i]) for i in focal)
    n_fc = m - n_ft
    total = 0.0
    per_rank = []
    for ell in range(1, inp.graph.k + 1):
        t_ell = 0.0
        for own in (0, 1):
            cells = {0: [], 1: []}
            for i in focal:
                nbrs = inp.graph.knn_out[i]
                if len(nbrs) < ell or w[i] != own:
                    continue
                cells[int(w[nbrs[ell - 1]])].append(inp.outcomes[i])
            mean1 = sum(cells[1]) / len(cells[1]) if cells[1] else 0.0
            mean0 = sum(cells[0]) / len(cells[0]) if cells[0] else 0.0
            weight = (n_ft if own == 1 else n_fc) / m
            t_ell += weight * (mean1 - mean0)
        per_rank.append(t_ell)
        total += t_ell
    return total, per_rank


ORACLES = {
    "pearson": oracle_pearson,
    "elc": oracle_elc,
    "score": oracle_score,
    "htn": oracle_htn,
}


# ---------------------------------------------------------------------------
# Trivial hand-checkable cases


class TestPearson:
    def test_constant_focal_outcomes_undefined(self):
        inp = random_input(0)
        flat = StatisticInput(
            graph=inp.graph,
            treatment=inp.treatment,
            outcomes=np.ones(inp.graph.n),
            partition=inp.partition,
        )
        v = stat_pearson(flat)
        assert not v.defined and v.value == 0.0

    def test_two_focal_units_perfect_correlation(self):
        measures = {(0, 2): 1.0, (1, 2): 2.0, (2, 0): 1.0, (3, 0): 5.0}
        graph = build_knn_graph(measures, n=4, k=1)
        inp = StatisticInput(
            graph=graph,
            treatment=TreatmentVector(np.array([0, 0, 1, 0], dtype=np.int8)),
            outcomes=np.array([1.0, 2.0, 0.0, 0.0]),
            partition=make_partition({0, 1}, 4),
        )
        v = stat_pearson(inp)
        assert v.defined
        assert v.value == pytest.approx(1.0)

    def test_matches_oracle_on_random_instances(self):
        for seed in range(20):
            inp = random_input(seed)
            expected = oracle_pearson(inp)
            got = stat_pearson(inp)
            assert expected is not None
            assert got.defined
            assert got.value == pytest.approx(expected, abs=1e-12)

    def test_requires_two_focal_units(self):
        inp = random_input(1)
        single = with_partition(inp, make_partition({0}, inp.graph.n))
        with pytest.raises(PreconditionError):
            stat_pearson(single)

    def test_no_treated_variant_undefined(self):
        inp = random_input(2)
        w = np.zeros(inp.graph.n, dtype=np.int8)
        for i in inp.partition.focal:
            w[i] = 1
        all_control_variants = StatisticInput(
            graph=inp.graph,
            treatment=TreatmentVector(w),
            outcomes=inp.outcomes,
            partition=inp.partition,
        )
        assert not stat_pearson(all_control_variants).defined


class TestElc:
    def test_constant_outcomes_give_zero(self):
        inp = random_input(3)
        flat = StatisticInput(
            graph=inp.graph,
            treatment=inp.treatment,
            outcomes=np.full(inp.graph.n, 7.0),
            partition=inp.partition,
        )
        v = stat_elc(flat)
        assert v.defined
        assert v.value == pytest.approx(0.0)

    def test_single_focal_with_one_treated_one_control_neighbor(self):
        measures = {(0, 1): 1.0, (0, 2): 2.0, (1, 0): 1.0, (2, 0): 1.0}
        graph = build_knn_graph(measures, n=3, k=2)
        inp = StatisticInput(
            graph=graph,
            treatment=TreatmentVector(np.array([0, 1, 0], dtype=np.int8)),
            outcomes=np.array([5.0, 0.0, 0.0]),
            partition=make_partition({0}, 3),
        )
        v = stat_elc(inp)
        assert v.defined
        assert v.value == pytest.approx(0.0)  # 5 - 5

    def test_undefined_when_an_edge_arm_is_empty(self):
        measures = {(0, 1): 1.0, (0, 2): 2.0, (1, 0): 1.0, (2, 0): 1.0}
        graph = build_knn_graph(measures, n=3, k=2)
        inp = StatisticInput(
            graph=graph,
            treatment=TreatmentVector(np.array([0, 1, 1], dtype=np.int8)),
            outcomes=np.array([5.0, 0.0, 0.0]),
            partition=make_partition({0}, 3),
        )
        assert not stat_elc(inp).defined

    def test_matches_oracle_on_random_instances(self):
        for seed in range(20):
            inp = random_input(seed)
            expected = oracle_elc(inp)
            got = stat_elc(inp)
            assert expected is not None
            assert got.value == pytest.approx(expected, abs=1e-12)


class TestScore:
    def test_zero_when_outcomes_fit_two_group_means(self):
        inp = random_input(4)
        y = np.where(inp.treatment.w == 1, 3.0, -1.0).astype(float)
        fitted = StatisticInput(
            graph=inp.graph, treatment=inp.treatment, outcomes=y,
            partition=inp.partition,
        )
        v = stat_score(fitted)
        assert v.defined
        assert v.value == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_covariance(self):
        # Qualifying focal units 0 and 1 have residuals (-1, +1) and
        # treated-neighbor fractions (0, 1); focal units 2, 3 have no
        # measured partners and drop out of the covariance.
        measures = {(0, 4): 1.0, (1, 5): 1.0, (4, 0): 1.0, (5, 0): 1.0}
        graph = build_knn_graph(measures, n=6, k=1)
        inp = StatisticInput(
            graph=graph,
            treatment=TreatmentVector(np.array([0, 0, 1, 0, 0, 1], dtype=np.int8)),
            outcomes=np.array([0.0, 2.0, 9.0, 1.0, 0.0, 0.0]),
            partition=make_partition({0, 1, 2, 3}, 6),
        )
        v = stat_score(inp)
        assert v.defined
        assert v.value == pytest.approx(1.0)

    def test_undefined_without_both_focal_arms(self):
        inp = random_input(5)
        w = inp.treatment.w.copy()
        for i in inp.partition.focal:
            w[i] = 1
        one_arm = StatisticInput(
            graph=inp.graph,
            treatment=TreatmentVector(w),
            outcomes=inp.outcomes,
            partition=inp.partition,
        )
        assert not stat_score(one_arm).defined

    def test_matches_oracle_on_random_instances(self):
        for seed in range(20):
            inp = random_input(seed)
            expected = oracle_score(inp)
            got = stat_score(inp)
            assert expected is not None
            assert got.value == pytest.approx(expected, abs=1e-12)


class TestHtn:
    def test_all_focals_with_treated_neighbor_undefined(self):
        # Pick an instance where every focal unit has a variant neighbor,
        # then treat all variants: the indicator is constant 1.
        inp = None
        for seed in range(50):
            cand = random_input(seed)
            if all(
                any(j in cand.partition.variant for j in cand.graph.knn_out[i])
                for i in cand.partition.focal
            ):
                inp = cand
                break
        assert inp is not None
        w = np.ones(inp.graph.n, dtype=np.int8)
        for i in inp.partition.focal:
            w[i] = 0
        saturated = StatisticInput(
            graph=inp.graph,
            treatment=TreatmentVector(w),
            outcomes=inp.outcomes,
            partition=inp.partition,
        )
        assert not stat_htn(saturated).defined

    def test_constant_outcomes_undefined(self):
        inp = random_input(7)
        flat = StatisticInput(
            graph=inp.graph,
            treatment=inp.treatment,
            outcomes=np.zeros(inp.graph.n),
            partition=inp.partition,
        )
        assert not stat_htn(flat).defined

    def test_matches_oracle_on_random_instances(self):
        checked = 0
        for seed in range(25):
            inp = random_input(seed)
            expected = oracle_htn(inp)
            got = stat_htn(inp)
            if expected is None:
                assert not got.defined
                continue
            assert got.value == pytest.approx(expected, abs=1e-12)
            checked += 1
        assert checked >= 15


class TestKnn:
    def test_constant_outcomes_give_zero(self):
        # Needs an instance with every exposure cell populated; empty cells
        # contribute 0 rather than the constant.
        inp = clean_instances(1)[0]
        flat = StatisticInput(
            graph=inp.graph,
            treatment=inp.treatment,
            outcomes=np.full(inp.graph.n, 2.5),
            partition=inp.partition,
        )
        v = stat_knn(flat)
        assert v.defined
        assert v.empty_cells == ()
        assert v.value == pytest.approx(0.0)

    def test_hand_computed_single_rank(self):
        # Two control focal units; outcome 3 behind a treated neighbor,
        # outcome 1 behind a control one; no treated focal units.
        measures = {(0, 2): 1.0, (1, 3): 1.0, (2, 0): 1.0, (3, 1): 1.0}
        graph = build_knn_graph(measures, n=4, k=1)
        inp = StatisticInput(
            graph=graph,
            treatment=TreatmentVector(np.array([0, 0, 1, 0], dtype=np.int8)),
            outcomes=np.array([3.0, 1.0, 0.0, 0.0]),
            partition=make_partition({0, 1}, 4),
        )
        v = stat_knn(inp)
        assert v.defined
        assert v.value == pytest.approx(2.0)
        assert v.per_rank == (pytest.approx(2.0),)
        # the treated-arm cells are empty (there is no treated focal unit)
        assert (1, 1, 1) in v.empty_cells and (1, 1, 0) in v.empty_cells

    def test_matches_oracle_on_random_instances(self):
        for seed in range(20):
            inp = random_input(seed, n=40)
            expected_total, expected_ranks = oracle_knn(inp)
            got = stat_knn(inp)
            assert got.defined
            assert got.value == pytest.approx(expected_total, abs=1e-12)
            assert np.allclose(got.per_rank, expected_ranks, atol=1e-12)

    def test_empty_focal_set_errors(self):
        inp = random_input(9)
        empty = with_partition(inp, make_partition(set(), inp.graph.n))
        with pytest.raises(PreconditionError):
            stat_knn(empty)


# ---------------------------------------------------------------------------
# Cross-statistic properties


def clean_instances(count, n=40, k=3):
    """Instances where all five statistics are defined and no cell is empty."""
    out = []
    seed = 0
    while len(out) < count and seed < count * 4:
        inp = random_input(seed, n=n, k=k)
        values = {name: compute_statistic(name, inp) for name in
                  ("pearson", "elc", "score", "htn", "knn")}
        if all(v.defined for v in values.values()) and not values["knn"].empty_cells:
            out.append(inp)
        seed += 1
    assert len(out) == count
    return out


class TestSharedProperties:
    def test_location_invariance(self):
        for inp in clean_instances(15):
            shifted = StatisticInput(
                graph=inp.graph,
                treatment=inp.treatment,
                outcomes=inp.outcomes + 123.456,
                partition=inp.partition,
            )
            for name in ("pearson", "elc", "score", "htn", "knn"):
                base = compute_statistic(name, inp)
                moved = compute_statistic(name, shifted)
                assert moved.value == pytest.approx(base.value, abs=1e-9), name

    def test_scale_equivariance(self):
        c = 3.5
        for inp in clean_instances(15):
            scaled = StatisticInput(
                graph=inp.graph,
                treatment=inp.treatment,
                outcomes=inp.outcomes * c,
                partition=inp.partition,
            )
            for name in ("elc", "score", "knn"):
                assert compute_statistic(name, scaled).value == pytest.approx(
                    c * compute_statistic(name, inp).value, abs=1e-9
                ), name
            for name in ("pearson", "htn"):
                assert compute_statistic(name, scaled).value == pytest.approx(
                    compute_statistic(name, inp).value, abs=1e-9
                ), name

    def test_direct_effect_invariance_of_score_and_knn(self):
        for inp in clean_instances(15):
            for c in (1.0, 4.0, 40.0):
                bumped = StatisticInput(
                    graph=inp.graph,
                    treatment=inp.treatment,
                    outcomes=inp.outcomes + c * inp.treatment.w,
                    partition=inp.partition,
                )
                for name in ("score", "knn"):
                    assert compute_statistic(name, bumped).value == pytest.approx(
                        compute_statistic(name, inp).value, abs=1e-9
                    ), name

    def test_only_pearson_reacts_to_far_variant_swaps(self):
        # Swapping treatments between variant units outside every focal
        # 1-neighborhood can only move the nearest-treated distances.
        changed_pearson = 0
        tested = 0
        for seed in range(40):
            inp = random_input(seed, n=30)
            w = inp.treatment.w
            in_hood = set()
            for i in inp.partition.focal:
                in_hood.update(inp.graph.knn_out[i])
            outside = [
                j
                for j in sorted(inp.partition.variant)
                if j not in in_hood
            ]
            treated = [j for j in outside if w[j] == 1]
            control = [j for j in outside if w[j] == 0]
            if not treated or not control:
                continue
            swapped = w.copy()
            swapped[treated[0]], swapped[control[0]] = 0, 1
            other = StatisticInput(
                graph=inp.graph,
                treatment=TreatmentVector(swapped),
                outcomes=inp.outcomes,
                partition=inp.partition,
            )
            tested += 1
            for name in ("elc", "score", "htn", "knn"):
                a = compute_statistic(name, inp)
                b = compute_statistic(name, other)
                assert a.value == pytest.approx(b.value, abs=1e-12), name
                assert a.defined == b.defined
            pa = stat_pearson(inp)
            pb = stat_pearson(other)
            if pa.defined and pb.defined and abs(pa.value - pb.value) > 1e-12:
                changed_pearson += 1
        assert tested >= 10
        assert changed_pearson > 0

    def test_unknown_statistic_name_rejected(self):
        inp = random_input(10)
        with pytest.raises(PreconditionError):
            compute_statistic("anova", inp)

    def test_partition_required(self):
        inp = random_input(11)
        bare = StatisticInput(
            graph=inp.graph, treatment=inp.treatment, outcomes=inp.outcomes
        )
        with pytest.raises(PreconditionError):
            stat_score(bare)
