import math
import random
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from pood.exceptions import EmptyInputError, ValidationError
from pood.metrics import (
    aupr,
    auroc,
    bootstrap_ci,
    cohort_epd,
    detection_metrics,
    epd,
    fpr_at_tpr,
    fpr_at_tpr_plus,
    spearman,
)
from pood.records import ID_COHORT, ReferenceScore, SampleRecord, ScoreTable
from pood.thresholding import ThresholdPolicy

ONE_TO_20 = list(range(1, 21))


def _ood(perf):
    return [SampleRecord(f"o{i}", "shift", 0.0, p) for i, p in enumerate(perf)]


def hand_table():
    """The 22-sample worked example: 20 ID scores 1..20, OOD scores 18 and 21."""
    recs = [SampleRecord(f"id{i:02d}", ID_COHORT, float(i), 0.9) for i in ONE_TO_20]
    recs += [SampleRecord("ood-a", "shift", 18.0, 0.5), SampleRecord("ood-b", "shift", 21.0, 0.2)]
    return ScoreTable(recs)


class TestEpd:
    def test_hand_example(self):
        res = epd(_ood([0.5, 0.2]), [1, 0], 0.9)
        assert res.value == pytest.approx(0.2, abs=1e-15)
        assert (res.n_retained, res.n_total) == (1, 2)

    def test_all_rejected_is_exactly_zero(self):
        assert epd(_ood([0.1, 0.3, 0.0]), [0, 0, 0], 0.9).value == 0.0

    def test_negative(self):
        assert epd(_ood([0.7]), [1], ReferenceScore(0.5)).value == pytest.approx(-0.2, abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            epd([], [], 0.5)

    def test_misaligned(self):
        with pytest.raises(ValidationError):
            epd(_ood([0.1, 0.2]), [1], 0.5)

    def test_table_level_hand_example(self):
        assert cohort_epd(hand_table(), "shift").value == pytest.approx(0.2, abs=1e-12)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1))
    def test_no_ood_is_full_mean_drop(self, perf, s0):
        recs = [SampleRecord("i", ID_COHORT, 0.0, s0)] + [
            SampleRecord(f"o{i}", "s", float(i), p) for i, p in enumerate(perf)
        ]
        res = cohort_epd(ScoreTable(recs), "s", ThresholdPolicy.no_ood(), s0)
        assert res.value == statistics.fmean([s0 - p for p in perf])

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 1)), min_size=1, max_size=15),
           st.lists(st.floats(-5, 5), min_size=1, max_size=15), st.floats(0.1, 10))
    def test_joint_scaling(self, ood, id_scores, c):
        recs = [SampleRecord(f"i{k}", ID_COHORT, s, 0.8) for k, s in enumerate(id_scores)]
        recs += [SampleRecord(f"o{k}", "s", s, p) for k, (s, p) in enumerate(ood)]
        scaled = [SampleRecord(r.sample_id, r.cohort, r.ood_score, r.perf_score * c) for r in recs]
        base = cohort_epd(ScoreTable(recs), "s").value
        assert cohort_epd(ScoreTable(scaled), "s").value == pytest.approx(c * base, abs=1e-9)


class TestFpr:
    def test_hand(self):
        assert fpr_at_tpr(ONE_TO_20, [18, 21], 95) == 0.5

    def test_perfect_separation(self):
        assert fpr_at_tpr(ONE_TO_20, [20.5, 30], 95) == 0.0

    def test_total_miss(self):
        assert fpr_at_tpr(ONE_TO_20, [-1, 5, 19], 95) == 1.0

    def test_plus_hand(self):
        assert fpr_at_tpr_plus(ONE_TO_20, [18, 21], 95) == 0.5

    def test_plus_separated(self):
        assert fpr_at_tpr_plus(ONE_TO_20, [21, 22], 95) == 0.0

    def test_plus_two_thresholds(self):
        assert fpr_at_tpr_plus([1, 2], [1.5], 50) == 0.5

    def test_plus_counts_tied_thresholds_per_k(self):
        # k in {2, 3}: taus 5 and 5 -> identical FPR each time
        assert fpr_at_tpr_plus([1, 5, 5], [5, 6], 50) == oracles.fpr_plus([1, 5, 5], [5, 6], 50) == 0.5

    @pytest.mark.parametrize("fn", [fpr_at_tpr, fpr_at_tpr_plus])
    def test_empty(self, fn):
        with pytest.raises(EmptyInputError):
            fn([], [1.0], 95)
        with pytest.raises(EmptyInputError):
            fn([1.0], [], 95)


class TestAuroc:
    def test_separated(self):
        assert auroc([1, 2, 3], [4, 5]) == 1.0

    def test_all_tied(self):
        assert auroc([2, 2, 2], [2, 2]) == 0.5

    def test_hand(self):
        assert auroc([1, 2, 3], [2.5, 4]) == pytest.approx(5 / 6, abs=1e-15)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20, unique=True),
           st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20, unique=True))
    def test_swap_symmetry_without_ties(self, a, b):
        if set(a) & set(b):
            return
        assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            auroc([], [1.0])


class TestAupr:
    def test_positive_first(self):
        assert aupr([1], [2]) == 1.0

    def test_positive_second(self):
        assert aupr([2], [1]) == 0.5

    def test_hand(self):
        assert aupr([1, 2, 3], [2.5, 4]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)

    def test_tie_group_resolved_as_block(self):
        # one positive tied with one negative at the top: precision 1/2
        assert aupr([3, 1], [3]) == 0.5


finite = st.one_of(st.integers(0, 4).map(float), st.floats(-10, 10))


class TestOracleEquivalence:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=25), st.lists(st.tuples(finite, st.floats(0, 1)), min_size=1, max_size=25),
           st.sampled_from([50, 80, 95, 99, 100]))
    def test_all_metrics(self, ids, ood, n):
        ood_scores = [s for s, _ in ood]
        assert fpr_at_tpr(ids, ood_scores, n) == pytest.approx(oracles.fpr(ids, ood_scores, n), abs=1e-12)
        assert fpr_at_tpr_plus(ids, ood_scores, n) == pytest.approx(oracles.fpr_plus(ids, ood_scores, n), abs=1e-12)
        assert auroc(ids, ood_scores) == pytest.approx(oracles.auroc(ids, ood_scores), abs=1e-12)
        assert aupr(ids, ood_scores) == pytest.approx(oracles.aupr(ids, ood_scores), abs=1e-12)
        recs = [SampleRecord(f"i{k}", ID_COHORT, s, 0.5) for k, s in enumerate(ids)]
        recs += [SampleRecord(f"o{k}", "s", s, p) for k, (s, p) in enumerate(ood)]
        got = cohort_epd(ScoreTable(recs), "s", ThresholdPolicy.tpr(n), 0.75).value
        want = oracles.epd(0.75, ids, ood_scores, [p for _, p in ood], n)
        assert got == pytest.approx(want, abs=1e-12)

    # quarter-integer grid: the transforms stay strictly increasing in float64
    grid = st.integers(-40, 40).map(lambda k: k / 4)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(grid, min_size=1, max_size=15), st.lists(grid, min_size=1, max_size=15),
           st.sampled_from(["shift", "cube", "exp"]))
    def test_monotone_transform_invariance(self, ids, ood, kind):
        f = {"shift": lambda x: x + 3.0, "cube": lambda x: x ** 3 + x, "exp": math.exp}[kind]
        before = detection_metrics(ids, ood)
        after = detection_metrics([f(x) for x in ids], [f(x) for x in ood])
        assert after == before


class TestSpearman:
    def test_increasing_n10(self):
        x = np.arange(10.0)
        res = spearman(x, 2 * x + 1)
        assert res.rho == 1.0
        assert res.p_value == 0.0
        assert res.gated_rho == 1.0

    def test_decreasing(self):
        res = spearman(np.arange(30.0), -np.arange(30.0))
        assert res.rho == -1.0 and res.gated_rho == -1.0

    def test_ties(self):
        res = spearman([1, 2, 3, 4], [1, 2, 3, 3])
        assert res.rho == pytest.approx(oracles.spearman_rho([1, 2, 3, 4], [1, 2, 3, 3]), abs=1e-12)
        assert res.rho == pytest.approx(0.9487, abs=5e-5)

    def test_exact_permutation_small_n(self):
        # n = 3, perfectly ordered: 2 of 6 permutations reach |rho| = 1
        res = spearman([1, 2, 3], [1, 2, 3])
        assert res.p_value == pytest.approx(1 / 3)
        assert res.gated_rho == 0.0

    def test_exact_permutation_matches_enumeration(self):
        import itertools

        rng = np.random.default_rng(5)
        x = rng.normal(size=6)
        y = rng.integers(0, 3, size=6).astype(float)
        obs = abs(oracles.spearman_rho(list(x), list(y)))
        hits = sum(abs(oracles.spearman_rho(list(x), list(p))) >= obs - 1e-12 for p in itertools.permutations(y))
        assert spearman(x, y).p_value == pytest.approx(hits / math.factorial(6), abs=1e-12)

    def test_t_approximation_matches_scipy(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=40), rng.normal(size=40)
        ref = stats.spearmanr(x, y)
        res = spearman(x, y)
        assert res.rho == pytest.approx(ref.statistic, abs=1e-12)
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_constant_input(self):
        res = spearman([1, 1, 1, 1], [0.1, 0.5, 0.2, 0.9])
        assert (res.rho, res.p_value, res.gated_rho) == (0.0, 1.0, 0.0)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            spearman([1, 2], [3, 4])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=3, max_size=20))
    def test_gate(self, pairs):
        res = spearman([a for a, _ in pairs], [b for _, b in pairs])
        assert -1.0 <= res.rho <= 1.0 and 0.0 <= res.p_value <= 1.0
        assert res.gated_rho == (0.0 if res.p_value > 1e-4 else res.rho)


class TestBootstrap:
    def test_constant_metric(self):
        ci = bootstrap_ci(lambda t: 0.42, hand_table(), n_resamples=200, seed=0)
        assert ci.lower == ci.upper == 0.42

    def test_deterministic(self):
        metric = lambda t: cohort_epd(t, "shift").value
        a = bootstrap_ci(metric, hand_table(), n_resamples=300, seed=11)
        b = bootstrap_ci(metric, hand_table(), n_resamples=300, seed=11)
        assert a == b

    def test_hand_example_contains_point(self):
        metric = lambda t: cohort_epd(t, "shift").value
        ci = bootstrap_ci(metric, hand_table(), level=0.95, n_resamples=1000, seed=2)
        assert ci.lower <= 0.2 <= ci.upper

        # independent percentile bootstrap over the same cohorts
        table = hand_table()
        ids = [(r.ood_score, r.perf_score) for r in table.id_cohort]
        ood = [(r.ood_score, r.perf_score) for r in table.cohort("shift")]

        def stat(id_s, ood_s):
            return oracles.epd(
                statistics.fmean(p for _, p in id_s), [s for s, _ in id_s], [s for s, _ in ood_s], [p for _, p in ood_s]
            )

        lo, hi = oracles.percentile_bootstrap(stat, [ids, ood], 1000, 0.95, random.Random(2))
        assert lo <= 0.2 <= hi
        assert abs(ci.lower - lo) <= 0.2 + 1e-12 and abs(ci.upper - hi) <= 0.2 + 1e-12

    def test_degenerate_cohort_flagged(self):
        recs = [SampleRecord("a", ID_COHORT, 1.0, 0.9), SampleRecord("b", ID_COHORT, 2.0, 0.8),
                SampleRecord("c", "s", 1.5, 0.3)]
        ci = bootstrap_ci(lambda t: cohort_epd(t, "s").value, ScoreTable(recs), n_resamples=100, seed=0)
        assert ci.degenerate and ci.lower == ci.upper

    def test_too_few_resamples(self):
        with pytest.raises(ValueError):
            bootstrap_ci(lambda t: 0.0, hand_table(), n_resamples=50)
