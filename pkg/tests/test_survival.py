import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subcox.exceptions import ConcordanceUndefinedError, DataError
from subcox.survival import (
    WeibullParams,
    concordance_index,
    kaplan_meier,
    weibull_from_survival_points,
)


def brute_force_cindex(times, events, scores):
    """Pure-python pair enumeration straight from the definition."""
    n_c = 0
    credit = 0.0
    n = len(times)
    for i in range(n):
        if events[i] != 1:
            continue
        for k in range(n):
            if k == i:
                continue
            usable = times[k] > times[i] or (
                times[k] == times[i] and events[k] == 0
            )
            if not usable:
                continue
            n_c += 1
            if scores[k] < scores[i]:
                credit += 1.0
            elif scores[k] == scores[i]:
                credit += 0.5
    if n_c == 0:
        raise ZeroDivisionError
    return credit / n_c


class TestConcordanceIndex:
    def test_perfectly_concordant(self):
        assert concordance_index([1, 2, 3], [1, 1, 1], [3, 2, 1]) == 1.0

    def test_single_tied_pair(self):
        assert concordance_index([1, 2], [1, 1], [5, 5]) == 0.5

    def test_perfectly_anticoncordant(self):
        assert concordance_index([1, 2, 3], [1, 1, 1], [1, 2, 3]) == 0.0

    def test_censored_pairs_excluded(self):
        # the only usable pair is (event at 1, censored at 2)
        assert concordance_index([1, 2], [1, 0], [2, 1]) == 1.0

    def test_event_vs_censored_at_same_time_usable(self):
        # censored patient at the event time counts as the longer survivor
        assert concordance_index([1, 1], [1, 0], [2, 1]) == 1.0
        assert concordance_index([1, 1], [1, 0], [1, 2]) == 0.0

    def test_both_events_tied_time_unusable(self):
        with pytest.raises(ConcordanceUndefinedError):
            concordance_index([1, 1], [1, 1], [1, 2])

    def test_all_censored_undefined(self):
        with pytest.raises(ConcordanceUndefinedError):
            concordance_index([1, 2, 3], [0, 0, 0], [1, 2, 3])

    def test_matches_brute_force(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 51))
            times = np.round(rng.exponential(1.0, n), 2) + 0.01
            events = (rng.uniform(size=n) > 0.3).astype(int)
            scores = np.round(rng.standard_normal(n), 1)
            try:
                expected = brute_force_cindex(times, events, scores)
            except ZeroDivisionError:
                continue
            assert concordance_index(times, events, scores) == expected

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_antisymmetry(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(3, 25))
        times = r.exponential(1.0, n) + 0.01
        events = (r.uniform(size=n) > 0.4).astype(int)
        scores = r.standard_normal(n)
        try:
            ci = concordance_index(times, events, scores)
        except ConcordanceUndefinedError:
            return
        assert concordance_index(times, events, -scores) == pytest.approx(
            1.0 - ci, abs=1e-12
        )

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(3, 25))
        times = r.exponential(1.0, n) + 0.01
        events = (r.uniform(size=n) > 0.4).astype(int)
        scores = r.standard_normal(n)
        try:
            ci = concordance_index(times, events, scores)
        except ConcordanceUndefinedError:
            return
        assert concordance_index(times, events, np.exp(scores) + 3) == ci


class TestKaplanMeier:
    def test_no_censoring(self):
        km = kaplan_meier([1, 2, 3], [1, 1, 1])
        assert km(1) == pytest.approx(2 / 3)
        assert km(2) == pytest.approx(1 / 3)
        assert km(3) == 0.0

    def test_no_events(self):
        km = kaplan_meier([1, 2], [0, 0])
        assert km(0.5) == 1.0
        assert km(10) == 1.0
        assert km.steps == []

    def test_hand_computed_table(self):
        # product-limit over risk sets computed by hand (exact fractions)
        times = [1, 1, 2, 3, 3, 3, 4, 5, 5, 6, 7, 8, 8, 9, 10]
        events = [1, 0, 1, 1, 1, 0, 0, 1, 1, 0, 1, 0, 1, 1, 0]
        km = kaplan_meier(times, events)
        expected = {
            1: 14 / 15,
            2: 56 / 65,
            3: 28 / 39,
            5: 7 / 13,
            7: 28 / 65,
            8: 21 / 65,
            9: 21 / 130,
        }
        assert [t for t, _ in km.steps] == sorted(expected)
        for t, s in expected.items():
            assert km(t) == pytest.approx(s, abs=1e-12)
        # step evaluation between event times
        assert km(4.5) == pytest.approx(28 / 39, abs=1e-12)
        assert km(0.2) == 1.0

    def test_tied_event_and_censoring(self):
        # censored at the event time stays in that time's risk set
        km = kaplan_meier([1, 1, 2], [1, 0, 1])
        assert km(1) == pytest.approx(2 / 3)
        assert km(2) == 0.0

    def test_empty_errors(self):
        with pytest.raises(DataError):
            kaplan_meier([], [])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_non_increasing_in_unit_interval(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 40))
        times = r.exponential(1.0, n) + 1e-3
        events = (r.uniform(size=n) > 0.4).astype(int)
        km = kaplan_meier(times, events)
        values = np.asarray([s for _, s in km.steps])
        assert np.all(values <= 1.0 + 1e-12) and np.all(values >= -1e-12)
        assert np.all(np.diff(values) <= 1e-12)


class TestWeibullSolve:
    def test_unit_exponential(self):
        wp = weibull_from_survival_points(1.0, np.exp(-1), 2.0, np.exp(-2))
        assert wp.scale == pytest.approx(1.0, abs=1e-12)
        assert wp.shape == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize(
        "t1,s1,t2,s2",
        [(3.0, 0.57, 5.0, 0.42), (3.0, 0.75, 5.0, 0.62)],
    )
    def test_plug_back(self, t1, s1, t2, s2):
        wp = weibull_from_survival_points(t1, s1, t2, s2)
        assert float(wp.survival(t1)) == pytest.approx(s1, rel=1e-12)
        assert float(wp.survival(t2)) == pytest.approx(s2, rel=1e-12)

    def test_first_cohort_shape(self):
        wp = weibull_from_survival_points(3.0, 0.57, 5.0, 0.42)
        assert wp.shape == pytest.approx(0.85, abs=5e-3)

    @pytest.mark.parametrize(
        "args",
        [
            (2.0, 0.5, 1.0, 0.4),  # t1 > t2
            (1.0, 0.4, 2.0, 0.5),  # s2 > s1
            (1.0, 0.5, 2.0, 0.5),  # equal survival
            (1.0, 1.1, 2.0, 0.5),  # s1 out of range
        ],
    )
    def test_domain_errors(self, args):
        with pytest.raises(DataError):
            weibull_from_survival_points(*args)

    @given(
        st.floats(0.1, 5.0),
        st.floats(0.05, 0.93),
        st.floats(0.01, 0.9),
        st.floats(1.1, 4.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_solve_is_inverse_of_evaluation(self, t1, s1, gap, factor):
        s2 = s1 * gap
        t2 = t1 * factor
        wp = weibull_from_survival_points(t1, s1, t2, s2)
        assert float(wp.survival(t1)) == pytest.approx(s1, rel=1e-9)
        assert float(wp.survival(t2)) == pytest.approx(s2, rel=1e-9)

    def test_invalid_params_rejected(self):
        with pytest.raises(DataError):
            WeibullParams(scale=-1.0, shape=1.0)
