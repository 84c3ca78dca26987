import math

import numpy as np
import pytest

import oracles
from gcqrf import (EmptyNode, InvalidTau, StepSurvival, TailRule, censoring_fit,
                   ipcw_weight, ipcw_weights, nelson_aalen)


class TestNelsonAalen:
    def test_all_events_distinct_times(self):
        s = nelson_aalen([1, 2, 3], [True, True, True])
        assert np.allclose(s.increments, [1 / 3, 1 / 2, 1.0])
        assert np.allclose(s.times, [1, 2, 3])
        assert s.cumulative_hazard(3) == pytest.approx(11 / 6)
        assert list(s.n_at_risk) == [3, 2, 1]

    def test_no_events(self):
        s = nelson_aalen([1, 2, 3], [False, False, False])
        assert s.times.size == 0
        assert s.survival_at(10.0) == 1.0
        assert s.max_estimable_tau() == 0.0

    def test_single_event(self):
        s = nelson_aalen([5], [True])
        assert s.cumulative_hazard(5) == 1.0
        assert s.survival_at(5) == pytest.approx(math.exp(-1))

    def test_empty_raises(self):
        with pytest.raises(EmptyNode):
            nelson_aalen([], [])

    def test_ties_keep_censored_in_risk_set(self):
        # censored at 2 stays at risk for the event at 2
        s = nelson_aalen([1, 2, 2, 3], [True, True, False, True])
        assert np.allclose(s.increments, [1 / 4, 1 / 3, 1.0])

    def test_fully_uncensored_increment_pattern(self):
        # k-th increment is 1/(n-k+1) for distinct uncensored times
        rng = np.random.default_rng(0)
        for n in range(1, 21):
            times = np.sort(rng.choice(1000, size=n, replace=False)).astype(float)
            s = nelson_aalen(times, np.ones(n, dtype=bool))
            expect = [1.0 / (n - k) for k in range(n)]
            assert np.allclose(s.increments, expect)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = rng.integers(1, 12)
            times = rng.integers(0, 6, size=n).astype(float)
            events = rng.random(n) < 0.6
            if not events.any():
                continue
            s = nelson_aalen(times, events)
            expect = oracles.nelson_aalen_increments(list(times), list(events))
            assert len(expect) == s.times.size
            for k, (t, inc, r) in enumerate(expect):
                assert s.times[k] == t
                assert s.increments[k] == inc
                assert s.n_at_risk[k] == r

    def test_late_censored_obs_does_not_change_increments(self):
        times = [1.0, 2.0, 4.0]
        events = [True, False, True]
        s0 = nelson_aalen(times, events)
        s1 = nelson_aalen(times + [9.0], events + [False])
        # risk sets at existing times grow, so increments shrink; adding a
        # *later* observation only changes risk counts, never event counts
        assert s1.times.size == s0.times.size
        assert all(s1.n_at_risk == s0.n_at_risk + 1)


class TestSurvivalQueries:
    @pytest.fixture
    def fit(self):
        return nelson_aalen([1, 2, 3], [True, True, True])

    def test_survival_at(self, fit):
        assert fit.survival_at(1.5) == pytest.approx(math.exp(-1 / 3))
        assert fit.survival_at(0.5) == 1.0
        assert fit.survival_at(7.0) == pytest.approx(math.exp(-11 / 6))

    def test_left_limit(self, fit):
        assert fit.survival_left_limit(1.0) == 1.0
        assert fit.survival_left_limit(2.0) == pytest.approx(math.exp(-1 / 3))

    def test_left_limit_dominates(self, fit):
        for t in np.linspace(0, 5, 40):
            assert fit.survival_left_limit(t) >= fit.survival_at(t)

    def test_survival_nonincreasing(self, fit):
        ts = np.linspace(-1, 5, 60)
        s = fit.survival_at(ts)
        assert np.all(np.diff(s) <= 0)

    def test_max_estimable_tau(self, fit):
        assert fit.max_estimable_tau() == pytest.approx(1 - math.exp(-11 / 6))
        single = nelson_aalen([5], [True])
        assert single.max_estimable_tau() == pytest.approx(1 - math.exp(-1))


class TestQuantile:
    @pytest.fixture
    def fit(self):
        return nelson_aalen([1, 2, 3], [True, True, True])

    def test_invertible_level(self, fit):
        assert fit.quantile(0.3, TailRule.LARGEST_OBSERVATION, [1, 2, 3],
                            [1, 1, 1]) == 2.0

    def test_tail_largest_observation(self, fit):
        assert fit.quantile(0.9, TailRule.LARGEST_OBSERVATION, [1, 2, 3],
                            [1, 1, 1]) == 3.0

    def test_tail_largest_uncensored(self):
        fit = nelson_aalen([1, 2, 5], [True, True, False])
        q = fit.quantile(0.95, TailRule.LARGEST_UNCENSORED, [1, 2, 5],
                         [True, True, False])
        assert q == 2.0

    def test_tail_exponential(self):
        fit = nelson_aalen([5], [True])
        q = fit.quantile(0.9, TailRule.EXPONENTIAL, [5], [True])
        assert q == pytest.approx(-5 * math.log(0.1))

    def test_invalid_tau(self, fit):
        for tau in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(InvalidTau):
                fit.quantile(tau, TailRule.LARGEST_OBSERVATION, [1], [True])

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(2)
        for rule in TailRule:
            for _ in range(30):
                n = rng.integers(2, 15)
                times = rng.exponential(2.0, size=n) + 0.1
                events = rng.random(n) < 0.7
                if not events.any():
                    continue
                fit = nelson_aalen(times, events)
                qs = fit.quantile_grid(np.linspace(0.05, 0.95, 19), rule,
                                       times, events)
                assert np.all(np.diff(qs) >= 0), rule


class TestCensoringFit:
    def test_all_events_gives_unit_survival(self):
        g = censoring_fit([1, 2, 3], [True, True, True], u=10)
        assert g.times.size == 0
        assert g.survival_at(2.0) == 1.0

    def test_single_censoring(self):
        g = censoring_fit([1, 2], [False, True], u=10)
        assert np.allclose(g.increments, [0.5])
        assert g.survival_at(1.0) == pytest.approx(math.exp(-0.5))

    def test_censored_after_horizon_is_not_an_event(self):
        g = censoring_fit([3], [False], u=2)
        assert g.times.size == 0


class TestIpcwWeight:
    def test_beyond_horizon_counts_as_observed(self):
        g = censoring_fit([3], [True], u=2)
        assert ipcw_weight(3.0, False, 2.0, g, floor=0.05) == 1.0

    def test_censored_before_horizon_is_zero(self):
        g = censoring_fit([1.5], [False], u=10)
        assert ipcw_weight(1.5, False, 10.0, g, floor=0.05) == 0.0

    def test_weight_inverts_left_limit(self):
        g = censoring_fit([1, 2], [False, True], u=10)
        w = ipcw_weight(2.0, True, 10.0, g, floor=0.01)
        assert w == pytest.approx(math.exp(0.5))

    def test_weight_at_least_one_when_observed(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            n = rng.integers(2, 12)
            y = rng.exponential(1.0, n)
            d = rng.random(n) < 0.6
            u = float(np.quantile(y, 0.9))
            g = censoring_fit(y, d, u)
            w = ipcw_weights(y, d, u, g, floor=0.05)
            observed = (y > u) | d
            assert np.all(w[observed] >= 1.0)
            assert np.all(w[~observed] == 0.0)

    def test_vector_matches_scalar(self):
        rng = np.random.default_rng(4)
        y = rng.exponential(1.0, 20)
        d = rng.random(20) < 0.5
        g = censoring_fit(y, d, u=1.5)
        w = ipcw_weights(y, d, 1.5, g, floor=0.05)
        for i in range(20):
            assert w[i] == ipcw_weight(y[i], bool(d[i]), 1.5, g, floor=0.05)


class TestStepSurvivalValidation:
    def test_rejects_unsorted_times(self):
        from gcqrf import BadInput
        with pytest.raises(BadInput):
            StepSurvival(np.array([2.0, 1.0]), np.array([0.1, 0.2]),
                         np.array([2, 1]))

    def test_rejects_negative_increment(self):
        from gcqrf import BadInput
        with pytest.raises(BadInput):
            StepSurvival(np.array([1.0, 2.0]), np.array([0.1, -0.2]),
                         np.array([2, 1]))
