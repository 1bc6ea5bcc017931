import math

import numpy as np
import pytest

from pipechain import CensoredInterval, binarize, turnbull_fit, turnbull_state_probs
from pipechain.errors import DataFormatError
from pipechain.turnbull import INF, evaluable_ages, fit_thresholds


def kaplan_meier(times, observed):
    """Independent product-limit oracle.

    Returns survival *after* the drop at each distinct event time
    (right-continuous convention).
    """
    times = np.asarray(times, dtype=float)
    observed = np.asarray(observed, dtype=bool)
    s = 1.0
    out = {}
    for t in sorted(set(times[observed])):
        at_risk = np.sum(times >= t)
        deaths = np.sum((times == t) & observed)
        s *= 1.0 - deaths / at_risk
        out[t] = s
    return out


class TestBinarize:
    def test_below_threshold_is_non_event(self):
        (iv,) = binarize([(12.0, 3)], k_bin=4)
        assert (iv.left, iv.right) == (12.0, INF)
        assert iv.left_closed and not iv.right_closed

    def test_at_threshold_is_event(self):
        (iv,) = binarize([(12.0, 4)], k_bin=4)
        assert (iv.left, iv.right) == (0.0, 12.0)
        assert iv.left_closed and not iv.right_closed

    def test_failure_exceeds_every_threshold(self):
        (iv,) = binarize([(12.0, 6)], k_bin=2)
        assert (iv.left, iv.right) == (0.0, 12.0)

    def test_threshold_one_rejected(self):
        with pytest.raises(DataFormatError):
            binarize([(12.0, 3)], k_bin=1)

    def test_unknown_state_rejected(self):
        with pytest.raises(DataFormatError):
            binarize([(12.0, 9)], k_bin=3)


class TestTurnbullFit:
    def test_all_non_events_give_unit_survival(self):
        curve = turnbull_fit([CensoredInterval.non_event(y) for y in (3.0, 10.0, 25.0)])
        for age in (0.0, 3.0, 10.0, 25.0):
            assert curve.evaluable(age)
            assert curve.survival(age) == pytest.approx(1.0, abs=1e-12)
        assert not curve.evaluable(25.1)

    def test_two_observation_hand_case(self):
        # NPMLE maximizes log p1 + log p2 with p1 + p2 = 1 -> (1/2, 1/2)
        curve = turnbull_fit([CensoredInterval.event(5.0), CensoredInterval.non_event(5.0)])
        np.testing.assert_allclose(sorted(curve.masses), [0.5, 0.5], atol=1e-9)
        assert curve.survival(5.0) == pytest.approx(0.5, abs=1e-9)

    def test_matches_kaplan_meier_on_right_censored_data(self, rng):
        for _ in range(5):
            n = 120
            times = rng.uniform(0.5, 60.0, size=n)
            observed = rng.uniform(size=n) < 0.6
            intervals = [
                CensoredInterval.exact(t) if o else CensoredInterval.non_event(t)
                for t, o in zip(times, observed)
            ]
            curve = turnbull_fit(intervals)
            for t, s_km in kaplan_meier(times, observed).items():
                assert curve.survival(t) == pytest.approx(s_km, abs=1e-6)

    def test_exact_data_reproduces_empirical_survival(self):
        times = [2.0, 2.0, 5.0, 9.0]
        curve = turnbull_fit([CensoredInterval.exact(t) for t in times])
        assert curve.survival(1.0) == pytest.approx(1.0, abs=1e-10)
        assert curve.survival(2.0) == pytest.approx(0.5, abs=1e-10)
        assert curve.survival(5.0) == pytest.approx(0.25, abs=1e-10)
        assert curve.survival(9.0) == pytest.approx(0.0, abs=1e-10)

    def test_em_monotone_loglik_and_valid_masses(self, rng):
        for _ in range(25):
            n = rng.integers(5, 60)
            ages = rng.uniform(1.0, 80.0, size=n)
            events = rng.uniform(size=n) < rng.uniform(0.2, 0.8)
            intervals = [
                CensoredInterval.event(a) if e else CensoredInterval.non_event(a)
                for a, e in zip(ages, events)
            ]
            curve = turnbull_fit(intervals)
            trace = curve.log_likelihood_trace
            assert np.all(np.diff(trace) >= -1e-10)
            assert curve.masses.min() >= 0.0
            assert curve.masses.sum() == pytest.approx(1.0, abs=1e-10)

    def test_convergence_flag_reports_the_residual(self):
        # hand case converges in one step; a slow case keeps flag honest
        fast = turnbull_fit([CensoredInterval.event(5.0), CensoredInterval.non_event(5.0)])
        assert fast.converged and fast.n_iterations <= 3
        slow = turnbull_fit(
            [CensoredInterval.event(5.0), CensoredInterval.non_event(5.0)], max_iterations=0
        )
        assert not slow.converged

    def test_empty_input_rejected(self):
        with pytest.raises(DataFormatError):
            turnbull_fit([])


class TestStateProbs:
    def test_all_pristine(self):
        obs = [(a, 1) for a in (5.0, 10.0, 20.0)]
        curve = turnbull_state_probs(obs, np.array([0.0, 5.0, 10.0, 20.0]))
        np.testing.assert_allclose(curve.probs[:, 0], 1.0, atol=1e-12)

    def test_all_failed_at_ten(self):
        obs = [(10.0, 6)] * 4
        curve = turnbull_state_probs(obs, np.array([10.0, 30.0]))
        np.testing.assert_allclose(curve.probs[:, 5], 1.0, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        obs = [(float(a), int(s)) for a, s in zip(rng.uniform(1, 70, 200), rng.integers(1, 7, 200))]
        ages = np.arange(1.0, 71.0)
        curves = fit_thresholds(obs)
        grid = evaluable_ages(curves, ages)
        curve = turnbull_state_probs(obs, grid)
        np.testing.assert_allclose(curve.probs.sum(axis=1), 1.0, atol=1e-9)

    def test_zero_event_threshold_keeps_unit_survival(self):
        # nobody at/above severity 3: that threshold curve stays at 1
        obs = [(10.0, 2), (20.0, 2), (30.0, 1)]
        curves = fit_thresholds(obs)
        for age in (0.0, 10.0, 30.0):
            assert curves[3].survival(age) == pytest.approx(1.0, abs=1e-12)
            assert curves[6].survival(age) == pytest.approx(1.0, abs=1e-12)


class TestIntervalValidation:
    def test_degenerate_interval_must_be_closed(self):
        with pytest.raises(DataFormatError):
            CensoredInterval(3.0, 3.0, True, False)

    def test_reversed_interval_rejected(self):
        with pytest.raises(DataFormatError):
            CensoredInterval(5.0, 3.0)
