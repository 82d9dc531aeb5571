import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpforward.accounting import (
    CompositionLedger,
    LedgerFormatError,
    PlrvSpec,
    compose_basic,
    compose_gaussian_self,
    delta_for_epsilon,
    epsilon_for_delta,
    monte_carlo_delta_estimate,
    parse_ledger,
    plrv_tail_probabilities,
    verify_gaussian,
)
from dpforward.errors import DomainError, InvalidBudgetError
from dpforward.mechanisms import PrivacyBudget, amgm_calibrate, classical_gm_sigma, privacy_curve
from dpforward.numerics import RandomStream
from dpforward.sensitivity import SEQUENCE_LEVEL, SensitivityBound

from oracles import grid_bracket, mp_privacy_curve

CURVE_S1_EPS1 = 0.1269367375066439458008296


def test_plrv_moments():
    p = PlrvSpec.from_ratio(2.0)
    assert (p.mean, p.variance) == (2.0, 4.0)
    x = p.sample(RandomStream(5), 400_000)
    assert x.mean() == pytest.approx(2.0, abs=0.01)
    assert x.var() == pytest.approx(4.0, rel=0.01)


@given(st.floats(1e-2, 30.0), st.floats(0.0, 20.0))
def test_tails_recombine(s, eps):
    up, lo = plrv_tail_probabilities(s, eps)
    assert abs(max(0.0, up - math.exp(eps) * lo) - privacy_curve(s, eps)) <= 1e-12 * max(1.0, math.exp(eps) * lo)


class TestDeltaForEpsilon:
    def test_unit_ratio(self):
        assert delta_for_epsilon(2.0, 2.0, 1.0) == pytest.approx(CURVE_S1_EPS1, abs=1e-15)

    def test_vanishing_ratio(self):
        assert delta_for_epsilon(1e9, 1.0, 0.5) == pytest.approx(0.0, abs=1e-9)

    def test_scale_invariant(self):
        assert delta_for_epsilon(3.0, 1.5, 2.0) == delta_for_epsilon(2.0, 1.0, 2.0)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            delta_for_epsilon(0.0, 1.0, 1.0)


class TestEpsilonForDelta:
    @pytest.mark.parametrize("s", [0.05, 0.5, 1.0, 3.0, 10.0])
    @pytest.mark.parametrize("delta", [1e-9, 1e-5, 1e-2])
    def test_round_trip(self, s, delta):
        eps = epsilon_for_delta(1.0, s, delta)
        if eps == 0.0:
            assert privacy_curve(s, 0.0) <= delta
        else:
            assert delta_for_epsilon(1.0, s, eps) == pytest.approx(delta, abs=1e-10 * delta)

    def test_zero_when_noise_dominates(self):
        assert epsilon_for_delta(1e6, 1.0, 0.1) == 0.0

    def test_grid_scan(self):
        # coarse high-precision scan, then a 1e-4 grid around the crossing
        coarse = np.arange(0.0, 20.0, 0.1)
        k = next(i for i, e in enumerate(coarse) if mp_privacy_curve(2.0, e) <= 1e-5)
        fine = np.arange(coarse[k - 1], coarse[k] + 1e-4, 1e-4)
        fine_vals = np.array([float(mp_privacy_curve(2.0, e)) for e in fine])
        lo, hi = grid_bracket(-fine_vals, fine, -1e-5)
        assert lo <= epsilon_for_delta(1.0, 2.0, 1e-5) <= hi

    def test_inverse_of_calibration(self):
        budget = PrivacyBudget(3.0, 1e-6)
        calib = amgm_calibrate(SensitivityBound(2.0, SEQUENCE_LEVEL), budget)
        assert epsilon_for_delta(calib.sigma, 2.0, 1e-6) == pytest.approx(3.0, rel=1e-8)

    def test_invalid_delta(self):
        with pytest.raises(InvalidBudgetError):
            epsilon_for_delta(1.0, 1.0, 0.0)


class TestSelfComposition:
    def test_single_is_identity(self):
        assert compose_gaussian_self(1, 2.0, 1.0, 1e-5) == epsilon_for_delta(2.0, 1.0, 1e-5)

    @settings(max_examples=50)
    @given(st.integers(1, 400), st.floats(0.5, 50.0))
    def test_matches_scaled_noise(self, k, sigma):
        assert compose_gaussian_self(k, sigma, 1.0, 1e-5) == pytest.approx(
            epsilon_for_delta(sigma / math.sqrt(k), 1.0, 1e-5), rel=1e-12
        )

    def test_tighter_than_summing(self):
        k, sigma = 16, 4.0
        single = epsilon_for_delta(sigma, 1.0, 1e-5 / k)
        assert compose_gaussian_self(k, sigma, 1.0, 1e-5) < k * single

    def test_monotone_in_k(self):
        eps = [compose_gaussian_self(k, 5.0, 1.0, 1e-5) for k in (1, 2, 4, 8, 16)]
        assert all(a < b for a, b in zip(eps, eps[1:]))

    def test_bad_k(self):
        with pytest.raises(DomainError):
            compose_gaussian_self(0, 1.0, 1.0, 1e-5)


class TestBasicComposition:
    def test_sum(self):
        ledger = CompositionLedger()
        ledger.add("forward", 1.0, 1e-5)
        ledger.add("labels", 0.03, 0.0)
        assert compose_basic(ledger) == pytest.approx((1.03, 1e-5))

    def test_pure_dp_total(self):
        ledger = CompositionLedger()
        ledger.add("a", 0.5, 0.0)
        out = compose_basic(ledger)
        assert out.delta == 0.0
        with pytest.raises(InvalidBudgetError):
            out.to_budget()

    def test_empty(self):
        with pytest.raises(DomainError):
            compose_basic(CompositionLedger())

    def test_add_validates(self):
        with pytest.raises(InvalidBudgetError):
            CompositionLedger().add("x", -1.0, 0.0)
        with pytest.raises(InvalidBudgetError):
            CompositionLedger().add("x", 1.0, 1.0)

    def test_parse(self):
        text = "# tag eps delta\nforward 1.0 1e-5\n\nlabels 0.03 0  # rr\n"
        ledger = parse_ledger(text)
        assert [e.tag for e in ledger.entries] == ["forward", "labels"]
        assert compose_basic(ledger).epsilon == pytest.approx(1.03)

    @pytest.mark.parametrize("text", ["a 1.0\n", "a 1 x\n", "a -1 0\n", "a 1 0 extra\n"])
    def test_parse_errors(self, text):
        with pytest.raises(LedgerFormatError):
            parse_ledger(text)


class TestMonteCarlo:
    def test_agrees_with_closed_form(self):
        sigma = 1.0
        est, se = monte_carlo_delta_estimate(sigma, 1.0, 1.0, 1_000_000, RandomStream(42))
        assert abs(est - CURVE_S1_EPS1) <= 4 * se

    def test_deterministic(self):
        a = monte_carlo_delta_estimate(0.5, 1.0, 2.0, 20_000, RandomStream(3))
        b = monte_carlo_delta_estimate(0.5, 1.0, 2.0, 20_000, RandomStream(3))
        assert a == b

    def test_min_trials(self):
        with pytest.raises(DomainError):
            monte_carlo_delta_estimate(1.0, 1.0, 1.0, 9_999, RandomStream(1))

    def test_chunking_does_not_change_count(self):
        # 1.5 chunks: the estimator still averages over every draw
        est, se = monte_carlo_delta_estimate(0.7, 1.0, 0.5, 1_500_000, RandomStream(6))
        assert abs(est - delta_for_epsilon(0.7, 1.0, 0.5)) <= 4 * se


class TestVerify:
    def test_calibrated_passes(self):
        budget = PrivacyBudget(1.0, 1e-3)
        sigma = amgm_calibrate(SensitivityBound(1.0, SEQUENCE_LEVEL), budget).sigma
        res = verify_gaussian(sigma, 1.0, budget, 1_000_000, RandomStream(42))
        assert res.verdict == "PASS"
        assert res.closed_form_delta == pytest.approx(1e-3, abs=1e-9)

    def test_classical_passes(self):
        budget = PrivacyBudget(0.5, 1e-3)
        res = verify_gaussian(classical_gm_sigma(1.0, budget), 1.0, budget, 100_000, RandomStream(1))
        assert res.passed

    def test_underscaled_fails(self):
        budget = PrivacyBudget(1.0, 1e-3)
        sigma = amgm_calibrate(SensitivityBound(1.0, SEQUENCE_LEVEL), budget).sigma
        res = verify_gaussian(0.5 * sigma, 1.0, budget, 1_000_000, RandomStream(42))
        assert res.verdict == "FAIL"
        assert res.delta_hat > budget.delta + 4 * res.std_err
