import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scapa.seqstats import (
    PHI_INV_75,
    Baseline,
    baseline_update,
    estimate_ar1,
    initial_quantile,
    update_quantile,
)


class TestInitialQuantile:
    def test_hand_trace_median(self):
        # burn-in [1..5]: xi = 3, IQR = 4 - 2 = 2 (linear interpolation),
        # c = (d0/M) * sum i^{-1/2}, f = #{|x - xi| <= c} / (2 c M)
        st_ = initial_quantile([1, 2, 3, 4, 5], 0.5)
        assert st_.xi == 3.0
        assert st_.d0 == 0.5
        assert st_.d == 0.5
        assert st_.i == 0
        c = (0.5 / 5) * math.fsum(1 / math.sqrt(i) for i in range(1, 6))
        assert c == pytest.approx(0.32317, abs=1e-5)
        assert st_.f_hat == pytest.approx(1.0 / (2 * c * 5), rel=1e-12)
        assert st_.f_hat == pytest.approx(0.3094, abs=1e-4)

    def test_constant_burn_in_rejected(self):
        with pytest.raises(ValueError, match="constant burn-in"):
            initial_quantile([7.0, 7.0, 7.0, 7.0], 0.5)

    def test_short_burn_in_rejected(self):
        with pytest.raises(ValueError, match="at least 4"):
            initial_quantile([1.0, 2.0, 3.0], 0.5)

    def test_bad_alpha_rejected(self):
        with pytest.raises(ValueError):
            initial_quantile([1, 2, 3, 4], 1.5)

    def test_median_of_gaussian_sample(self):
        x = np.random.default_rng(101).standard_normal(10_000)
        st_ = initial_quantile(x, 0.5)
        # seeded empirical median: equals the order-statistic quantile exactly
        assert st_.xi == float(np.quantile(x, 0.5))
        assert abs(st_.xi) < 0.05


class TestUpdateQuantile:
    def test_hand_trace_step(self):
        st_ = initial_quantile([1, 2, 3, 4, 5], 0.5)
        st_.d = 2.0  # forced to match the worked example
        update_quantile(st_, 10.0)
        # xi' = 3 - 2 * (1[10 <= 3] - 0.5) = 4
        assert st_.xi == 4.0
        # |xi' - x| = 6 > 1, so the density indicator misses and, at i = 0,
        # the running density restarts at zero; the clamp then sets d.
        assert st_.f_hat == 0.0
        assert st_.d == 0.5  # d0 * 1^{1/4}
        assert st_.i == 1

    def test_tie_moves_down(self):
        st_ = initial_quantile([1, 2, 3, 4, 5], 0.5)
        xi0, d0, i0 = st_.xi, st_.d, st_.i
        update_quantile(st_, xi0)
        assert st_.xi == xi0 - (d0 / (i0 + 1.0)) * 0.5

    def test_converges_to_gaussian_upper_quartile(self):
        rng = np.random.default_rng(7)
        st_ = initial_quantile(rng.standard_normal(1000), 0.75)
        st_.update_many(rng.standard_normal(100_000))
        assert abs(st_.xi - PHI_INV_75) < 0.05

    def test_batch_matches_sequential_updates(self):
        rng = np.random.default_rng(13)
        xs = rng.standard_normal(500)
        a = initial_quantile(xs[:100], 0.25)
        b = initial_quantile(xs[:100], 0.25)
        for x in xs[100:]:
            update_quantile(a, float(x))
        b.update_many(xs[100:])
        assert (a.xi, a.d, a.f_hat, a.i) == (b.xi, b.d, b.f_hat, b.i)

    @settings(max_examples=60, deadline=None)
    @given(
        alpha=st.floats(0.05, 0.95),
        xs=st.lists(st.floats(-50, 50), min_size=1, max_size=60),
    )
    def test_clamp_invariant(self, alpha, xs):
        st_ = initial_quantile([0.0, 1.0, 2.0, 3.0, 4.0], alpha)
        for x in xs:
            update_quantile(st_, x)
            clamp = st_.d0 * (st_.i + 1) ** 0.25
            assert st_.d <= clamp * (1 + 1e-12)
            assert st_.d * st_.f_hat <= 1 + 1e-12 or st_.d == pytest.approx(clamp)

    @settings(max_examples=60, deadline=None)
    @given(x=st.floats(-100, 100))
    def test_monotone_response_at_median(self, x):
        st_ = initial_quantile([0.0, 1.0, 2.0, 3.0, 4.0], 0.5)
        xi0 = st_.xi
        update_quantile(st_, x)
        if x > xi0:
            assert st_.xi >= xi0
        elif x < xi0:
            assert st_.xi <= xi0


class TestBaseline:
    def test_sigma_from_quartile_gap(self):
        rng = np.random.default_rng(23)
        b = Baseline.from_burn_in(rng.standard_normal(5000))
        # unit-normal IQR is 2 * PHI_INV_75, so sigma should be close to 1
        assert b.sigma_hat == pytest.approx(1.0, abs=0.1)
        assert b.mu_hat == pytest.approx(0.0, abs=0.1)
        # exact algebra whenever the guard has not fired
        for x in rng.standard_normal(200):
            baseline_update(b, float(x))
        assert b.crossed_count == 0
        assert b.sigma_hat * 2 * PHI_INV_75 == pytest.approx(
            b.q75.xi - b.q25.xi, rel=1e-12
        )
        assert b.mu_hat == b.q50.xi

    def test_forced_quartiles_give_unit_sigma(self):
        b = Baseline.from_burn_in([0.0, 1.0, 2.0, 3.0, 4.0])
        b.q25.xi = -PHI_INV_75
        b.q75.xi = PHI_INV_75
        b.q25.d = b.q75.d = b.q50.d = 0.0  # freeze the trackers
        baseline_update(b, 0.0)
        assert b.sigma_hat == pytest.approx(1.0, rel=1e-12)

    def test_median_identity(self):
        b = Baseline.from_burn_in([0.0, 1.0, 2.0, 3.0, 4.0])
        b.q50.xi = 7.3
        b.q50.d = 0.0
        baseline_update(b, 7.3)
        assert b.mu_hat == pytest.approx(7.3)

    def test_crossed_quartiles_hold_sigma(self):
        b = Baseline.from_burn_in([0.0, 1.0, 2.0, 3.0, 4.0])
        sigma_before = b.sigma_hat
        b.q25.xi, b.q75.xi = b.q75.xi, b.q25.xi  # force a crossing
        b.q25.d = b.q50.d = b.q75.d = 0.0
        baseline_update(b, 2.0)
        assert b.crossed_count == 1
        assert b.sigma_hat == sigma_before


class TestEstimateAr1:
    def test_iid_is_near_zero(self):
        x = np.random.default_rng(31).standard_normal(10_000)
        assert abs(estimate_ar1(x).phi_hat) < 0.05

    def test_recovers_known_autocorrelation(self):
        from scapa.simlab import gen_ar1

        x = gen_ar1(0.3, 10_000, seed=37)
        assert 0.25 <= estimate_ar1(x).phi_hat <= 0.35

    def test_outliers_do_not_wreck_estimate(self):
        from scapa.simlab import gen_ar1

        rng = np.random.default_rng(41)
        x = gen_ar1(0.3, 10_000, seed=41)
        idx = rng.choice(10_000, size=100, replace=False)
        x[idx] += rng.choice([-1, 1], size=100) * 50.0
        assert 0.2 <= estimate_ar1(x).phi_hat <= 0.4

    def test_constant_input_warns_and_returns_zero(self):
        with pytest.warns(UserWarning, match="constant"):
            assert estimate_ar1(np.ones(100)).phi_hat == 0.0

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="at least 30"):
            estimate_ar1(np.arange(10.0))

    def test_result_is_clamped(self):
        x = np.arange(1000.0)  # near-perfect trend, autocorrelation -> 1
        assert abs(estimate_ar1(x).phi_hat) <= 0.99
