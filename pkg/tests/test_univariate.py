import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import ndtri

from destructor_it.errors import DegenerateDimension, InputError, OutOfDomain, TooFewSamples
from destructor_it.univariate import (
    MAX_BINS,
    Correction,
    EmpiricalCdf,
    Target,
    apply_marginal,
    default_bins,
    entropy_hist,
    fit_empirical_cdf,
    fit_marginal,
    inverse_marginal,
    log_abs_derivative,
    marginal_negentropy,
)

from oracles import HALF_LOG_2PI_E, UNIFORM_NEGENTROPY, plugin_entropy_loop

# numerical integration of the +-3 unit-variance mixture KLD (oracles.mixture_negentropy)
MIXTURE_3_NEGENTROPY = 0.46199461346806414

samples_strategy = arrays(
    np.float64, st.integers(2, 300),
    elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
)


def _distinct(x):
    # spans below ~1e-9 of the magnitude leave no room for a strictly increasing map
    u = np.unique(x)
    return (u.size >= 2 and np.ptp(x) > 1e-9 * max(1.0, np.abs(x).max())
            and np.diff(u).min() > 1e-290)


class TestEmpiricalCdf:
    def test_uniform_grid_median(self):
        cdf = fit_empirical_cdf(np.arange(1000) / 999.0)
        assert 0.49 <= cdf(0.5) <= 0.51

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateDimension):
            fit_empirical_cdf([2.0, 2.0, 2.0])

    def test_knot_and_clamp_validation(self):
        with pytest.raises(InputError):
            fit_empirical_cdf(np.arange(10.0), n_knots=4)
        with pytest.raises(InputError):
            fit_empirical_cdf(np.arange(10.0), clamp_epsilon=0.5)
        with pytest.raises(TooFewSamples):
            fit_empirical_cdf([1.0])

    @given(samples_strategy, st.sampled_from([1e-6, 1e-4, 1e-3]))
    def test_invariants(self, x, eps):
        assume(_distinct(x))
        cdf = fit_empirical_cdf(x, clamp_epsilon=eps)
        assert np.all(np.diff(cdf.support) > 0)
        assert np.all(np.diff(cdf.cdf_values) > 0)
        assert cdf.cdf_values[0] == eps and cdf.cdf_values[-1] == 1 - eps
        assert np.all((cdf.cdf_values >= eps) & (cdf.cdf_values <= 1 - eps))
        span = x.max() - x.min()
        assert cdf.tail_extension == pytest.approx(0.1 * span)
        # far below the padded support the CDF is exactly the clamp
        assert cdf(x.min() - 2 * span) == eps
        assert cdf(x.max() + 2 * span) == 1 - eps

    def test_subnormal_gap_is_degenerate(self):
        with pytest.raises(DegenerateDimension):
            fit_empirical_cdf([0.0, 1.0, 2.2e-313])

    def test_rejects_non_monotone_tables(self):
        with pytest.raises(InputError):
            EmpiricalCdf(np.array([0.0, 1.0, 1.0]), np.array([0.1, 0.5, 0.9]), 0.1, 1e-6, 3)

    def test_knot_count_bounded(self, rng):
        cdf = fit_empirical_cdf(rng.standard_normal(50000))
        assert cdf.support.size < 1500


class TestMarginalMap:
    def test_median_maps_to_zero(self, rng):
        x = rng.standard_normal(2001) * 3 + 7
        m = fit_marginal(x)
        assert abs(apply_marginal(m, np.median(x))) < 0.05

    def test_identity_target_on_uniform(self, rng):
        u = rng.uniform(size=10000)
        m = fit_marginal(u, Target.IDENTITY)
        exact_rank = np.mean(u <= 0.25)
        assert 0.23 <= apply_marginal(m, 0.25) <= 0.27
        assert abs(apply_marginal(m, 0.25) - exact_rank) < 1e-3

    @pytest.mark.parametrize("target", list(Target))
    def test_round_trip_held_in(self, rng, target):
        x = rng.gamma(2.0, size=5000)
        m = fit_marginal(x, target)
        pts = x[:100]
        assert np.max(np.abs(inverse_marginal(m, apply_marginal(m, pts)) - pts)) < 1e-8

    @given(samples_strategy, st.sampled_from(list(Target)))
    def test_strictly_monotone_and_invertible(self, x, target):
        assume(_distinct(x))
        m = fit_marginal(x, target)
        lo, hi = x.min(), x.max()
        span = hi - lo
        v = np.linspace(lo - 0.5 * span, hi + 0.5 * span, 997)
        y = m.forward(v)
        assert np.all(np.diff(y) >= 0)
        # identity tails decay to the clamp exponentially and saturate in double precision
        strict = v if target is Target.GAUSSIAN else v[(v >= m.cdf.support[0]) & (v <= m.cdf.support[-1])]
        assert np.all(np.diff(m.forward(strict)) > 0)
        inner = (v >= lo) & (v <= hi)
        back = m.inverse(y[inner])
        assert np.max(np.abs(back - v[inner])) <= 1e-8 * max(1.0, np.abs(v).max())

    def test_gaussian_inverse_accepts_any_real(self, rng):
        m = fit_marginal(rng.standard_normal(1000))
        v = m.inverse(np.array([-40.0, -6.0, 0.0, 6.0, 40.0]))
        assert np.all(np.isfinite(v)) and np.all(np.diff(v) > 0)

    def test_identity_inverse_domain(self, rng):
        m = fit_marginal(rng.uniform(size=500), Target.IDENTITY)
        with pytest.raises(OutOfDomain):
            m.inverse(np.array([0.5, 1.0]))

    def test_gaussian_tails_reach_clamp_quantiles(self, rng):
        x = rng.standard_normal(3000)
        m = fit_marginal(x, clamp_epsilon=1e-6)
        lo, hi = m.cdf.support[0], m.cdf.support[-1]
        assert m.forward(np.array([lo]))[0] == pytest.approx(ndtri(1e-6), abs=1e-9)
        assert m.forward(np.array([hi]))[0] == pytest.approx(-ndtri(1e-6), abs=1e-9)


class TestLogDerivative:
    @pytest.mark.parametrize("target", list(Target))
    def test_matches_finite_differences(self, target):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(20000)
        m = fit_marginal(x, target)
        h = 1e-7
        pts = rng.uniform(np.quantile(x, 0.01), np.quantile(x, 0.99), 50)
        knots = m.cdf.support
        # keep the stencil inside one linear piece of the CDF
        nearest = np.min(np.abs(pts[:, None] - knots[None, :]), axis=1)
        pts = pts[nearest > 10 * h]
        fd = (m.forward(pts + h) - m.forward(pts - h)) / (2 * h)
        analytic = np.exp(log_abs_derivative(m, pts))
        np.testing.assert_allclose(analytic, fd, rtol=1e-3)

    @staticmethod
    def _uniform_slope(seed):
        u = np.random.default_rng(seed).uniform(size=10000)
        m = fit_marginal(u, Target.IDENTITY)
        h = 1e-5
        fd = (m.forward(0.5 + h) - m.forward(0.5 - h)) / (2 * h)
        return math.log(fd), log_abs_derivative(m, np.array([0.5]))[0]

    def test_identity_on_uniform_matches_oracle(self):
        for seed in range(10):
            fd, analytic = self._uniform_slope(seed)
            assert analytic == pytest.approx(fd, abs=1e-3)

    def test_identity_on_uniform_slope_spread(self):
        # one piece spans ~10 order statistics, so the log slope is a
        # log-Gamma(10) draw centred near 0 with spread ~0.32
        logs = np.array([self._uniform_slope(s)[1] for s in range(100)])
        assert abs(np.median(logs)) < 0.1
        assert 0.2 < logs.std() < 0.45

    @pytest.mark.xfail(strict=True, reason="a 1000-knot table at N=10000 has |log slope| ~0.24 at v=0.5")
    def test_identity_on_uniform_within_015(self, rng):
        assert abs(self._uniform_slope(20260)[1]) < 0.15

    @pytest.mark.parametrize("target", list(Target))
    def test_finite_in_tails(self, rng, target):
        x = rng.standard_normal(1000)
        m = fit_marginal(x, target)
        far = np.array([x.min() - 3.0, x.max() + 3.0])
        assert np.all(np.isfinite(log_abs_derivative(m, far)))

    def test_is_density_ratio(self, rng):
        # log f_hat(v) - log phi(Phi^-1(F(v))) inside the sample range
        x = rng.standard_normal(5000)
        m = fit_marginal(x)
        v = np.linspace(-1.5, 1.5, 31)
        z = m.forward(v)
        expected = np.log(m.cdf.density(v)) + 0.5 * z * z + 0.5 * math.log(2 * math.pi)
        np.testing.assert_allclose(log_abs_derivative(m, v), expected, rtol=0, atol=1e-12)


class TestEntropyHist:
    def test_matches_loop_reference(self, rng):
        x = rng.standard_normal(2000)
        for corr, mm in ((Correction.NONE, False), (Correction.MILLER_MADOW, True)):
            est = entropy_hist(x, 37, corr)
            assert est.value == pytest.approx(plugin_entropy_loop(list(x), 37, mm), abs=1e-10)

    def test_uniform(self, rng):
        assert abs(entropy_hist(rng.uniform(size=50000), 100).value) < 0.02

    def test_standard_gaussian(self, rng):
        assert entropy_hist(rng.standard_normal(50000)).value == pytest.approx(HALF_LOG_2PI_E, abs=0.02)

    def test_scaled_gaussian(self, rng):
        h1 = entropy_hist(rng.standard_normal(50000)).value
        h2 = entropy_hist(2 * rng.standard_normal(50000)).value
        assert h2 == pytest.approx(h1 + math.log(2), abs=0.03)

    @pytest.mark.parametrize("a", [0.5, 2.0, 5.0])
    def test_shift_law(self, rng, a):
        x = rng.standard_normal(50000)
        diff = entropy_hist(a * x - 3.0).value - entropy_hist(x).value
        assert diff == pytest.approx(math.log(a), abs=0.03)

    def test_default_bins(self):
        assert default_bins(100) == 10
        assert default_bins(50000) == 224
        assert default_bins(10**7) == MAX_BINS

    def test_errors(self, rng):
        with pytest.raises(TooFewSamples):
            entropy_hist(rng.standard_normal(31))
        with pytest.raises(InputError):
            entropy_hist(rng.standard_normal(100), 3)
        with pytest.raises(DegenerateDimension):
            entropy_hist(np.ones(100))

    def test_record_fields(self, rng):
        est = entropy_hist(rng.standard_normal(400))
        assert est.n_samples == 400 and est.n_bins == 20
        assert est.correction is Correction.MILLER_MADOW
        assert 1 <= est.occupied_bins <= 20


class TestMarginalNegentropy:
    def test_gaussian(self, rng):
        assert marginal_negentropy(rng.standard_normal(50000)).value < 0.02

    def test_uniform(self, rng):
        j = marginal_negentropy(rng.uniform(size=50000)).value
        assert j == pytest.approx(UNIFORM_NEGENTROPY, abs=0.02)

    def test_bimodal_mixture(self, rng):
        x = rng.standard_normal(50000) + np.where(rng.random(50000) < 0.5, -3.0, 3.0)
        j = marginal_negentropy(x).value
        assert j >= 0.15
        assert j == pytest.approx(MIXTURE_3_NEGENTROPY, abs=0.03)

    def test_clamped_with_raw_kept(self):
        for seed in range(20):
            est = marginal_negentropy(np.random.default_rng(seed).standard_normal(10000))
            assert est.value >= 0 and est.value == max(0.0, est.raw)
            assert est.raw >= -0.03

    def test_zero_variance(self):
        with pytest.raises(DegenerateDimension):
            marginal_negentropy(np.full(100, 4.0))
