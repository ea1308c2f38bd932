import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agpchaos.scaling_analysis import (
    ExponentialFit,
    FitError,
    ScalingSeries,
    crossover_analysis,
    exponential_window,
    fit_exponential,
    fit_exponential_fixed_slope,
    fit_polynomial,
    locate_crossover,
    relaxation_exponents,
)

L = np.arange(8, 17)


def synthetic_family(beta=1.3, alpha=0.8, slope=0.0, intercept=0.8, strengths=(1e-3, 3e-3, 1e-2)):
    """Flat integrable branch plus series exp(beta L) eps^(beta/alpha) crossing it."""
    integrable = ScalingSeries(L, slope * L + intercept)
    perturbed = []
    for eps in strengths:
        exp_part = np.exp(beta * L) * eps ** (beta / alpha) * 1e-3
        perturbed.append(ScalingSeries(L, np.maximum(slope * L + intercept, exp_part), "eps_d", eps))
    return integrable, perturbed


class TestSeries:
    def test_validation(self):
        with pytest.raises(FitError):
            ScalingSeries([1, 2], [1.0])
        with pytest.raises(FitError):
            ScalingSeries([3, 2, 4], [1.0, 2.0, 3.0])

    def test_window(self):
        s = ScalingSeries(L, L * 1.0).window(skip_smallest=2, L_min=11)
        assert s.L.tolist() == [11, 12, 13, 14, 15, 16]


class TestFits:
    def test_exact_exponential(self):
        fit = fit_exponential(ScalingSeries(L, 0.02 * np.exp(0.9 * L)))
        assert fit.beta == pytest.approx(0.9, rel=1e-12)
        assert fit.prefactor == pytest.approx(0.02, rel=1e-10)
        assert fit.rms < 1e-12
        assert fit(10) == pytest.approx(0.02 * np.exp(9.0), rel=1e-10)

    def test_exact_line(self):
        fit = fit_polynomial(ScalingSeries(L, 0.09 * L - 0.56))
        assert fit.coefficients == pytest.approx((0.09, -0.56), rel=1e-10)
        assert np.max(np.abs(fit.log_residuals(ScalingSeries(L, 0.09 * L - 0.56)))) < 1e-12

    def test_loglog(self):
        fit = fit_polynomial(ScalingSeries(L, 3.0 * L**1.5), mode="loglog")
        assert fit.coefficients[0] == pytest.approx(1.5, rel=1e-12)
        assert fit(20.0) == pytest.approx(3.0 * 20**1.5, rel=1e-10)

    def test_fixed_slope(self):
        fit = fit_exponential_fixed_slope(ScalingSeries(L, 5.0 * np.exp(0.7 * L)), 0.7)
        assert fit.prefactor == pytest.approx(5.0, rel=1e-12)

    def test_line_rejects_exponential(self):
        s = ScalingSeries(L, 0.09 * L - 0.56)
        exp_rms = fit_exponential(s).rms
        poly_rms = np.sqrt(np.mean(fit_polynomial(s).log_residuals(s) ** 2))
        assert exp_rms > 5 * poly_rms

    def test_parity_term(self):
        wiggle = np.where(L % 2 == 0, 0.3, -0.3)
        s = ScalingSeries(L, 0.02 * np.exp(0.7 * L + wiggle))
        fit = fit_exponential(s, parity=True)
        assert fit.beta == pytest.approx(0.7, rel=1e-12)
        assert fit.parity == pytest.approx(0.3, rel=1e-10)
        assert fit(L) == pytest.approx(s.values, rel=1e-10)
        # an even-to-odd window biases the plain fit
        short = ScalingSeries(L[2:6], s.values[2:6])
        assert abs(fit_exponential(short).beta - 0.7) > 0.05
        assert fit_exponential(short, parity=True).beta == pytest.approx(0.7, rel=1e-10)
        with pytest.raises(FitError):
            fit_exponential(ScalingSeries([8, 10, 12, 14], [1.0, 2.0, 4.0, 8.0]), parity=True)

    def test_failures(self):
        with pytest.raises(FitError):
            fit_exponential(ScalingSeries([1, 2, 3], [1.0, 2.0, 3.0]))
        with pytest.raises(FitError):
            fit_exponential(ScalingSeries(L, -np.ones(L.size)))
        with pytest.raises(FitError):
            fit_polynomial(ScalingSeries([1, 2], [1.0, 2.0]))
        with pytest.raises(ValueError):
            fit_polynomial(ScalingSeries(L, L * 1.0), mode="cubic")

    @settings(max_examples=50, deadline=None)
    @given(
        beta=st.floats(0.1, 2.0),
        log_a=st.floats(-10, 5),
        noise_seed=st.integers(0, 2**31),
    )
    def test_idempotence(self, beta, log_a, noise_seed):
        rng = np.random.default_rng(noise_seed)
        s = ScalingSeries(L, np.exp(log_a + beta * L + rng.normal(scale=0.1, size=L.size)))
        first = fit_exponential(s)
        again = fit_exponential(ScalingSeries(L, first(L)))
        assert again.beta == pytest.approx(first.beta, rel=1e-9, abs=1e-12)
        assert again.prefactor == pytest.approx(first.prefactor, rel=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(shift=st.integers(-5, 20), beta=st.floats(0.2, 1.5))
    def test_shift_invariance(self, shift, beta):
        base = fit_exponential(ScalingSeries(L, np.exp(beta * L) * (1 + 0.05 * np.sin(L))))
        moved = fit_exponential(ScalingSeries(L + shift, np.exp(beta * L) * (1 + 0.05 * np.sin(L))))
        assert moved.beta == pytest.approx(base.beta, rel=1e-9)
        assert math.log(moved.prefactor) == pytest.approx(math.log(base.prefactor) - base.beta * shift, abs=1e-8)


class TestCrossover:
    def test_known_intersection(self):
        poly = fit_polynomial(ScalingSeries(L, 0.1 * L))
        exp = ExponentialFit(1.0, math.exp(-12.0) * 1.2, np.zeros(1))
        cross = locate_crossover(poly, exp, (8, 16))
        assert 1.2 * math.exp(cross.L_star - 12.0) == pytest.approx(0.1 * cross.L_star, rel=1e-6)
        assert not cross.extrapolated

    def test_no_intersection(self):
        poly = fit_polynomial(ScalingSeries(L, 0.1 * L))
        with pytest.raises(FitError):
            locate_crossover(poly, ExponentialFit(1.0, 1e-30, np.zeros(1)), (8, 16))

    def test_extrapolated_flag(self):
        poly = fit_polynomial(ScalingSeries(L, 0.1 * L))
        cross = locate_crossover(poly, ExponentialFit(1.0, math.exp(-17.5), np.zeros(1)), (8, 16))
        assert cross.extrapolated and cross.L_star > 16

    def test_recovers_synthetic_exponents(self):
        integrable, perturbed = synthetic_family()
        rep = crossover_analysis(integrable, perturbed, "synthetic")
        assert rep.beta == pytest.approx(1.3, rel=1e-9)
        assert rep.alpha == pytest.approx(0.8, rel=1e-6)
        assert rep.eta == pytest.approx(rep.beta / rep.alpha)
        assert rep.kappa == pytest.approx(1.3 - math.log(2))
        assert json.loads(rep.to_json())["series_id"] == "synthetic"

    def test_monotone_in_strength(self):
        integrable, perturbed = synthetic_family(strengths=(1e-4, 3e-4, 1e-3, 3e-3, 1e-2))
        rep = crossover_analysis(integrable, perturbed[::-1])
        assert rep.strengths == sorted(rep.strengths)
        assert np.all(np.diff(rep.L_star) < 0)

    def test_exponential_window(self):
        integrable, perturbed = synthetic_family()
        poly = fit_polynomial(integrable)
        s = perturbed[-1]
        w = exponential_window(s, poly)
        assert np.all(w.values >= 1.6 - 1e-12)
        assert w.L.tolist() == s.L[s.values >= 1.6 - 1e-12].tolist()

    def test_weak_series_falls_back_to_largest_size(self):
        integrable, perturbed = synthetic_family(strengths=(1e-6, 1e-2))
        rep = crossover_analysis(integrable, perturbed)
        assert rep.fit_windows["1e-06"] == [16.0, 16.0]
        assert rep.L_star[0] == pytest.approx(16.0)

    def test_needs_perturbed(self):
        integrable, _ = synthetic_family()
        with pytest.raises(FitError):
            crossover_analysis(integrable, [])


def test_relaxation_exponents():
    eta, kappa = relaxation_exponents(1.28, 0.8)
    assert eta == pytest.approx(1.6) and kappa == pytest.approx(1.28 - math.log(2))
    with pytest.raises(ValueError):
        relaxation_exponents(1.0, 0.0)
