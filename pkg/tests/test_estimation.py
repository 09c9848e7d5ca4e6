"""Tests for expectation-value estimators."""
import math

import numpy as np
import pytest

from softread.estimation import (
    Method,
    MixtureDistribution,
    MseReport,
    UninformativeReadoutError,
    _bisect_scores,
    _estimate_block,
    asymptotic_mse,
    bias_corrected_outcomes,
    fisher_information,
    log_likelihood,
    log_likelihood_curvature,
    mle_soft_decoded,
    mse_monte_carlo,
    overlap_integral,
    scaling_coefficients,
    score,
    soft_average,
    thresholded_average,
)
from softread.readout import ConditionalErrorRates, GaussianReadout, State, TabulatedReadout
from softread.repcode import MeasurementRecord
from softread.streams import block_rng

EPS_R2 = 0.5 * math.erfc(1.0)


def skewed_readout() -> GaussianReadout:
    """Gaussian readout thresholded off-center gives eps_+ != eps_-."""
    return GaussianReadout(1.5)


def separated_readout() -> TabulatedReadout:
    grid = np.linspace(-3.0, 3.0, 601)
    plus = np.where(grid > 0.5, 1.0, 0.0)
    minus = np.where(grid < -0.5, 1.0, 0.0)
    return TabulatedReadout.from_pdfs(grid, plus, minus)


def identical_readout() -> TabulatedReadout:
    grid = np.linspace(-5.0, 5.0, 1001)
    pdf = np.exp(-0.5 * grid ** 2)
    return TabulatedReadout.from_pdfs(grid, pdf, pdf)


class TestBiasCorrectedOutcomes:
    """Tests for bias_corrected_outcomes."""

    def test_perfect_readout(self):
        assert bias_corrected_outcomes(ConditionalErrorRates(0.0, 0.0, 0.0)) == (1.0, -1.0)

    def test_symmetric(self):
        c_plus, c_minus = bias_corrected_outcomes(ConditionalErrorRates(0.1, 0.1, 0.0))
        assert c_plus == pytest.approx(1.0 / 0.8)
        assert c_minus == -c_plus

    def test_asymmetric(self):
        c_plus, c_minus = bias_corrected_outcomes(ConditionalErrorRates(0.2, 0.1, 0.0))
        assert c_plus == pytest.approx(1.1 / 0.7)
        assert c_minus == pytest.approx(-0.9 / 0.7)

    def test_uninformative(self):
        with pytest.raises(UninformativeReadoutError):
            bias_corrected_outcomes(ConditionalErrorRates(0.6, 0.5, 0.0))


class TestThresholdedAverage:
    """Tests for thresholded_average."""

    def test_clamps_high(self, gaussian):
        assert thresholded_average([5.0, 6.0, 4.0], gaussian, 0.0) == 1.0

    def test_unclamped_exceeds_one(self, gaussian):
        assert thresholded_average([5.0, 6.0, 4.0], gaussian, 0.0, clamp=False) == pytest.approx(
            1.0 / (1.0 - 2.0 * EPS_R2))

    def test_half_and_half(self, gaussian):
        assert thresholded_average([1.0, -1.0, 0.5, -0.5], gaussian, 0.0) == 0.0

    def test_unbiased_before_clamping(self, rng):
        readout = skewed_readout()
        threshold = 0.4
        s0 = 0.3
        outcomes = MixtureDistribution(readout, s0).sample(1_000_000, rng)
        c_plus, c_minus = bias_corrected_outcomes(
            ConditionalErrorRates(float(readout.cdf(threshold, 1)),
                                  float(readout.upper_tail(threshold, -1)), threshold))
        values = np.where(outcomes > threshold, c_plus, c_minus)
        assert abs(values.mean() - s0) <= 4 * values.std() / math.sqrt(values.size)


class TestSoftAverage:
    """Tests for soft_average and scaling_coefficients."""

    def test_gaussian_coefficients(self, gaussian):
        a, b = scaling_coefficients(gaussian)
        assert a == pytest.approx(1.0, abs=1e-7)
        assert b == pytest.approx(0.0, abs=1e-7)

    def test_plain_mean_for_gaussian(self, gaussian):
        record = MeasurementRecord([0.2, -0.4, 0.5])
        assert soft_average(record, gaussian) == pytest.approx(0.1, abs=1e-7)

    def test_record_at_plus_mean(self, peak_readout):
        a, b = scaling_coefficients(peak_readout)
        mean_plus = a + b
        assert soft_average([mean_plus] * 4, peak_readout) == pytest.approx(1.0, abs=1e-9)

    def test_identical_means_raise(self):
        with pytest.raises(UninformativeReadoutError):
            scaling_coefficients(identical_readout())

    def test_unbiased_before_clamping(self, peak_readout, rng):
        s0 = -0.4
        coefficients = scaling_coefficients(peak_readout)
        outcomes = MixtureDistribution(peak_readout, s0).sample(1_000_000, rng)
        values = (outcomes - coefficients[1]) / coefficients[0]
        assert abs(values.mean() - s0) <= 4 * values.std() / math.sqrt(values.size)


class TestLikelihood:
    """Tests for the log-likelihood and its derivatives."""

    def test_score_matches_finite_difference(self, gaussian):
        record = MeasurementRecord([0.4, -0.9, 1.3, 0.1])
        h = 1e-6
        numeric = (log_likelihood(record, gaussian, 0.2 + h) - log_likelihood(record, gaussian, 0.2 - h)) / (2 * h)
        assert score(record, gaussian, 0.2) == pytest.approx(numeric, rel=1e-6)

    def test_curvature_matches_finite_difference(self, gaussian):
        record = MeasurementRecord([0.4, -0.9, 1.3, 0.1])
        h = 1e-5
        numeric = (score(record, gaussian, 0.2 + h) - score(record, gaussian, 0.2 - h)) / (2 * h)
        assert log_likelihood_curvature(record, gaussian, 0.2) == pytest.approx(numeric, rel=1e-5)

    def test_concavity(self, gaussian, peak_readout, rng):
        for readout in (gaussian, peak_readout):
            for _ in range(100):
                s0 = rng.uniform(-0.9, 0.9)
                record = MixtureDistribution(readout, s0).sample(20, rng)
                s = rng.uniform(-0.99, 0.99)
                assert log_likelihood_curvature(record, readout, s) < 0.0


class TestMleSoftDecoded:
    """Tests for mle_soft_decoded."""

    def test_single_outcome_hits_boundary(self, gaussian):
        assert mle_soft_decoded([0.7], gaussian) == 1.0
        assert mle_soft_decoded([-0.2], gaussian) == -1.0

    def test_matches_grid_scan(self, gaussian):
        record = [0.3, -1.2, 0.8]
        grid = np.linspace(-1.0, 1.0, 100_001)
        values = np.array([log_likelihood(record, gaussian, s) for s in grid])
        estimate = mle_soft_decoded(record, gaussian)
        best = log_likelihood(record, gaussian, estimate)
        assert estimate == pytest.approx(grid[np.argmax(values)], abs=2e-5)
        assert best >= values.max() - 1e-12
        assert best == pytest.approx(values.max(), abs=1e-6)

    def test_symmetric_record(self, gaussian):
        assert mle_soft_decoded([0.3, -0.3, 1.1, -1.1], gaussian) == pytest.approx(0.0, abs=1e-9)

    def test_large_record(self, rng):
        readout = GaussianReadout(2.0)
        s0 = 0.5
        record = MixtureDistribution(readout, s0).sample(10_000, rng)
        zeta = asymptotic_mse(readout, s0, Method.SD) / 10_000
        assert abs(mle_soft_decoded(record, readout) - s0) <= 3 * math.sqrt(zeta)

    def test_stationary_point(self, gaussian, rng):
        record = MixtureDistribution(gaussian, 0.1).sample(200, rng)
        estimate = mle_soft_decoded(record, gaussian)
        if -1.0 < estimate < 1.0:
            assert score(record, gaussian, estimate) == pytest.approx(0.0, abs=1e-8)

    def test_degenerate_record(self, caplog):
        readout = separated_readout()
        assert mle_soft_decoded([1.0, 2.0], readout) == 1.0
        assert "degenerate" in caplog.text

    def test_outcome_outside_support(self):
        with pytest.raises(ValueError):
            mle_soft_decoded([0.0], separated_readout())


class TestOverlapAndFisher:
    """Tests for overlap_integral and fisher_information."""

    def test_separated_readout_has_no_overlap(self):
        readout = separated_readout()
        assert overlap_integral(readout, 0.3) == pytest.approx(0.0, abs=1e-12)
        assert fisher_information(readout, 0.3) == pytest.approx(1.0 / (1.0 - 0.09))
        assert asymptotic_mse(readout, 0.3, Method.SD) == pytest.approx(1.0 - 0.09)

    def test_identical_readout_overlap_is_one(self):
        readout = identical_readout()
        assert overlap_integral(readout, 0.2) == pytest.approx(1.0, abs=1e-6)
        assert fisher_information(readout, 0.0) == pytest.approx(0.0, abs=1e-6)

    def test_gaussian_overlap_reproducible(self, gaussian):
        first = overlap_integral(gaussian, 0.0)
        assert overlap_integral(gaussian, 0.0) == first
        grid = np.linspace(-12.0, 12.0, 1_000_001)
        p = gaussian.pdf(grid, State.PLUS)
        q = gaussian.pdf(grid, State.MINUS)
        riemann = np.sum(p * q / (0.5 * (p + q))) * (grid[1] - grid[0])
        assert first == pytest.approx(riemann, rel=1e-6)
        assert 0.0 < first < 1.0

    @pytest.mark.parametrize("s0", [0.0, 0.5, -0.8])
    def test_dual_forms_gaussian(self, gaussian, s0):
        overlap_form = fisher_information(gaussian, s0, form="overlap")
        score_form = fisher_information(gaussian, s0, form="score")
        assert score_form == pytest.approx(overlap_form, rel=1e-6)

    @pytest.mark.parametrize("s0", [0.0, 0.4])
    def test_dual_forms_tabulated(self, peak_readout, s0):
        overlap_form = fisher_information(peak_readout, s0, form="overlap")
        score_form = fisher_information(peak_readout, s0, form="score")
        assert score_form == pytest.approx(overlap_form, rel=1e-6)

    def test_unknown_form(self, gaussian):
        with pytest.raises(ValueError):
            fisher_information(gaussian, 0.0, form="hessian")

    def test_boundary_s0_rejected(self, gaussian):
        with pytest.raises(ValueError):
            overlap_integral(gaussian, 1.0)

    @pytest.mark.parametrize("s0", [-0.9, 0.0, 0.9])
    def test_mixture_normalization(self, gaussian, peak_readout, s0):
        for readout in (gaussian, peak_readout):
            mixture = MixtureDistribution(readout, s0)
            assert readout.integrate(mixture.pdf) == pytest.approx(1.0, abs=1e-6)


class TestAsymptoticMse:
    """Tests for asymptotic_mse."""

    def test_thresholded_gaussian(self, gaussian):
        assert asymptotic_mse(gaussian, 0.0, Method.TA) == pytest.approx(1.408, abs=5e-4)
        assert asymptotic_mse(gaussian, 0.5, "TA") == pytest.approx(
            (1.0 - 2.0 * EPS_R2) ** -2 - 0.25, rel=1e-10)

    def test_soft_average_gaussian(self, gaussian):
        assert asymptotic_mse(gaussian, 0.0, Method.SA) == pytest.approx(1.5, abs=1e-6)
        assert asymptotic_mse(gaussian, -0.6, Method.SA) == pytest.approx(1.5 - 0.36, abs=1e-6)

    @pytest.mark.parametrize("s0", [-0.7, 0.0, 0.3, 0.9])
    @pytest.mark.parametrize("r", [0.5, 2.0, 8.0])
    def test_cramer_rao_ordering(self, r, s0):
        readout = GaussianReadout(r)
        sd = asymptotic_mse(readout, s0, Method.SD)
        assert sd <= asymptotic_mse(readout, s0, Method.TA) + 1e-8
        assert sd <= asymptotic_mse(readout, s0, Method.SA) + 1e-8

    def test_cramer_rao_ordering_tabulated(self, peak_readout):
        for s0 in (-0.5, 0.0, 0.5):
            sd = asymptotic_mse(peak_readout, s0, Method.SD)
            assert sd <= asymptotic_mse(peak_readout, s0, Method.TA) + 1e-6
            assert sd <= asymptotic_mse(peak_readout, s0, Method.SA) + 1e-6

    def test_low_snr_convergence(self):
        readout = GaussianReadout(0.1)
        sa = asymptotic_mse(readout, 0.0, Method.SA)
        sd = asymptotic_mse(readout, 0.0, Method.SD)
        assert sd / sa == pytest.approx(1.0, rel=0.02)

    def test_sd_excludes_pure_states(self, gaussian):
        with pytest.raises(ValueError):
            asymptotic_mse(gaussian, 1.0, Method.SD)

    def test_sd_identical_densities(self):
        with pytest.raises(UninformativeReadoutError):
            asymptotic_mse(identical_readout(), 0.0, Method.SD)


class TestMseReport:
    """Tests for MseReport."""

    def test_mse_is_variance_plus_bias_squared(self):
        report = MseReport.from_estimates(Method.SA, np.array([0.1, 0.3, 0.2, 0.6]), 0.25, 10)
        assert report.mse == report.variance + report.bias ** 2
        assert report.normalized_mse == 10 * report.mse

    def test_failures_are_excluded(self):
        report = MseReport.from_estimates(Method.SD, np.array([0.5, np.nan, 0.5]), 0.5, 4, failures=1)
        assert report.mse == 0.0
        assert report.failures == 1
        assert report.n_records == 3

    def test_clamped_count(self):
        report = MseReport.from_estimates(Method.TA, np.array([1.0, -1.0, 0.2]), 0.0, 4)
        assert report.clamped == 2


class TestMseMonteCarlo:
    """Tests for mse_monte_carlo."""

    def test_matches_asymptotics_gaussian(self, gaussian):
        results = {}
        for method in Method:
            report = mse_monte_carlo(gaussian, 0.0, method, 100, 20_000, seed=17)
            expected = asymptotic_mse(gaussian, 0.0, method)
            assert report.normalized_mse == pytest.approx(expected, rel=0.05)
            results[method] = report.normalized_mse
        assert results[Method.SD] <= results[Method.TA]
        assert results[Method.SD] <= results[Method.SA]

    def test_vectorized_mle_matches_scalar(self, gaussian):
        mixture = MixtureDistribution(gaussian, 0.3)
        estimates = _estimate_block(0, 40, 4, mixture=mixture, method=Method.SD, n=10, constants={})
        records = mixture.sample((40, 10), block_rng(4, 0))
        for record, estimate in zip(records, estimates):
            assert estimate == pytest.approx(mle_soft_decoded(record, gaussian), abs=1e-8)

    def test_bisection_flags_undecodable_rows(self):
        a = np.array([[1.0, 0.5], [0.0, 1.0]])
        b = np.array([[0.2, 1.0], [0.0, 0.3]])
        estimates = _bisect_scores(a, b)
        assert math.isfinite(estimates[0])
        assert math.isnan(estimates[1])

    def test_worker_count_invariance(self, gaussian):
        records = 2 * 1024 + 100
        single = mse_monte_carlo(gaussian, 0.2, Method.SD, 20, records, seed=8)
        pooled = mse_monte_carlo(gaussian, 0.2, Method.SD, 20, records, seed=8, workers=2)
        assert single == pooled

    def test_pure_state_runs(self, gaussian):
        report = mse_monte_carlo(gaussian, 1.0, Method.SD, 50, 500, seed=1)
        assert report.failures == 0
        assert report.clamped > 0

    def test_separated_readout_is_projection_noise(self):
        readout = separated_readout()
        report = mse_monte_carlo(readout, 0.0, Method.SD, 50, 4000, seed=2)
        assert report.failures == 0
        assert report.normalized_mse == pytest.approx(1.0, rel=0.1)

    def test_rejects_bad_counts(self, gaussian):
        with pytest.raises(ValueError):
            mse_monte_carlo(gaussian, 0.0, Method.TA, 0, 10, seed=1)

    @pytest.mark.slow
    @pytest.mark.parametrize("method", list(Method))
    def test_reference_protocol_gaussian(self, method):
        readout = GaussianReadout(2.0)
        report = mse_monte_carlo(readout, 0.0, method, 100, 50_000, seed=23, workers=0)
        assert report.normalized_mse == pytest.approx(asymptotic_mse(readout, 0.0, method), rel=0.05)

    @pytest.mark.slow
    @pytest.mark.parametrize("method", list(Method))
    def test_reference_protocol_peak(self, peak_readout, method):
        report = mse_monte_carlo(peak_readout, 0.0, method, 100, 50_000, seed=29, workers=0)
        assert report.normalized_mse == pytest.approx(asymptotic_mse(peak_readout, 0.0, method), rel=0.05)
