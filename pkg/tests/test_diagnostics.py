import numpy as np
import pytest

from rankfactor.diagnostics import (ZeroVarianceError, autocorrelation,
                                    diagnostics_report, effective_sample_size,
                                    format_diagnostics_table, geweke)


def ar1(phi, n, seed, sigma=1.0):
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = rng.standard_normal() * sigma / np.sqrt(1 - phi**2)
    eps = rng.standard_normal(n) * sigma
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return x


class TestAutocorrelation:
    def test_lag_zero_is_one(self):
        rng = np.random.default_rng(0)
        rho = autocorrelation(rng.standard_normal(500), 10)
        assert rho[0] == 1.0

    def test_iid_chain_uncorrelated(self):
        rng = np.random.default_rng(1)
        rho = autocorrelation(rng.standard_normal(100_000), 5)
        assert abs(rho[1]) < 0.02

    def test_constant_chain_errors(self):
        with pytest.raises(ZeroVarianceError, match="zero variance"):
            autocorrelation(np.full(1000, 3.3), 5)

    def test_ar1_analytic_decay(self):
        # analytic rho_k = phi^k for a stationary AR(1)
        x = ar1(0.8, 100_000, seed=2)
        rho = autocorrelation(x, 2)
        assert 0.78 < rho[1] < 0.82
        assert 0.61 < rho[2] < 0.67

    def test_input_validation(self):
        with pytest.raises(ValueError):
            autocorrelation(np.arange(10.0), 10)
        with pytest.raises(ValueError):
            autocorrelation(np.arange(10.0), 0)


class TestEffectiveSampleSize:
    def test_iid_near_n(self):
        rng = np.random.default_rng(3)
        n = 10_000
        ess = effective_sample_size(rng.standard_normal(n))
        assert 0.9 * n < ess <= 1.1 * n

    def test_alternating_chain_clipped_to_n(self):
        n = 1000
        x = np.tile([1.0, -1.0], n // 2)
        ess = effective_sample_size(x)
        assert ess == n  # negative correlation clips at n

    def test_ar1_matches_analytic(self):
        # analytic ESS for AR(1): n (1 - phi) / (1 + phi)
        n = 100_000
        x = ar1(0.9, n, seed=4)
        expected = n * 0.1 / 1.9
        ess = effective_sample_size(x)
        assert abs(ess - expected) / expected < 0.15

    def test_bounds(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            x = ar1(0.99, 2000, seed=seed)
            ess = effective_sample_size(x)
            assert 1.0 <= ess <= 2000

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            effective_sample_size(np.zeros(500))

    def test_too_short(self):
        with pytest.raises(ValueError):
            effective_sample_size(np.arange(50.0))


class TestGeweke:
    def test_null_calibration(self):
        # under stationarity z is approximately standard normal
        n_inside = 0
        n_rep = 500
        for seed in range(n_rep):
            x = np.random.default_rng(seed).standard_normal(10_000)
            if abs(geweke(x)) < 1.96:
                n_inside += 1
        assert n_inside / n_rep >= 0.93

    def test_mean_step_detected(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(10_000)
        x[5000:] += 5.0
        assert abs(geweke(x)) > 5.0

    def test_linear_trend_detected(self):
        rng = np.random.default_rng(7)
        n = 10_000
        x = np.linspace(0.0, 1.0, n) + 0.01 * rng.standard_normal(n)
        assert abs(geweke(x)) > 1.96

    def test_zero_variance_window(self):
        x = np.concatenate([np.zeros(500), np.random.default_rng(8).standard_normal(500)])
        with pytest.raises(ZeroVarianceError):
            geweke(x)

    def test_too_short(self):
        with pytest.raises(ValueError):
            geweke(np.arange(100.0))


class TestAffineInvariance:
    def test_exact_under_power_of_two_scaling(self):
        # scaling by powers of two commutes exactly with IEEE arithmetic
        x = ar1(0.7, 5000, seed=9)
        base_ess = effective_sample_size(x)
        base_z = geweke(x)
        for a in (4.0, 0.25, -2.0):
            assert effective_sample_size(a * x) == base_ess
            assert abs(geweke(a * x)) == abs(base_z)

    def test_near_exact_under_general_affine(self):
        x = ar1(0.7, 5000, seed=10)
        y = 1.7 * x + 3.1
        assert effective_sample_size(y) == pytest.approx(
            effective_sample_size(x), rel=1e-12)
        assert abs(geweke(y)) == pytest.approx(abs(geweke(x)), rel=1e-9)
        rho_x = autocorrelation(x, 10)
        rho_y = autocorrelation(y, 10)
        np.testing.assert_allclose(rho_x, rho_y, rtol=1e-10)


class TestReport:
    def test_zero_variance_flagged_not_raised(self):
        rng = np.random.default_rng(11)
        report = diagnostics_report({
            "good": rng.standard_normal(1000),
            "stuck": np.full(1000, 2.0),
        })
        assert "ess" in report["good"]
        assert report["stuck"]["error"] == "zero variance"

    def test_table_with_reference_has_ratio(self):
        rng = np.random.default_rng(12)
        a = diagnostics_report({"p": rng.standard_normal(1000)})
        b = diagnostics_report({"p": ar1(0.9, 1000, seed=13)})
        text = format_diagnostics_table(a, b)
        assert "ess_ratio" in text
