import math

import numpy as np
import pytest

from atomlaser.analysis import (
    AnalysisError,
    CalibrationMap,
    FitResult,
    fit_rabi_calibration,
    fit_saturating_exponential,
    power_law_exponent,
    saturating_exponential,
)

X_GRID = np.linspace(120.0, 4800.0, 24)
TRUE = (0.5, 100.0, 600.0)


def make_data(a=TRUE[0], x0=TRUE[1], r=TRUE[2], x=X_GRID):
    return x, saturating_exponential(x, a, x0, r)


class TestSaturatingExponential:
    def test_noiseless_round_trip(self):
        x, y = make_data()
        fit = fit_saturating_exponential(x, y)
        assert fit.converged
        assert fit.A == pytest.approx(TRUE[0], rel=1e-8)
        assert fit.x0 == pytest.approx(TRUE[1], rel=1e-8)
        assert fit.r == pytest.approx(TRUE[2], rel=1e-8)

    def test_r_recovery_under_noise_100_seeds(self):
        # 2% of the plateau as additive noise; 150-point design keeps the
        # estimator scatter well inside the 5% band
        x = np.linspace(120.0, 4800.0, 150)
        y = saturating_exponential(x, *TRUE)
        recovered = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            noisy = y + rng.normal(0.0, 0.02 * TRUE[0], size=y.size)
            fit = fit_saturating_exponential(x, noisy)
            assert fit.converged
            recovered.append(fit.r)
        rel = np.abs(np.array(recovered) - TRUE[2]) / TRUE[2]
        assert np.max(rel) < 0.05

    def test_scale_equivariance(self):
        x, y = make_data()
        base = fit_saturating_exponential(x, y)
        for c in (3.0, 0.02, 1e3):
            scaled = fit_saturating_exponential(c * x, y)
            assert scaled.x0 == pytest.approx(c * base.x0, rel=1e-10)
            assert scaled.r == pytest.approx(c * base.r, rel=1e-10)
            assert scaled.A == pytest.approx(base.A, rel=1e-10)

    def test_residual_orthogonal_to_model_gradient(self):
        x, y = make_data()
        rng = np.random.default_rng(1)
        noisy = y + rng.normal(0.0, 0.01, size=y.size)
        fit = fit_saturating_exponential(x, noisy)
        resid = noisy - saturating_exponential(x, fit.A, fit.x0, fit.r)
        e = np.exp(-(x - fit.x0) / fit.r)
        grads = np.stack([
            1.0 - e,
            -fit.A * e / fit.r,
            -fit.A * e * (x - fit.x0) / fit.r**2,
        ])
        norm = np.linalg.norm(resid) * np.linalg.norm(grads, axis=1)
        dots = np.abs(grads @ resid) / np.where(norm > 0, norm, 1.0)
        assert np.max(dots) < 1e-6

    def test_too_few_points(self):
        with pytest.raises(AnalysisError, match="at least 5"):
            fit_saturating_exponential(np.arange(4.0) + 1, np.arange(4.0))

    def test_nonconvergence_reported_not_silent(self):
        x = np.linspace(1, 10, 8)
        y = np.full(8, np.nan)
        fit = fit_saturating_exponential(x, y)
        assert not fit.converged
        assert math.isnan(fit.r)
        assert fit.message

    def test_duck_typed_curve_object(self):
        class Curve:
            omega0_hz = X_GRID
            fractions = saturating_exponential(X_GRID, *TRUE)

        fit = fit_saturating_exponential(Curve())
        assert fit.r == pytest.approx(TRUE[2], rel=1e-8)


def rabi_predictor(pulse=100e-6):
    return lambda omega: math.sin(omega * pulse / 2.0) ** 2


class TestRabiCalibration:
    def test_closed_loop_recovery(self):
        true_slope = 2 * math.pi * 5
        drives = np.linspace(200.0, 1600.0, 8)
        pred = rabi_predictor()
        observed = [pred(true_slope * d) for d in drives]
        cal = fit_rabi_calibration(drives, observed, pred)
        assert cal.converged
        assert cal.slope == pytest.approx(true_slope, rel=1e-2)

    def test_drive_rescaling_inverts_slope(self):
        true_slope = 2 * math.pi * 5
        drives = np.linspace(200.0, 1600.0, 8)
        pred = rabi_predictor()
        observed = [pred(true_slope * d) for d in drives]
        base = fit_rabi_calibration(drives, observed, pred)
        c = 4.0
        scaled = fit_rabi_calibration(c * drives, observed, pred)
        assert scaled.slope == pytest.approx(base.slope / c, rel=1e-9)

    def test_monotone_partial_oscillation_converges(self):
        # all drives below the pi pulse: transfer strictly rising
        true_slope = 2 * math.pi * 3
        drives = np.linspace(100.0, 800.0, 8)
        pred = rabi_predictor()
        observed = [pred(true_slope * d) for d in drives]
        assert all(b > a for a, b in zip(observed, observed[1:]))
        cal = fit_rabi_calibration(drives, observed, pred)
        assert cal.slope == pytest.approx(true_slope, rel=1e-2)

    def test_all_zero_transfer_is_error(self):
        drives = np.linspace(1.0, 8.0, 8)
        with pytest.raises(AnalysisError, match="degenerate"):
            fit_rabi_calibration(drives, np.zeros(8), rabi_predictor())


class TestPowerLaw:
    def test_exact_square_law(self):
        x = np.linspace(10, 100, 12)
        y = 1e-6 * x**2
        res = power_law_exponent(x, y, coupling_on=3e-3, plateau=1.0)
        assert res.exponent == pytest.approx(2.0, abs=1e-10)

    def test_exact_linear_law(self):
        x = np.linspace(10, 100, 12)
        y = 1e-4 * x
        res = power_law_exponent(x, y, coupling_on=3e-3, plateau=1.0)
        assert res.exponent == pytest.approx(1.0, abs=1e-10)

    def test_regime_filter_error_names_filter(self):
        x = np.linspace(10, 100, 12)
        y = np.full(12, 0.5)
        with pytest.raises(AnalysisError, match="weak-regime filter"):
            power_law_exponent(x, y, coupling_on=3e-3)

    def test_flux_normalization_does_not_change_slope(self):
        x = np.linspace(10, 100, 12)
        y = 1e-6 * x**2
        a = power_law_exponent(x, y, coupling_on=3e-3, plateau=1.0)
        b = power_law_exponent(x, y, coupling_on=14e-3, plateau=1.0)
        assert a.exponent == pytest.approx(b.exponent, abs=1e-12)
