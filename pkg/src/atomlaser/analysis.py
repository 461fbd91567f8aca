"""Curve fitting and scaling analysis.

Saturating-exponential shutdown fits y = A (1 - exp(-(x - x0)/r)) with a
fixed multi-start grid, drive-to-coupling calibration fits against a
solver predictor, and golden-rule power-law checks on the weak-coupling
regime.  All fits are deterministic given their documented start grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares


class AnalysisError(ValueError):
    pass


@dataclass
class FitResult:
    A: float
    x0: float            # same units as x (Hz for shutdown curves)
    r: float             # same units as x
    covariance: np.ndarray       # (3, 3), order (A, x0, r)
    residual_norm: float
    converged: bool
    message: str = ""

    @property
    def parameters(self) -> tuple[float, float, float]:
        return (self.A, self.x0, self.r)


def saturating_exponential(x, A: float, x0: float, r: float):
    """Model y = A (1 - exp(-(x - x0)/r))."""
    return A * (1.0 - np.exp(-(np.asarray(x, dtype=float) - x0) / r))


def _unpack_curve(x, y):
    if y is None:
        if hasattr(x, "omega0_hz") and hasattr(x, "fractions"):
            return np.asarray(x.omega0_hz, float), np.asarray(x.fractions, float)
        raise AnalysisError("pass (x, y) arrays or a shutdown curve object")
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


N_STARTS = 10  # fixed x0 multi-start grid spanning [min(x), max(x)]


def fit_saturating_exponential(
    x, y=None, weights: Sequence[float] | None = None
) -> FitResult:
    """Least-squares fit of A (1 - exp(-(x - x0)/r)).

    Damped Gauss-Newton (Levenberg-Marquardt) restarted from N_STARTS
    values of x0 spanning the data range; the best converged solution with
    r > 0 wins.  x is normalized internally by max|x| so the estimator is
    exactly scale-equivariant.  Unweighted by default; ``weights``
    multiply the residuals.
    """
    x, y = _unpack_curve(x, y)
    if x.size < 5:
        raise AnalysisError(f"need at least 5 points spanning rise and plateau, got {x.size}")
    if x.size != y.size:
        raise AnalysisError("x and y must have the same length")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.size != y.size:
        raise AnalysisError("weights must match the data length")

    x_ref = float(np.max(np.abs(x)))
    if x_ref == 0.0:
        raise AnalysisError("x values are all zero")
    xs = x / x_ref

    def residuals(p):
        A, x0, r = p
        with np.errstate(over="ignore"):
            return w * (A * (1.0 - np.exp(-(xs - x0) / r)) - y)

    def jacobian(p):
        A, x0, r = p
        with np.errstate(over="ignore"):
            e = np.exp(-(xs - x0) / r)
        J = np.empty((xs.size, 3))
        J[:, 0] = 1.0 - e
        J[:, 1] = -A * e / r
        J[:, 2] = -A * e * (xs - x0) / r**2
        return w[:, None] * J

    span = float(xs.max() - xs.min())
    a0 = float(np.max(y)) if np.max(y) > 0 else 1.0
    starts = np.linspace(float(xs.min()), float(xs.max()), N_STARTS)
    best = None
    for x0_start in starts:
        p0 = np.array([a0, x0_start, max(span / 3.0, 1e-3)])
        try:
            sol = least_squares(residuals, p0, jac=jacobian, method="lm", xtol=1e-14,
                                ftol=1e-14, gtol=1e-14, max_nfev=2000)
        except Exception:
            continue
        if not np.isfinite(sol.cost):
            continue
        if sol.x[2] <= 0.0:
            continue
        if best is None or sol.cost < best.cost:
            best = sol

    if best is None:
        return FitResult(
            A=float("nan"), x0=float("nan"), r=float("nan"),
            covariance=np.full((3, 3), np.nan), residual_norm=float("nan"),
            converged=False, message="no start converged to r > 0",
        )

    A, x0s, rs = best.x
    res = best.fun
    J = jacobian(best.x)
    dof = max(x.size - 3, 1)
    sigma2 = 2.0 * best.cost / dof
    try:
        cov_s = sigma2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov_s = np.full((3, 3), np.nan)
    scale = np.diag([1.0, x_ref, x_ref])
    cov = scale @ cov_s @ scale
    return FitResult(
        A=float(A), x0=float(x0s * x_ref), r=float(rs * x_ref),
        covariance=cov, residual_norm=float(np.linalg.norm(res)),
        converged=bool(best.success), message=best.message,
    )


@dataclass
class CalibrationMap:
    """Coupling strength per drive unit extracted from pulse-calibration data."""

    slope: float          # rad/s per drive unit
    residual_norm: float
    converged: bool


def fit_rabi_calibration(
    drives: Sequence[float],
    transferred: Sequence[float],
    predictor: Callable[[float], float],
    pulse_duration: float = 100e-6,
) -> CalibrationMap:
    """Find the slope s minimizing the misfit between observed transfer
    fractions and ``predictor(s * drive)``.

    The start grid is fixed: s0 = j * pi / (pulse_duration * max(drive))
    for j in (0.25, 0.5, 1, 2, 4), bracketing the pi-pulse condition, so
    monotone pre-pi-pulse data converge as well as oscillatory data.
    """
    d = np.asarray(drives, dtype=float)
    obs = np.asarray(transferred, dtype=float)
    if d.size < 5:
        raise AnalysisError(f"need at least 5 drive levels, got {d.size}")
    if d.size != obs.size:
        raise AnalysisError("drives and transferred fractions must match")
    if np.max(np.abs(obs)) == 0.0:
        raise AnalysisError("all transferred fractions are zero; calibration degenerate")
    dmax = float(np.max(np.abs(d)))
    if dmax == 0.0:
        raise AnalysisError("all drive levels are zero")

    def residuals(p):
        s = p[0]
        return np.array([predictor(s * di) for di in d]) - obs

    base = math.pi / (pulse_duration * dmax)
    best = None
    for factor in (0.25, 0.5, 1.0, 2.0, 4.0):
        try:
            sol = least_squares(residuals, np.array([factor * base]), method="lm",
                                xtol=1e-14, ftol=1e-14, max_nfev=2000)
        except Exception:
            continue
        if sol.x[0] <= 0.0 or not np.isfinite(sol.cost):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise AnalysisError("calibration fit did not converge from any start")
    return CalibrationMap(
        slope=float(best.x[0]),
        residual_norm=float(np.linalg.norm(best.fun)),
        converged=bool(best.success),
    )


@dataclass
class PowerLawResult:
    exponent: float
    stderr: float
    n_points: int


def power_law_exponent(
    omega0_hz: Sequence[float],
    fractions: Sequence[float],
    coupling_on: float,
    plateau: float | None = None,
) -> PowerLawResult:
    """Log-log slope of flux (fraction / coupling-on time) against Omega_0,
    restricted to the weak regime (fractions below 0.1 x plateau).

    Ordinary least squares; the plateau defaults to the largest observed
    fraction.
    """
    x = np.asarray(omega0_hz, dtype=float)
    y = np.asarray(fractions, dtype=float)
    if coupling_on <= 0.0:
        raise AnalysisError(f"coupling_on must be > 0, got {coupling_on}")
    level = float(np.max(y)) if plateau is None else float(plateau)
    mask = (y > 0.0) & (y < 0.1 * level) & (x > 0.0)
    if int(np.sum(mask)) < 4:
        raise AnalysisError(
            f"weak-regime filter (fraction < 0.1 x plateau = {0.1 * level:.4g}) "
            f"keeps only {int(np.sum(mask))} points; need at least 4"
        )
    lx = np.log(x[mask])
    ly = np.log(y[mask] / coupling_on)
    n = lx.size
    mx = lx.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    slope = float(np.sum((lx - mx) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * mx)
    resid = ly - (intercept + slope * lx)
    sigma2 = float(np.sum(resid**2)) / max(n - 2, 1)
    stderr = math.sqrt(sigma2 / sxx)
    return PowerLawResult(exponent=slope, stderr=stderr, n_points=n)
