"""Parameter extraction: Lorentzian lineshape fitting, weighted linear
regression with analytic uncertainties, and PSD peak-ratio estimation.

The nonlinear solver is a damped Gauss-Newton iteration (multiplicative
Levenberg-style damping schedule): max 200 iterations, relative step
tolerance 1e-10, residual tolerance 1e-12 of the data span. Self-seeded fits
derive their start point from the extremum location, the half-height width
and the edge median, so they are reproducible without user input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DomainError, FitError, PeakResolutionError
from .physcore import TWO_PI
from .tracesynth import PSD, Trace

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class LorentzianFitResult:
    """Least-squares Lorentzian parameters on a frequency axis in Hz.

    amplitude is signed: negative means a dip. covariance is 4x4 in the
    parameter order (center, fwhm, amplitude, offset).
    """

    center: float
    fwhm: float
    amplitude: float
    offset: float
    covariance: np.ndarray
    residual_rms: float
    converged: bool
    n_iterations: int

    def model(self, freq_hz) -> np.ndarray:
        return lorentzian_model(freq_hz, self.center, self.fwhm, self.amplitude, self.offset)

    @property
    def fwhm_sigma(self) -> float:
        return float(np.sqrt(max(self.covariance[1, 1], 0.0)))

    @property
    def amplitude_sigma(self) -> float:
        return float(np.sqrt(max(self.covariance[2, 2], 0.0)))


@dataclass(frozen=True)
class LineFitResult:
    """Weighted least-squares straight line with 1-sigma parameter errors."""

    slope: float
    intercept: float
    slope_sigma: float
    intercept_sigma: float
    chi2_reduced: float


@dataclass(frozen=True)
class PsdPeakEstimate:
    """Thermal-peak/spur decomposition of a sideband noise spectrum."""

    s_pp_over_s_mod: float
    gamma_m: float  # rad/s
    s_pp: float
    s_mod: float
    thermal_center_hz: float
    fit: LorentzianFitResult


def lorentzian_model(freq_hz, center, fwhm, amplitude, offset) -> np.ndarray:
    """offset + amplitude * (fwhm/2)^2 / ((fwhm/2)^2 + (f - center)^2)"""
    f = np.asarray(freq_hz, dtype=float)
    half_sq = (0.5 * fwhm) ** 2
    return offset + amplitude * half_sq / (half_sq + (f - center) ** 2)


def _self_seed(f: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Start point from the data: edge median -> offset, largest deviation ->
    amplitude and center, half-height crossings -> width."""
    k = max(3, len(y) // 20)
    offset = float(np.median(np.concatenate([y[:k], y[-k:]])))
    dev = np.abs(y - offset)
    i_ext = int(np.argmax(dev))
    amplitude = float(y[i_ext] - offset)
    center = float(f[i_ext])
    half_dev = 0.5 * abs(amplitude)
    left = f[0]
    for j in range(i_ext, -1, -1):
        if dev[j] <= half_dev:
            left = f[j]
            break
    right = f[-1]
    for j in range(i_ext, len(y)):
        if dev[j] <= half_dev:
            right = f[j]
            break
    width = float(right - left)
    if width <= 0.0:
        width = (f[-1] - f[0]) / 4.0
    return np.array([center, width, amplitude, offset])


def _jacobian(f: np.ndarray, params: np.ndarray) -> np.ndarray:
    center, fwhm, amplitude, _ = params
    half = 0.5 * fwhm
    d = f - center
    den = half * half + d * d
    d_center = amplitude * half * half * 2.0 * d / (den * den)
    d_fwhm = amplitude * half * (d * d) / (den * den)
    d_amplitude = half * half / den
    d_offset = np.ones_like(f)
    return np.stack([d_center, d_fwhm, d_amplitude, d_offset], axis=1)


def lorentzian_fit(
    trace: Trace,
    init=None,
    sigma=None,
    max_iterations: int = MAX_ITERATIONS,
    step_tol: float = STEP_TOL,
    residual_tol: float = RESIDUAL_TOL,
) -> LorentzianFitResult:
    """Fit offset + amplitude*(G/2)^2/((G/2)^2 + (f-f0)^2) to a trace.

    init, when given, is (center, fwhm, amplitude, offset); otherwise the fit
    self-seeds. sigma, when given, holds per-point standard deviations: the
    fit minimizes the weighted residual and the covariance is absolute
    ((J'WJ)^-1). Without sigma the covariance is scaled by the residual
    variance. Non-convergence is flagged on the result, never silent; a flat
    trace raises DegenerateDataError.
    """
    f = trace.freq_hz
    y = trace.values
    span = float(np.max(y) - np.min(y))
    if span <= 0.0:
        raise DegenerateDataError("trace is flat; no lineshape to fit")

    params = np.array(init, dtype=float) if init is not None else _self_seed(f, y)
    if params.shape != (4,):
        raise DomainError("init must supply (center, fwhm, amplitude, offset)")

    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != y.shape or np.any(~np.isfinite(sigma)) or np.any(sigma <= 0.0):
            raise DomainError("sigma must be positive, finite and match the trace length")
        weights = 1.0 / sigma
    else:
        weights = None

    def residuals(p: np.ndarray) -> np.ndarray:
        r = lorentzian_model(f, *p) - y
        return r * weights if weights is not None else r

    r = residuals(params)
    ssr = float(r @ r)
    lam = 1e-3
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        jac = _jacobian(f, params)
        if weights is not None:
            jac = jac * weights[:, None]
        grad = jac.T @ r
        hess = jac.T @ jac
        diag = np.diag(np.diag(hess))
        step = None
        for _ in range(60):
            try:
                step = np.linalg.solve(hess + lam * diag, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            r_trial = residuals(trial)
            ssr_trial = float(r_trial @ r_trial)
            if np.isfinite(ssr_trial) and ssr_trial <= ssr:
                params, r, ssr = trial, r_trial, ssr_trial
                lam = max(lam / 3.0, 1e-14)
                break
            lam *= 10.0
        else:
            break  # no descent direction found; stop with current estimate
        rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(params), 1e-300)))
        rms = float(np.sqrt(ssr / len(f)))
        if rel_step < step_tol or rms < residual_tol * span:
            converged = True
            break

    center, fwhm, amplitude, offset = params
    fwhm = abs(fwhm)  # model depends on fwhm^2 only
    raw = lorentzian_model(f, center, fwhm, amplitude, offset) - y
    residual_rms = float(np.sqrt(np.mean(raw * raw)))

    jac = _jacobian(f, np.array([center, fwhm, amplitude, offset]))
    if weights is not None:
        jac = jac * weights[:, None]
    hess = jac.T @ jac
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess)
    if weights is None:
        dof = max(len(f) - 4, 1)
        cov = cov * (ssr / dof)
    cov = 0.5 * (cov + cov.T)

    return LorentzianFitResult(
        center=float(center),
        fwhm=float(fwhm),
        amplitude=float(amplitude),
        offset=float(offset),
        covariance=cov,
        residual_rms=residual_rms,
        converged=converged,
        n_iterations=iteration,
    )


def weighted_line_fit(x, y, sigma=None) -> LineFitResult:
    """Weighted least squares for y = slope*x + intercept.

    sigma holds per-point standard deviations of y; absent (or all-zero)
    sigmas mean unit weights. Parameter uncertainties are analytic from the
    weights, so they are invariant to the data scatter; chi2_reduced reports
    the goodness of fit separately.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.shape != x.shape or len(x) < 2:
        raise DomainError("need 1-d x and y of equal length >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("x and y must be finite")
    if np.all(x == x[0]):
        raise DegenerateDataError("all abscissas identical; slope undefined")

    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != x.shape or np.any(~np.isfinite(sigma)):
            raise DomainError("sigma must be finite and match the data length")
        if np.all(sigma == 0.0):
            sigma = None  # noiseless input; fall back to unit weights
        elif np.any(sigma <= 0.0):
            raise DomainError("sigmas must be positive")
    w = 1.0 / sigma**2 if sigma is not None else np.ones_like(x)

    s = float(np.sum(w))
    x_bar = float(np.sum(w * x) / s)
    y_bar = float(np.sum(w * y) / s)
    dx = x - x_bar
    s_xx = float(np.sum(w * dx * dx))
    slope = float(np.sum(w * dx * y) / s_xx)
    intercept = y_bar - slope * x_bar
    slope_sigma = float(np.sqrt(1.0 / s_xx))
    intercept_sigma = float(np.sqrt(1.0 / s + x_bar * x_bar / s_xx))
    resid = y - (slope * x + intercept)
    chi2 = float(np.sum(w * resid * resid))
    dof = len(x) - 2
    chi2_reduced = chi2 / dof if dof > 0 else 0.0
    return LineFitResult(slope, intercept, slope_sigma, intercept_sigma, chi2_reduced)


def psd_peak_ratio(
    trace: Trace,
    omega_m_hint_hz: float,
    omega_mod_hint_hz: float,
    enbw_hz: float,
) -> PsdPeakEstimate:
    """Split a sideband noise spectrum into its thermal peak and single-bin
    calibration spur.

    The thermal peak height S_pp and linewidth come from a Lorentzian fit
    with the spur region (+-2 bins around the hint) masked out; the spur
    height S_mod is read as the maximum over those bins minus the fitted
    thermal contribution there. The returned ratio is invariant under overall
    trace scaling.
    """
    if trace.kind != PSD:
        raise DomainError("peak-ratio estimation expects a PSD trace")
    if not (np.isfinite(enbw_hz) and enbw_hz > 0.0):
        raise DomainError("analyzer bandwidth must be positive")
    f = trace.freq_hz
    y = trace.values
    bin_width = float(np.median(np.diff(f)))
    spur_zone = np.abs(f - omega_mod_hint_hz) <= 2.0 * bin_width
    if not np.any(spur_zone):
        raise PeakResolutionError("no samples found near the calibration spur hint")
    keep = ~spur_zone
    if int(np.sum(keep)) < 8:
        raise PeakResolutionError("too few samples left after masking the spur")

    thermal = Trace(PSD, f[keep], y[keep], dict(trace.meta))
    fit = lorentzian_fit(thermal, init=None)
    if not fit.converged:
        raise FitError("thermal-peak fit did not converge")
    if fit.amplitude < 0.0:
        raise PeakResolutionError("thermal feature fitted as a dip; not a noise peak")
    if abs(omega_mod_hint_hz - fit.center) < 3.0 * fit.fwhm:
        raise PeakResolutionError(
            "calibration spur overlaps the thermal peak "
            f"(separation {abs(omega_mod_hint_hz - fit.center):.3g} Hz < 3 * fwhm)"
        )
    if abs(fit.center - omega_m_hint_hz) > max(10.0 * fit.fwhm, 5.0 * bin_width):
        raise PeakResolutionError("fitted thermal peak sits far from its hint")

    i_spur = int(np.argmax(np.where(spur_zone, y, -np.inf)))
    s_mod = float(y[i_spur] - fit.model(f[i_spur]))
    if s_mod <= 1e-9 * float(np.max(np.abs(y))):
        raise PeakResolutionError("no calibration spur above the thermal background")
    s_pp = float(fit.amplitude)
    return PsdPeakEstimate(
        s_pp_over_s_mod=s_pp / s_mod,
        gamma_m=TWO_PI * fit.fwhm,
        s_pp=s_pp,
        s_mod=s_mod,
        thermal_center_hz=fit.center,
        fit=fit,
    )
