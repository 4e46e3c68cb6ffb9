"""Calibration pipelines: synthesis or ingestion of measurement records,
slope fits, inversion to the calibration factor or the vacuum coupling, and
report assembly.

Three pipelines share one shape: build a (setpoint -> observable) series,
regress it against the closed-form kernel that is linear in the quantity of
interest, invert the slope and propagate uncertainties. Reports are plain
JSON documents and are byte-identical for identical config + seed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import (
    PIPELINE_EMIA,
    PIPELINE_GM0,
    PIPELINE_QUBIT,
    ExperimentConfig,
    default_config,
)
from .errors import ConfigurationError, DomainError, FitError
from .estimfit import lorentzian_fit, psd_peak_ratio, weighted_line_fit
from .physcore import (
    HBAR,
    TWO_PI,
    DriveConfig,
    TransmonParams,
    ac_stark_shift,
    critical_photon_number,
    integrated_displacement_noise,
    photon_number,
    vacuum_coupling_from_slope,
)
from .tracesynth import (
    Trace,
    add_noise,
    default_emia_axis,
    default_psd_axis,
    derive_seed,
    emia_s21,
    kappa_at_power,
    NoiseSpec,
    sideband_psd,
    with_meta,
)

REPORT_SCHEMA = "emcal-report/1"
CHECK_SCHEMA = "emcal-check/1"
SERIES_FORMAT = "emcal-series v1"

DEFAULT_CONSISTENCY_THRESHOLD = 0.05


# ---------------------------------------------------------------------------
# power series (extracted observable vs setpoint)


@dataclass
class PowerSeries:
    """(applied power -> extracted qubit shift) records, the measurement
    artifact of the dispersive-shift pipeline."""

    p_app_w: np.ndarray
    stark_shift_hz: np.ndarray
    sigma_hz: np.ndarray | None = None
    kappa_hz: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def write_series_csv(series: PowerSeries, path) -> None:
    from .tracesynth import _format_meta_value  # same value formatting as traces

    lines = [f"# {SERIES_FORMAT}"]
    for key in sorted(series.meta):
        lines.append(f"# {key}={_format_meta_value(series.meta[key])}")
    columns = ["p_app_w", "stark_shift_hz"]
    if series.sigma_hz is not None:
        columns.append("stark_shift_sigma_hz")
    if series.kappa_hz is not None:
        columns.append("kappa_hz")
    lines.append(",".join(columns))
    for i in range(len(series.p_app_w)):
        row = [repr(float(series.p_app_w[i])), repr(float(series.stark_shift_hz[i]))]
        if series.sigma_hz is not None:
            row.append(repr(float(series.sigma_hz[i])))
        if series.kappa_hz is not None:
            row.append(repr(float(series.kappa_hz[i])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series_csv(path) -> PowerSeries:
    from .tracesynth import _parse_meta_value

    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigurationError(f"cannot read series {path}: {exc}") from exc
    if not lines or lines[0] != f"# {SERIES_FORMAT}":
        raise ConfigurationError(f"{path}: not an {SERIES_FORMAT} file")
    meta: dict = {}
    header_at = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("# "):
            key, sep, value = line[2:].partition("=")
            if not sep:
                raise ConfigurationError(f"{path}: malformed metadata line {line!r}")
            meta[key.strip()] = _parse_meta_value(value.strip())
        else:
            header_at = i
            break
    if header_at is None:
        raise ConfigurationError(f"{path}: missing column header")
    columns = lines[header_at].split(",")
    if columns[:2] != ["p_app_w", "stark_shift_hz"]:
        raise ConfigurationError(f"{path}: unexpected columns {columns}")
    rows = [line.split(",") for line in lines[header_at + 1 :]]
    if any(len(r) != len(columns) for r in rows):
        raise ConfigurationError(f"{path}: ragged data rows")
    data = {name: np.array([float(r[j]) for r in rows]) for j, name in enumerate(columns)}
    return PowerSeries(
        p_app_w=data["p_app_w"],
        stark_shift_hz=data["stark_shift_hz"],
        sigma_hz=data.get("stark_shift_sigma_hz"),
        kappa_hz=data.get("kappa_hz"),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# closed-form kernels


def stark_product_slope(x: float, transmon: TransmonParams, delta_tc: float, omega_p: float) -> float:
    """Slope of (qubit shift * kappa^2) versus applied power at zero probe
    detuning, rad^3 s^-3 per W. Linear in x; kappa cancels identically."""
    shift_per_photon = ac_stark_shift(1.0, transmon, delta_tc)
    return 2.0 * shift_per_photon * x / (HBAR * omega_p)


def x_from_stark_slope(slope: float, transmon: TransmonParams, delta_tc: float, omega_p: float) -> float:
    """Invert the stark-product slope for the calibration factor x (1/s)."""
    return slope / stark_product_slope(1.0, transmon, delta_tc, omega_p)


def emia_power_kernel(p_app: float, mech, kappa: float, omega_d: float, delta_mc: float) -> float:
    """Gain of the effective mechanical linewidth per unit calibration
    factor, d(gamma_eff)/dx in (rad/s)/(1/s). gamma_eff = gamma_m + x*kernel."""
    return 4.0 * mech.g_m0 * mech.g_m0 * photon_number(p_app, 1.0, omega_d, kappa, delta_mc) / kappa


# ---------------------------------------------------------------------------
# synthesis


def synthesize_qubit_series(cfg: ExperimentConfig) -> PowerSeries:
    """Closed-form dispersive-shift record for every sweep power, with
    optional multiplicative noise on the extracted shifts."""
    _expect_pipeline(cfg, PIPELINE_QUBIT)
    if cfg.x_true is None:
        raise ConfigurationError("synthesis needs x_true_per_s in the config")
    transmon = cfg.system.require_transmon()
    omega_p = cfg.system.resonator.omega_c  # probe on resonance
    n_crit = critical_photon_number(transmon.g_tc, cfg.delta_tc)

    kappas, shifts = [], []
    for p in cfg.sweep:
        kappa = kappa_at_power(cfg.kappa_model, float(p))
        n = photon_number(float(p), cfg.x_true, omega_p, kappa, 0.0)
        if n >= n_crit:
            raise ConfigurationError(
                f"setpoint {p:.4g} W drives {n:.1f} photons, at or above the "
                f"dispersive-limit bound {n_crit:.1f}"
            )
        kappas.append(kappa)
        shifts.append(ac_stark_shift(n, transmon, cfg.delta_tc) / TWO_PI)
    shifts = np.array(shifts)
    sigma = None
    if cfg.noise.relative_amplitude > 0.0:
        rng = np.random.default_rng(derive_seed(cfg.noise.seed, 0))
        shifts = shifts * (1.0 + cfg.noise.relative_amplitude * rng.standard_normal(len(shifts)))
        sigma = cfg.noise.relative_amplitude * np.abs(shifts)
    meta = {
        "pipeline": cfg.pipeline,
        "omega_p_hz": omega_p / TWO_PI,
        "x_true_per_s": cfg.x_true,
        "noise_relative_amplitude": cfg.noise.relative_amplitude,
        "rng_seed": cfg.noise.seed,
    }
    return PowerSeries(
        p_app_w=np.asarray(cfg.sweep, dtype=float),
        stark_shift_hz=shifts,
        sigma_hz=sigma,
        kappa_hz=np.array(kappas) / TWO_PI,
        meta=meta,
    )


def synthesize_emia_traces(cfg: ExperimentConfig) -> list[Trace]:
    """One sideband-interference sweep per power setpoint."""
    _expect_pipeline(cfg, PIPELINE_EMIA)
    if cfg.x_true is None:
        raise ConfigurationError("synthesis needs x_true_per_s in the config")
    mech = cfg.system.require_mechanics()
    omega_c = cfg.system.resonator.omega_c
    omega_d = omega_c - mech.omega_m
    traces = []
    for index, p in enumerate(cfg.sweep):
        kappa = kappa_at_power(cfg.kappa_model, float(p))
        drive = DriveConfig(
            p_app=float(p),
            omega_p=omega_c,
            omega_d=omega_d,
            delta_p=0.0,
            delta_mc=-mech.omega_m,
            x=cfg.x_true,
        )
        n_d = photon_number(float(p), cfg.x_true, omega_d, kappa, -mech.omega_m)
        gamma_eff = mech.gamma_m * (1.0 + 4.0 * mech.g_m0**2 * n_d / (kappa * mech.gamma_m))
        axis = default_emia_axis(
            (omega_d + mech.omega_m) / TWO_PI,
            gamma_eff,
            points=cfg.emia_points,
            linewidths=cfg.emia_window_linewidths,
        )
        trace = emia_s21(cfg.system, drive, kappa, axis)
        trace = add_noise(
            trace,
            NoiseSpec(cfg.noise.relative_amplitude, derive_seed(cfg.noise.seed, index)),
        )
        traces.append(with_meta(trace, point_index=index, pipeline=cfg.pipeline))
    return traces


def synthesize_psd_traces(cfg: ExperimentConfig) -> list[Trace]:
    """One sideband noise spectrum per temperature setpoint."""
    _expect_pipeline(cfg, PIPELINE_GM0)
    mech = cfg.system.require_mechanics()
    traces = []
    for index, temperature in enumerate(cfg.sweep):
        axis = default_psd_axis(mech, points=cfg.gm0_points, linewidths=cfg.gm0_window_linewidths)
        trace = sideband_psd(cfg.system, float(temperature), cfg.tone, cfg.enbw_hz, axis)
        trace = add_noise(
            trace,
            NoiseSpec(cfg.noise.relative_amplitude, derive_seed(cfg.noise.seed, index)),
        )
        traces.append(with_meta(trace, point_index=index, pipeline=cfg.pipeline))
    return traces


def synthesize(cfg: ExperimentConfig):
    """Dispatch synthesis for the configured pipeline."""
    if cfg.pipeline == PIPELINE_QUBIT:
        return synthesize_qubit_series(cfg)
    if cfg.pipeline == PIPELINE_EMIA:
        return synthesize_emia_traces(cfg)
    return synthesize_psd_traces(cfg)


# ---------------------------------------------------------------------------
# report


@dataclass
class CalibrationReport:
    """Result of one pipeline run, JSON-serializable via to_dict()."""

    pipeline: str
    config_digest: str
    noise_seed: int
    slope: float
    slope_sigma: float
    slope_units: str
    intercept: float
    intercept_sigma: float
    intercept_units: str
    recovered_name: str
    recovered_value: float
    recovered_sigma_statistical: float
    recovered_sigma_total: float
    recovered_units: str
    chi2_reduced: float
    photon_min: float | None
    photon_max: float | None
    points: list
    excluded_points: list
    uncertainty_budget: dict
    notes: list

    def to_dict(self) -> dict:
        slope_block = {"value": self.slope, "sigma": self.slope_sigma, "units": self.slope_units}
        intercept_block = {
            "value": self.intercept,
            "sigma": self.intercept_sigma,
            "units": self.intercept_units,
        }
        recovered = {
            "name": self.recovered_name,
            "value": self.recovered_value,
            "sigma_statistical": self.recovered_sigma_statistical,
            "sigma_total": self.recovered_sigma_total,
            "units": self.recovered_units,
        }
        if self.pipeline == PIPELINE_QUBIT:
            slope_block["value_2pi3_per_nw"] = self.slope * 1e-9 / TWO_PI**3
        if self.pipeline == PIPELINE_EMIA:
            intercept_block["value_hz"] = self.intercept / TWO_PI
            intercept_block["sigma_hz"] = self.intercept_sigma / TWO_PI
        if self.pipeline == PIPELINE_GM0:
            slope_block["value_hz2_per_k"] = self.slope / TWO_PI**2
            slope_block["sigma_hz2_per_k"] = self.slope_sigma / TWO_PI**2
            recovered["value_2pi_hz"] = self.recovered_value / TWO_PI
            recovered["sigma_statistical_2pi_hz"] = self.recovered_sigma_statistical / TWO_PI
            recovered["sigma_total_2pi_hz"] = self.recovered_sigma_total / TWO_PI
        photon_range = None
        if self.photon_min is not None:
            photon_range = {"min": self.photon_min, "max": self.photon_max}
        return {
            "schema": REPORT_SCHEMA,
            "pipeline": self.pipeline,
            "config_digest": self.config_digest,
            "noise_seed": self.noise_seed,
            "slope": slope_block,
            "intercept": intercept_block,
            "recovered": recovered,
            "fit": {
                "chi2_reduced": self.chi2_reduced,
                "n_points": len(self.points),
                "n_excluded": len(self.excluded_points),
            },
            "photon_number_range": photon_range,
            "points": self.points,
            "excluded_points": self.excluded_points,
            "uncertainty_budget": self.uncertainty_budget,
            "notes": self.notes,
        }


def write_report(report: CalibrationReport | dict, path) -> None:
    doc = report.to_dict() if isinstance(report, CalibrationReport) else report
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"report {path} is not valid JSON: {exc}") from exc
    if doc.get("schema") != REPORT_SCHEMA:
        raise ConfigurationError(f"{path} is not an {REPORT_SCHEMA} document")
    return doc


def _expect_pipeline(cfg: ExperimentConfig, expected: str) -> None:
    if cfg.pipeline != expected:
        raise ConfigurationError(f"config is for pipeline {cfg.pipeline!r}, expected {expected!r}")


def _dip_init(trace: Trace) -> tuple[float, float, float, float]:
    """Start point for an absorption-dip fit: the pipeline knows the feature
    is a dip, so seed on the minimum instead of the generic extremum (which a
    noise spike can win on shallow dips)."""
    f, y = trace.freq_hz, trace.values
    k = max(3, len(y) // 20)
    offset = float(np.median(np.concatenate([y[:k], y[-k:]])))
    i_min = int(np.argmin(y))
    amplitude = float(y[i_min] - offset)
    center = float(f[i_min])
    half_level = offset + 0.5 * amplitude
    j0 = j1 = i_min
    while j0 > 0 and y[j0 - 1] <= half_level:
        j0 -= 1
    while j1 < len(y) - 1 and y[j1 + 1] <= half_level:
        j1 += 1
    width = float(f[j1] - f[j0])
    if width <= 0.0:
        width = 4.0 * float(np.median(np.diff(f)))
    return center, width, amplitude, offset


def _quadrature(parts: dict) -> float:
    return float(np.sqrt(sum(v * v for v in parts.values())))


# ---------------------------------------------------------------------------
# pipelines


def run_qubit_pipeline(cfg: ExperimentConfig, series: PowerSeries | None = None) -> CalibrationReport:
    """Dispersive-shift calibration: regress (shift * kappa^2) against
    applied power and invert the slope for x.

    With series=None the record is synthesized from the config; otherwise the
    given (ingested) record is calibrated. kappa always comes from the
    config's kappa model.
    """
    _expect_pipeline(cfg, PIPELINE_QUBIT)
    transmon = cfg.system.require_transmon()
    omega_p = cfg.system.resonator.omega_c
    if series is None:
        series = synthesize_qubit_series(cfg)

    powers = np.asarray(series.p_app_w, dtype=float)
    if len(powers) == 0:
        raise ConfigurationError("empty power series")
    kappas = np.array([kappa_at_power(cfg.kappa_model, float(p)) for p in powers])
    shifts = TWO_PI * np.asarray(series.stark_shift_hz, dtype=float)
    y = shifts * kappas**2
    y_sigma = None
    if series.sigma_hz is not None and np.any(series.sigma_hz > 0.0):
        y_sigma = TWO_PI * np.asarray(series.sigma_hz, dtype=float) * kappas**2

    fit = weighted_line_fit(powers, y, y_sigma)
    x_hat = x_from_stark_slope(fit.slope, transmon, cfg.delta_tc, omega_p)
    if not (np.isfinite(x_hat) and x_hat > 0.0):
        raise FitError(f"slope inversion produced a nonphysical calibration factor {x_hat!r}")

    n_crit = critical_photon_number(transmon.g_tc, cfg.delta_tc)
    n_est = np.array([photon_number(float(p), x_hat, omega_p, k, 0.0) for p, k in zip(powers, kappas)])
    worst = float(np.max(n_est))
    if worst >= n_crit:
        raise ConfigurationError(
            f"photon number {worst:.1f} reaches the dispersive-limit bound {n_crit:.1f}; "
            "the calibration model does not apply"
        )

    budget = {"statistical": abs(fit.slope_sigma / fit.slope)}
    if "g_tc" in cfg.uncertainties:
        budget["g_tc"] = 2.0 * cfg.uncertainties["g_tc"] / transmon.g_tc
    if "alpha" in cfg.uncertainties:
        budget["alpha"] = abs(
            (1.0 / (transmon.alpha + cfg.delta_tc) - 1.0 / transmon.alpha) * cfg.uncertainties["alpha"]
        )
    sigma_stat = x_hat * budget["statistical"]
    sigma_total = x_hat * _quadrature(budget)

    points = [
        {
            "p_app_w": float(p),
            "kappa_hz": float(k / TWO_PI),
            "stark_shift_hz": float(s),
            "stark_kappa2_rad3_s3": float(v),
            "photon_number": float(n),
        }
        for p, k, s, v, n in zip(powers, kappas, series.stark_shift_hz, y, n_est)
    ]
    return CalibrationReport(
        pipeline=cfg.pipeline,
        config_digest=cfg.digest,
        noise_seed=cfg.noise.seed,
        slope=fit.slope,
        slope_sigma=fit.slope_sigma,
        slope_units="rad^3 s^-3 W^-1",
        intercept=fit.intercept,
        intercept_sigma=fit.intercept_sigma,
        intercept_units="rad^3 s^-3",
        recovered_name="x_qb",
        recovered_value=x_hat,
        recovered_sigma_statistical=sigma_stat,
        recovered_sigma_total=sigma_total,
        recovered_units="1/s",
        chi2_reduced=fit.chi2_reduced,
        photon_min=float(np.min(n_est)),
        photon_max=float(np.max(n_est)),
        points=points,
        excluded_points=[],
        uncertainty_budget=budget,
        notes=["parameter correlations neglected in the uncertainty budget"],
    )


def run_emia_pipeline(cfg: ExperimentConfig, traces: list[Trace] | None = None) -> CalibrationReport:
    """Sideband-absorption calibration: fit each interference dip for its
    effective linewidth, regress against the drive kernel (slope = x,
    intercept = intrinsic linewidth).

    Points whose dip is unresolved (gamma_eff > kappa/10) or whose fit did
    not converge are excluded with a warning and listed in the report.
    """
    _expect_pipeline(cfg, PIPELINE_EMIA)
    mech = cfg.system.require_mechanics()
    omega_c = cfg.system.resonator.omega_c
    omega_d = omega_c - mech.omega_m
    if traces is None:
        traces = synthesize_emia_traces(cfg)
    if not traces:
        raise ConfigurationError("no sideband-interference traces to calibrate")

    records = []
    for trace in traces:
        if "p_app_w" not in trace.meta:
            raise ConfigurationError("trace metadata lacks p_app_w; cannot place it on the sweep")
        records.append((float(trace.meta["p_app_w"]), trace))
    records.sort(key=lambda item: item[0])

    used, excluded = [], []
    for p, trace in records:
        kappa = kappa_at_power(cfg.kappa_model, p)
        amp = float(trace.meta.get("noise_relative_amplitude", cfg.noise.relative_amplitude))
        sigma = amp * np.maximum(trace.values, 1e-12 * np.max(trace.values)) if amp > 0.0 else None
        try:
            fit = lorentzian_fit(trace, init=_dip_init(trace), sigma=sigma)
        except FitError as exc:
            excluded.append({"p_app_w": p, "kappa_hz": kappa / TWO_PI, "reason": str(exc)})
            warnings.warn(f"excluding {p:.4g} W: {exc}", stacklevel=2)
            continue
        gamma_eff = TWO_PI * fit.fwhm
        bin_hz = float(np.median(np.diff(trace.freq_hz)))
        entry = {
            "p_app_w": p,
            "kappa_hz": kappa / TWO_PI,
            "gamma_eff_hz": gamma_eff / TWO_PI,
            "gamma_eff_sigma_hz": fit.fwhm_sigma,
            "dip_depth": -fit.amplitude,
        }
        reason = None
        if not fit.converged:
            reason = "lineshape fit did not converge"
        elif fit.amplitude >= 0.0:
            reason = "no absorption dip found"
        elif fit.fwhm < bin_hz:
            reason = "fitted width narrower than the frequency grid"
        elif gamma_eff > kappa / 10.0:
            reason = "interference dip not resolved against the cavity line"
        elif sigma is not None and fit.fwhm_sigma == 0.0:
            reason = "degenerate width uncertainty"
        if reason is not None:
            entry["reason"] = reason
            excluded.append(entry)
            warnings.warn(f"excluding {p:.4g} W: {reason}", stacklevel=2)
            continue
        kernel = emia_power_kernel(p, mech, kappa, omega_d, -mech.omega_m)
        entry["kernel_rad"] = kernel
        used.append(entry)

    if len(used) < 2:
        raise FitError(f"only {len(used)} usable interference points; need at least 2")

    kernels = np.array([e["kernel_rad"] for e in used])
    gammas = TWO_PI * np.array([e["gamma_eff_hz"] for e in used])
    sigmas = TWO_PI * np.array([e["gamma_eff_sigma_hz"] for e in used])
    fit = weighted_line_fit(kernels, gammas, sigmas if np.all(sigmas > 0.0) else None)
    x_hat = fit.slope
    gamma_m_hat = fit.intercept
    if not (np.isfinite(x_hat) and x_hat > 0.0):
        raise FitError(f"kernel regression produced a nonphysical calibration factor {x_hat!r}")
    if gamma_m_hat <= 0.0:
        raise FitError(f"regression intercept {gamma_m_hat!r} is not a physical linewidth")

    n_est = []
    for e in used:
        kappa = TWO_PI * e["kappa_hz"]
        n = photon_number(e["p_app_w"], x_hat, omega_d, kappa, -mech.omega_m)
        e["photon_number"] = float(n)
        n_est.append(n)

    budget = {"statistical": abs(fit.slope_sigma / fit.slope)}
    if "g_m0" in cfg.uncertainties:
        budget["g_m0"] = 2.0 * cfg.uncertainties["g_m0"] / mech.g_m0
    if "kappa" in cfg.uncertainties:
        kappa_mid = float(np.median([TWO_PI * e["kappa_hz"] for e in used]))
        leverage = 1.0 + 2.0 * kappa_mid**2 / (kappa_mid**2 + 4.0 * mech.omega_m**2)
        budget["kappa"] = leverage * cfg.uncertainties["kappa"] / kappa_mid
    sigma_stat = x_hat * budget["statistical"]
    sigma_total = x_hat * _quadrature(budget)

    return CalibrationReport(
        pipeline=cfg.pipeline,
        config_digest=cfg.digest,
        noise_seed=cfg.noise.seed,
        slope=x_hat,
        slope_sigma=fit.slope_sigma,
        slope_units="1/s",
        intercept=gamma_m_hat,
        intercept_sigma=fit.intercept_sigma,
        intercept_units="rad/s",
        recovered_name="x_emia",
        recovered_value=x_hat,
        recovered_sigma_statistical=sigma_stat,
        recovered_sigma_total=sigma_total,
        recovered_units="1/s",
        chi2_reduced=fit.chi2_reduced,
        photon_min=float(np.min(n_est)),
        photon_max=float(np.max(n_est)),
        points=used,
        excluded_points=excluded,
        uncertainty_budget=budget,
        notes=["parameter correlations neglected in the uncertainty budget"],
    )


def run_gm0_pipeline(cfg: ExperimentConfig, traces: list[Trace] | None = None) -> CalibrationReport:
    """Thermal calibration of the vacuum electromechanical coupling: per
    temperature, split the sideband PSD into thermal peak and calibration
    spur, convert the ratio to the frequency-noise variance, then regress the
    variance against temperature and take g_m0 from the slope."""
    _expect_pipeline(cfg, PIPELINE_GM0)
    mech = cfg.system.require_mechanics()
    if traces is None:
        traces = synthesize_psd_traces(cfg)
    if not traces:
        raise ConfigurationError("no noise spectra to calibrate")

    records = []
    for trace in traces:
        if "temperature_k" not in trace.meta:
            raise ConfigurationError("trace metadata lacks temperature_k")
        records.append((float(trace.meta["temperature_k"]), trace))
    records.sort(key=lambda item: item[0])

    f_m_hint = mech.omega_m / TWO_PI
    f_mod_hint = cfg.tone.omega_mod / TWO_PI
    used, excluded = [], []
    for temperature, trace in records:
        entry = {"temperature_k": temperature}
        try:
            est = psd_peak_ratio(trace, f_m_hint, f_mod_hint, cfg.enbw_hz)
        except FitError as exc:
            entry["reason"] = str(exc)
            excluded.append(entry)
            warnings.warn(f"excluding {temperature:.4g} K: {exc}", stacklevel=2)
            continue
        variance = integrated_displacement_noise(
            est.s_pp_over_s_mod, cfg.tone.phi0, cfg.tone.omega_mod, est.gamma_m, cfg.enbw_hz
        )
        amp = float(trace.meta.get("noise_relative_amplitude", cfg.noise.relative_amplitude))
        cov = est.fit.covariance
        rel_var = 0.0
        if est.s_pp > 0.0 and est.fit.fwhm > 0.0:
            rel_var = (
                cov[2, 2] / est.s_pp**2
                + cov[1, 1] / est.fit.fwhm**2
                + 2.0 * cov[1, 2] / (est.s_pp * est.fit.fwhm)
            )
        rel_var += amp * amp  # single-bin spur carries the raw noise
        entry.update(
            {
                "variance_hz2": variance / TWO_PI**2,
                "variance_sigma_hz2": variance / TWO_PI**2 * float(np.sqrt(max(rel_var, 0.0))),
                "gamma_m_hz": est.gamma_m / TWO_PI,
                "peak_ratio": est.s_pp_over_s_mod,
            }
        )
        used.append(entry)

    if len(used) < 2:
        raise FitError(f"only {len(used)} usable spectra; need at least 2")

    temperatures = np.array([e["temperature_k"] for e in used])
    variances = np.array([e["variance_hz2"] for e in used])
    sigmas = np.array([e["variance_sigma_hz2"] for e in used])
    fit = weighted_line_fit(temperatures, variances, sigmas if np.all(sigmas > 0.0) else None)
    if not (np.isfinite(fit.slope) and fit.slope > 0.0):
        raise FitError(f"variance-vs-temperature slope {fit.slope!r} is not physical")

    g_hat = vacuum_coupling_from_slope(fit.slope, mech.omega_m)
    sigma_stat = g_hat * 0.5 * fit.slope_sigma / fit.slope
    budget = {"statistical": 0.5 * fit.slope_sigma / fit.slope}
    occupation_offset = fit.intercept / (2.0 * (g_hat / TWO_PI) ** 2)

    return CalibrationReport(
        pipeline=cfg.pipeline,
        config_digest=cfg.digest,
        noise_seed=cfg.noise.seed,
        slope=fit.slope * TWO_PI**2,
        slope_sigma=fit.slope_sigma * TWO_PI**2,
        slope_units="rad^2 s^-2 K^-1",
        intercept=occupation_offset,
        intercept_sigma=fit.intercept_sigma / (2.0 * (g_hat / TWO_PI) ** 2),
        intercept_units="phonon occupation offset",
        recovered_name="g_m0",
        recovered_value=g_hat,
        recovered_sigma_statistical=sigma_stat,
        recovered_sigma_total=sigma_stat,
        recovered_units="rad/s",
        chi2_reduced=fit.chi2_reduced,
        photon_min=None,
        photon_max=None,
        points=used,
        excluded_points=excluded,
        uncertainty_budget=budget,
        notes=["intercept reported as a residual (back-action) occupation offset"],
    )


def run_pipeline(cfg: ExperimentConfig, data=None) -> CalibrationReport:
    """Dispatch on the configured pipeline; data is a PowerSeries or trace
    list for ingestion mode, or None to synthesize."""
    if cfg.pipeline == PIPELINE_QUBIT:
        return run_qubit_pipeline(cfg, data)
    if cfg.pipeline == PIPELINE_EMIA:
        return run_emia_pipeline(cfg, data)
    return run_gm0_pipeline(cfg, data)


# ---------------------------------------------------------------------------
# cross-method consistency


def cross_consistency(
    report_a: CalibrationReport | dict,
    report_b: CalibrationReport | dict,
    threshold: float = DEFAULT_CONSISTENCY_THRESHOLD,
) -> dict:
    """Compare two calibration-factor recoveries: relative difference
    2|xa-xb|/(xa+xb) against the threshold, plus the combined span of photon
    numbers the two methods covered."""
    if not (np.isfinite(threshold) and 0.0 < threshold < 1.0):
        raise DomainError("threshold must be a fraction in (0, 1)")
    doc_a = report_a.to_dict() if isinstance(report_a, CalibrationReport) else report_a
    doc_b = report_b.to_dict() if isinstance(report_b, CalibrationReport) else report_b
    values = []
    endpoints = []
    for doc in (doc_a, doc_b):
        recovered = doc.get("recovered", {})
        if recovered.get("units") != "1/s" or not str(recovered.get("name", "")).startswith("x"):
            raise ConfigurationError(
                f"report for pipeline {doc.get('pipeline')!r} carries no calibration factor x"
            )
        values.append(float(recovered["value"]))
        photon_range = doc.get("photon_number_range")
        if photon_range:
            endpoints.extend([float(photon_range["min"]), float(photon_range["max"])])
    x_a, x_b = values
    relative_difference = 2.0 * abs(x_a - x_b) / (x_a + x_b)
    span = max(endpoints) / min(endpoints) if endpoints else None
    return {
        "schema": CHECK_SCHEMA,
        "x_a_per_s": x_a,
        "x_b_per_s": x_b,
        "pipeline_a": doc_a.get("pipeline"),
        "pipeline_b": doc_b.get("pipeline"),
        "relative_difference": relative_difference,
        "threshold": threshold,
        "consistent": bool(relative_difference <= threshold),
        "photon_span_ratio": span,
    }


# ---------------------------------------------------------------------------
# self test


def run_selftest(printer=print) -> int:
    """Run all three pipelines noiselessly from the packaged reference
    configurations and verify the recoveries and their cross-consistency.
    Returns a CLI exit code (0 ok, 3 reproduction failure, 4 consistency)."""
    checks: list[tuple[str, bool]] = []

    def check(label: str, ok: bool) -> bool:
        checks.append((label, ok))
        printer(f"[{'ok' if ok else 'FAIL'}] {label}")
        return ok

    qubit_cfg = default_config(PIPELINE_QUBIT)
    qubit = run_qubit_pipeline(qubit_cfg)
    check(
        f"dispersive-shift pipeline recovers injected x ({qubit.recovered_value:.6f} /s)",
        abs(qubit.recovered_value / qubit_cfg.x_true - 1.0) < 1e-9,
    )
    check(
        f"dispersive photon range {qubit.photon_min:.3g}..{qubit.photon_max:.3g}",
        abs(qubit.photon_min / 0.7 - 1.0) < 0.05 and abs(qubit.photon_max / 28.0 - 1.0) < 0.05,
    )

    emia_cfg = default_config(PIPELINE_EMIA)
    emia = run_emia_pipeline(emia_cfg)
    check(
        f"sideband-absorption pipeline recovers injected x ({emia.recovered_value:.4f} /s)",
        abs(emia.recovered_value / emia_cfg.x_true - 1.0) < 0.01,
    )
    check(
        f"sideband-absorption intrinsic linewidth ({emia.intercept / TWO_PI:.4f} Hz)",
        abs(emia.intercept / emia_cfg.system.mechanics.gamma_m - 1.0) < 0.01,
    )
    check(
        f"sideband photon range {emia.photon_min:.3g}..{emia.photon_max:.3g}",
        abs(emia.photon_min / 1.4e6 - 1.0) < 0.1 and abs(emia.photon_max / 1.4e8 - 1.0) < 0.1,
    )

    gm0_cfg = default_config(PIPELINE_GM0)
    gm0 = run_gm0_pipeline(gm0_cfg)
    g_true = gm0_cfg.system.mechanics.g_m0
    check(
        f"thermal pipeline recovers vacuum coupling ({gm0.recovered_value / TWO_PI:.4f} Hz)",
        abs(gm0.recovered_value / g_true - 1.0) < 0.005,
    )
    check(
        f"thermal slope {gm0.slope / TWO_PI**2:.1f} Hz^2/K",
        abs(gm0.slope / TWO_PI**2 / 1.253e3 - 1.0) < 0.01,
    )

    if not all(ok for _, ok in checks):
        return 3

    verdict = cross_consistency(qubit, emia)
    ok = check(
        f"cross-method consistency: relative difference {verdict['relative_difference']:.4f}",
        verdict["consistent"] and abs(verdict["relative_difference"] - 0.0434) < 0.001,
    )
    return 0 if ok else 4
