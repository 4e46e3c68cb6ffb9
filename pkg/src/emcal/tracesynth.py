"""Deterministic synthesis of instrument traces: resonator transmission
sweeps, sideband-interference sweeps and thermal-motion noise spectra.

Traces are plain sampled records: a strictly increasing frequency axis in Hz
plus dimensionless values (|S21|^2 relative to the bare resonance peak, or a
PSD in frequency-noise units per Hz). Synthesis is pure: the same parameters
and seed always give bit-identical arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .physcore import (
    TWO_PI,
    DriveConfig,
    KB,
    HBAR,
    MechanicsParams,
    ResonatorParams,
    SystemParams,
    photon_number,
)

TRANSMISSION = "transmission_power"
PSD = "psd"
_KINDS = (TRANSMISSION, PSD)

TRACE_FORMAT = "emcal-trace v1"


@dataclass(frozen=True)
class Trace:
    """One swept-frequency instrument record."""

    kind: str
    freq_hz: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown trace kind {self.kind!r}")
        f = np.asarray(self.freq_hz, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.ndim != 1 or v.shape != f.shape:
            raise DomainError("freq_hz and values must be 1-d arrays of equal length")
        if len(f) < 8:
            raise DomainError("a trace needs at least 8 points")
        if not np.all(np.diff(f) > 0.0):
            raise DomainError("frequency axis must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(v))):
            raise DomainError("trace data must be finite")
        if self.kind == TRANSMISSION and np.any(v < 0.0):
            raise DomainError("transmission values must be nonnegative")
        f.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.freq_hz)


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative Gaussian noise: relative standard deviation and the
    64-bit base seed of the generator."""

    relative_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.relative_amplitude) and self.relative_amplitude >= 0.0):
            raise DomainError("noise amplitude must be finite and nonnegative")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError("seed must be a 64-bit nonnegative integer")


@dataclass(frozen=True)
class CalibrationTone:
    """Frequency-modulation tone used to scale a noise spectrum: modulation
    index phi0 (dimensionless) at carrier offset omega_mod (rad/s)."""

    phi0: float
    omega_mod: float

    def __post_init__(self):
        if not (np.isfinite(self.phi0) and self.phi0 >= 0.0):
            raise DomainError("modulation index must be finite and nonnegative")
        if not (np.isfinite(self.omega_mod) and self.omega_mod > 0.0):
            raise DomainError("omega_mod must be positive")


@dataclass(frozen=True)
class KappaModel:
    """Resonator linewidth versus applied power.

    linear: kappa(p) = offset + slope*p. tabulated: piecewise-linear
    interpolation over (power W, kappa rad/s) pairs with clamped
    extrapolation. All rates angular.
    """

    mode: str
    offset: float = 0.0
    slope: float = 0.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.mode == "linear":
            if not (np.isfinite(self.offset) and self.offset > 0.0):
                raise ConfigurationError("linear kappa model requires a positive offset")
            if not np.isfinite(self.slope):
                raise ConfigurationError("kappa model slope must be finite")
        elif self.mode == "tabulated":
            if len(self.table) < 2:
                raise ConfigurationError("tabulated kappa model needs at least 2 entries")
            powers = [p for p, _ in self.table]
            kappas = [k for _, k in self.table]
            if any(b <= a for a, b in zip(powers, powers[1:])):
                raise ConfigurationError("tabulated powers must be strictly increasing")
            if any(not (np.isfinite(k) and k > 0.0) for k in kappas):
                raise ConfigurationError("tabulated kappa values must be positive")
        else:
            raise ConfigurationError(f"unknown kappa model mode {self.mode!r}")


def kappa_at_power(model: KappaModel, p_app: float) -> float:
    """Resonator linewidth (rad/s) at applied power p_app (W)."""
    if not (np.isfinite(p_app) and p_app >= 0.0):
        raise DomainError("p_app must be finite and nonnegative")
    if model.mode == "linear":
        kappa = model.offset + model.slope * p_app
    else:
        powers = np.array([p for p, _ in model.table])
        kappas = np.array([k for _, k in model.table])
        kappa = float(np.interp(p_app, powers, kappas))
    if kappa <= 0.0:
        raise DomainError(f"kappa model returned nonpositive linewidth at {p_app} W")
    return kappa


def lorentzian_s21(params: ResonatorParams, freq_hz) -> Trace:
    """Power transmission of the bare resonator: a unit-height Lorentzian of
    FWHM kappa centred on omega_c."""
    f = np.asarray(freq_hz, dtype=float)
    delta = TWO_PI * f - params.omega_c
    half = 0.5 * params.kappa
    values = half**2 / (half**2 + delta**2)
    meta = {
        "omega_c_hz": params.omega_c / TWO_PI,
        "kappa_hz": params.kappa / TWO_PI,
    }
    return Trace(TRANSMISSION, f, values, meta)


def emia_s21(system: SystemParams, drive: DriveConfig, kappa: float, probe_axis_hz) -> Trace:
    """Probe transmission of the sideband-driven electromechanical system.

    Full input-output interference expression: the mechanical response adds a
    term G^2/(gamma_m/2 - i*delta_probe_sideband) to the cavity denominator,
    with G^2 = g_m0^2 * n_drive and n_drive from the drive tone power. The
    narrow absorption dip that results has depth 1 - 1/(1+C)^2 and width
    gamma_m*(1+C) on top of the cavity line. Returned as |S21|^2 normalized
    to the bare resonance peak.

    Requires a red-sideband drive (delta_mc = -omega_m) and a resolved
    sideband (kappa < omega_m).
    """
    mech = system.require_mechanics()
    if not (np.isfinite(kappa) and kappa > 0.0):
        raise DomainError("kappa must be positive")
    if abs(drive.delta_mc + mech.omega_m) > 1e-3 * mech.omega_m:
        raise ConfigurationError(
            "sideband drive must sit one mechanical frequency below the resonator "
            f"(delta_mc={drive.delta_mc:.6g}, -omega_m={-mech.omega_m:.6g})"
        )
    if kappa >= mech.omega_m:
        raise ConfigurationError("model assumes the resolved-sideband regime (kappa < omega_m)")

    f = np.asarray(probe_axis_hz, dtype=float)
    n_d = photon_number(drive.p_app, drive.x, drive.omega_d, kappa, drive.delta_mc)
    g2 = mech.g_m0 * mech.g_m0 * n_d

    w = TWO_PI * f
    delta_p = w - system.resonator.omega_c
    delta_sb = w - drive.omega_d - mech.omega_m
    half_g = 0.5 * mech.gamma_m
    mech_den = half_g**2 + delta_sb**2
    re_m = g2 * half_g / mech_den
    im_m = g2 * delta_sb / mech_den
    half = 0.5 * kappa
    values = half**2 / ((half + re_m) ** 2 + (im_m - delta_p) ** 2)

    meta = {
        "omega_c_hz": system.resonator.omega_c / TWO_PI,
        "kappa_hz": kappa / TWO_PI,
        "omega_m_hz": mech.omega_m / TWO_PI,
        "gamma_m_hz": mech.gamma_m / TWO_PI,
        "g_m0_hz": mech.g_m0 / TWO_PI,
        "omega_d_hz": drive.omega_d / TWO_PI,
        "omega_p_hz": drive.omega_p / TWO_PI,
        "delta_mc_hz": drive.delta_mc / TWO_PI,
        "p_app_w": drive.p_app,
        "x_per_s": drive.x,
        "n_drive": n_d,
    }
    return Trace(TRANSMISSION, f, values, meta)


def sideband_psd(
    system: SystemParams,
    temperature_k: float,
    tone: CalibrationTone,
    enbw_hz: float,
    freq_axis_hz,
) -> Trace:
    """Noise power spectral density of the resonator sideband carrying the
    string's thermal motion, in frequency-noise units ((rad/s)^2 per Hz).

    The thermal peak is a Lorentzian of FWHM gamma_m at omega_m whose
    integral over the axis equals the variance 2*g_m0^2*n_bar(T); the
    calibration tone appears as a single-bin spur of height
    phi0^2*omega_mod^2/ENBW at omega_mod. Baseline is zero. With these two
    height conventions the peak-ratio estimator returns the variance exactly.
    """
    mech = system.require_mechanics()
    if not (np.isfinite(temperature_k) and temperature_k > 0.0):
        raise DomainError("temperature must be positive")
    if not (np.isfinite(enbw_hz) and enbw_hz > 0.0):
        raise DomainError("analyzer bandwidth must be positive")

    f = np.asarray(freq_axis_hz, dtype=float)
    f_m = mech.omega_m / TWO_PI
    f_mod = tone.omega_mod / TWO_PI
    if not (f[0] <= min(f_m, f_mod) and max(f_m, f_mod) <= f[-1]):
        raise DomainError("frequency axis must cover both the thermal peak and the spur")

    n_bar = KB * temperature_k / (HBAR * mech.omega_m)
    variance = 2.0 * mech.g_m0 * mech.g_m0 * n_bar
    gamma_hz = mech.gamma_m / TWO_PI
    peak_height = variance / (np.pi * gamma_hz / 2.0)
    values = peak_height * (0.5 * gamma_hz) ** 2 / ((0.5 * gamma_hz) ** 2 + (f - f_m) ** 2)

    spur_index = int(np.argmin(np.abs(f - f_mod)))
    values = values.copy()
    values[spur_index] += tone.phi0**2 * tone.omega_mod**2 / enbw_hz

    meta = {
        "omega_m_hz": f_m,
        "gamma_m_hz": gamma_hz,
        "g_m0_hz": mech.g_m0 / TWO_PI,
        "mass_kg": mech.mass,
        "temperature_k": temperature_k,
        "omega_mod_hz": f_mod,
        "phi0": tone.phi0,
        "enbw_hz": enbw_hz,
    }
    return Trace(PSD, f, values, meta)


def derive_seed(base_seed: int, index: int) -> int:
    """Per-trace 64-bit seed from (base seed, trace index); stable across
    serial and parallel synthesis order."""
    ss = np.random.SeedSequence(entropy=[int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def add_noise(trace: Trace, spec: NoiseSpec) -> Trace:
    """Multiplicative Gaussian perturbation of a trace, deterministic in the
    seed. Zero amplitude returns the input unchanged. Transmission values are
    floored at zero to keep the record physical."""
    if spec.relative_amplitude == 0.0:
        return trace
    rng = np.random.default_rng(spec.seed)
    values = trace.values * (1.0 + spec.relative_amplitude * rng.standard_normal(len(trace)))
    if trace.kind == TRANSMISSION:
        values = np.maximum(values, 0.0)
    meta = dict(trace.meta)
    meta["noise_relative_amplitude"] = spec.relative_amplitude
    meta["rng_seed"] = int(spec.seed)
    return Trace(trace.kind, trace.freq_hz, values, meta)


def with_meta(trace: Trace, **entries) -> Trace:
    """Copy of the trace with extra metadata entries merged in."""
    meta = dict(trace.meta)
    meta.update(entries)
    return replace(trace, meta=meta)


def default_emia_axis(center_hz: float, gamma_eff: float, points: int = 801, linewidths: float = 40.0) -> np.ndarray:
    """Probe axis for a sideband-interference sweep: center +- linewidths
    half-widths of the expected dip."""
    half = linewidths * gamma_eff / TWO_PI
    return np.linspace(center_hz - half, center_hz + half, int(points))


def default_psd_axis(mech: MechanicsParams, points: int = 1601, linewidths: float = 30.0) -> np.ndarray:
    """Analyzer axis for a sideband noise spectrum around the mechanical peak."""
    f_m = mech.omega_m / TWO_PI
    half = linewidths * mech.gamma_m / TWO_PI
    return np.linspace(f_m - half, f_m + half, int(points))


def _format_meta_value(value) -> str:
    if isinstance(value, bool):
        raise DomainError("boolean metadata is not supported")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


_INT_PATTERN = re.compile(r"^-?\d+$")


def _parse_meta_value(text: str):
    if _INT_PATTERN.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def write_trace_csv(trace: Trace, path) -> None:
    """Serialize a trace. Header line, kind, sorted metadata as comments,
    then freq_hz,value rows in full round-trip precision."""
    lines = [f"# {TRACE_FORMAT}", f"# kind={trace.kind}"]
    for key in sorted(trace.meta):
        if key == "kind":
            raise DomainError("metadata key 'kind' is reserved")
        lines.append(f"# {key}={_format_meta_value(trace.meta[key])}")
    lines.append("freq_hz,value")
    for f, v in zip(trace.freq_hz.tolist(), trace.values.tolist()):
        lines.append(f"{f!r},{v!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path) -> Trace:
    """Read back a trace written by write_trace_csv; floats are exact."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigurationError(f"cannot read trace {path}: {exc}") from exc
    if not lines or lines[0] != f"# {TRACE_FORMAT}":
        raise ConfigurationError(f"{path}: not a {TRACE_FORMAT} file")
    meta: dict = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("# "):
            key, sep, value = line[2:].partition("=")
            if not sep:
                raise ConfigurationError(f"{path}: malformed metadata line {line!r}")
            meta[key.strip()] = _parse_meta_value(value.strip())
        else:
            body_start = i
            break
    if body_start is None or lines[body_start] != "freq_hz,value":
        raise ConfigurationError(f"{path}: missing 'freq_hz,value' column header")
    kind = meta.pop("kind", None)
    if kind not in _KINDS:
        raise ConfigurationError(f"{path}: missing or unknown trace kind")
    freqs, values = [], []
    for line in lines[body_start + 1 :]:
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigurationError(f"{path}: malformed data row {line!r}")
        freqs.append(float(parts[0]))
        values.append(float(parts[1]))
    return Trace(kind, np.array(freqs), np.array(values), meta)
