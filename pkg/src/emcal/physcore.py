"""Closed-form physics of a driven microwave resonator coupled to a transmon
qubit and a nanomechanical string.

Unit convention: every frequency, rate, detuning and coupling in this module
is ANGULAR (rad/s). Conversion to ordinary frequency happens only at I/O
surfaces, which carry explicit ``_hz`` (value/2pi) naming. All functions are
pure: same inputs give bit-identical outputs, and nothing here mutates state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import ConfigurationError, DomainError, SingularityError

TWO_PI = 2.0 * math.pi

# CODATA: exact by SI definition since the 2019 redefinition.
HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23       # J/K


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class PhysicalConstants:
    """Fixed fundamental constants. The values are not free parameters."""

    hbar: float = HBAR
    kb: float = KB

    def __post_init__(self):
        if self.hbar != HBAR or self.kb != KB:
            raise DomainError("physical constants are fixed CODATA values")


@dataclass(frozen=True)
class ResonatorParams:
    """Microwave resonator: resonance frequency and total loss rate (rad/s)."""

    omega_c: float
    kappa: float

    def __post_init__(self):
        _require(_finite(self.omega_c, self.kappa), "resonator parameters must be finite")
        _require(self.omega_c > 0.0, "omega_c must be positive")
        _require(self.kappa > 0.0, "kappa must be positive")
        # high-Q regime assumed throughout
        _require(self.kappa / self.omega_c < 1e-2, "kappa must be far below omega_c")


@dataclass(frozen=True)
class TransmonParams:
    """Transmon qubit parameters.

    alpha is the (negative) anharmonicity in rad/s; e_c is the charging
    energy in joules and equals -hbar*alpha. If e_c is omitted it is derived;
    if given it must be consistent.
    """

    omega_q_max: float
    alpha: float
    g_tc: float
    e_c: float | None = None

    def __post_init__(self):
        _require(_finite(self.omega_q_max, self.alpha, self.g_tc), "transmon parameters must be finite")
        _require(self.omega_q_max > 0.0, "omega_q_max must be positive")
        _require(self.alpha < 0.0, "transmon anharmonicity must be negative")
        _require(self.g_tc > 0.0, "g_tc must be positive")
        derived = -HBAR * self.alpha
        if self.e_c is None:
            object.__setattr__(self, "e_c", derived)
        else:
            _require(
                abs(self.e_c - derived) <= 1e-9 * derived,
                "e_c must equal -hbar*alpha",
            )


@dataclass(frozen=True)
class MechanicsParams:
    """Nanomechanical string: frequency, intrinsic linewidth, vacuum
    electromechanical coupling (all rad/s) and effective mass (kg)."""

    omega_m: float
    gamma_m: float
    g_m0: float
    mass: float

    def __post_init__(self):
        _require(
            _finite(self.omega_m, self.gamma_m, self.g_m0, self.mass),
            "mechanics parameters must be finite",
        )
        _require(self.omega_m > 0.0, "omega_m must be positive")
        _require(self.gamma_m > 0.0, "gamma_m must be positive")
        _require(self.gamma_m / self.omega_m < 1e-3, "gamma_m must be far below omega_m")
        _require(self.g_m0 > 0.0, "g_m0 must be positive")
        _require(self.mass > 0.0, "mass must be positive")


@dataclass(frozen=True)
class DriveConfig:
    """Applied tones for one measurement point.

    p_app is the source power in W before the input line; x (1/s) is the
    calibration factor folding line attenuation and external coupling into a
    single number, exactly as it enters the intra-resonator photon number.
    """

    p_app: float
    omega_p: float
    omega_d: float
    delta_p: float
    delta_mc: float
    x: float

    def __post_init__(self):
        _require(
            _finite(self.p_app, self.omega_p, self.omega_d, self.delta_p, self.delta_mc, self.x),
            "drive parameters must be finite",
        )
        _require(self.p_app >= 0.0, "p_app must be nonnegative")
        _require(self.x > 0.0, "calibration factor x must be positive")
        _require(self.omega_p > 0.0 and self.omega_d > 0.0, "tone frequencies must be positive")


@dataclass(frozen=True)
class SystemParams:
    """Full device parameter set. Blocks not needed by a given measurement
    mode may be None; operations that need a missing block raise."""

    resonator: ResonatorParams
    transmon: TransmonParams | None = None
    mechanics: MechanicsParams | None = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def require_transmon(self) -> TransmonParams:
        if self.transmon is None:
            raise ConfigurationError("transmon parameters are required but missing")
        return self.transmon

    def require_mechanics(self) -> MechanicsParams:
        if self.mechanics is None:
            raise ConfigurationError("mechanics parameters are required but missing")
        return self.mechanics


def photon_number(p_app: float, x: float, omega: float, kappa: float, delta: float) -> float:
    """Average intra-resonator photon number for a symmetric two-port
    half-wave resonator driven with source power p_app (W).

    n = 2 * p_app * x / (hbar * omega * (kappa^2 + 4*delta^2))

    omega is the drive tone frequency, delta its detuning from the resonator,
    both rad/s. x (1/s) is the line calibration factor.
    """
    _require(_finite(p_app, x, omega, kappa, delta), "photon_number inputs must be finite")
    _require(omega > 0.0, "omega must be positive")
    _require(kappa > 0.0, "kappa must be positive")
    _require(p_app >= 0.0, "p_app must be nonnegative")
    _require(x > 0.0, "x must be positive")
    return 2.0 * p_app * x / (HBAR * omega * (kappa * kappa + 4.0 * delta * delta))


def ac_stark_shift(n: float, transmon: TransmonParams, delta_tc: float) -> float:
    """Qubit frequency shift per the dispersive model, linear in the photon
    number n. delta_tc is the qubit-resonator detuning (rad/s).

    Negative for the usual sign combination (alpha < 0, 0 < |alpha| < delta_tc).
    """
    _require(_finite(n, delta_tc), "ac_stark_shift inputs must be finite")
    if delta_tc == 0.0:
        raise SingularityError("ac-Stark shift diverges at zero qubit-resonator detuning")
    if transmon.alpha + delta_tc == 0.0:
        raise SingularityError("ac-Stark shift diverges when delta_tc equals -alpha")
    g = transmon.g_tc
    return 2.0 * (g * g / delta_tc) * (transmon.alpha / (transmon.alpha + delta_tc)) * n


def cooperativity(n_d: float, mech: MechanicsParams, kappa: float) -> float:
    """Electromechanical cooperativity C = 4 g_m0^2 n_d / (kappa * gamma_m)."""
    _require(_finite(n_d, kappa), "cooperativity inputs must be finite")
    _require(kappa > 0.0, "kappa must be positive")
    _require(n_d >= 0.0, "drive photon number must be nonnegative")
    return 4.0 * mech.g_m0 * mech.g_m0 * n_d / (kappa * mech.gamma_m)


def emia_effective_linewidth(
    p_app: float,
    x: float,
    mech: MechanicsParams,
    kappa: float,
    omega_d: float,
    delta_mc: float,
) -> float:
    """Effective mechanical linewidth gamma_m * (1 + C) under a sideband
    drive of power p_app, with the drive photon number taken from
    photon_number at (omega_d, delta_mc)."""
    n_d = photon_number(p_app, x, omega_d, kappa, delta_mc)
    return mech.gamma_m * (1.0 + cooperativity(n_d, mech, kappa))


def critical_photon_number(g_tc: float, delta_tc: float) -> float:
    """Dispersive-limit validity bound: n_crit = delta_tc^2 / (2*g_tc)^2."""
    _require(_finite(g_tc, delta_tc), "critical_photon_number inputs must be finite")
    _require(g_tc > 0.0, "g_tc must be positive")
    r = delta_tc / (2.0 * g_tc)
    return r * r


def anharmonicity_from_two_photon(omega_ge: float, omega_gf: float) -> float:
    """Anharmonicity from the single-photon g-e line and the two-photon g-f
    line: alpha = omega_gf - 2*omega_ge (signed; negative for a transmon)."""
    _require(_finite(omega_ge, omega_gf), "inputs must be finite")
    _require(omega_ge > 0.0 and omega_gf > 0.0, "transition frequencies must be positive")
    return omega_gf - 2.0 * omega_ge


def ej_ec_ratio(omega_q: float, e_c: float) -> float:
    """Josephson-to-charging energy ratio from omega_q = sqrt(8*E_C*E_J)/hbar:
    E_J/E_C = (hbar*omega_q)^2 / (8*e_c^2)."""
    _require(_finite(omega_q, e_c), "inputs must be finite")
    _require(e_c > 0.0, "charging energy must be positive")
    h_omega = HBAR * omega_q
    return h_omega * h_omega / (8.0 * e_c * e_c)


def normal_mode_frequencies(omega_c: float, omega_q: float, g_tc: float) -> tuple[float, float]:
    """Hybridized mode frequencies (omega_minus, omega_plus) of the coupled
    qubit-resonator pair. At resonance the splitting is exactly 2*g_tc."""
    _require(_finite(omega_c, omega_q, g_tc), "inputs must be finite")
    _require(g_tc >= 0.0, "g_tc must be nonnegative")
    mean = 0.5 * (omega_c + omega_q)
    half_det = 0.5 * (omega_q - omega_c)
    root = math.sqrt(g_tc * g_tc + half_det * half_det)
    return mean - root, mean + root


def transmon_flux_frequency(transmon: TransmonParams, flux_ratio: float) -> float:
    """Transmon transition frequency versus applied flux (in units of the
    flux quantum) for a symmetric dc-SQUID junction:

        omega(r) = (sqrt(8*E_C*E_J*|cos(pi*r)|) - E_C) / hbar

    E_J is fixed by requiring omega(0) == omega_q_max. The result is
    1-periodic and even in flux_ratio. Within ~2e-4 of half-integer flux the
    expression goes negative; there it is clamped to zero with a warning.
    """
    _require(math.isfinite(flux_ratio), "flux_ratio must be finite")
    r = flux_ratio - round(flux_ratio)  # canonical branch: even, 1-periodic
    cos_term = abs(math.cos(math.pi * r))
    e_c = transmon.e_c
    e_j = (HBAR * transmon.omega_q_max + e_c) ** 2 / (8.0 * e_c)
    omega = (math.sqrt(8.0 * e_c * e_j * cos_term) - e_c) / HBAR
    if omega <= 0.0:
        warnings.warn(
            "flux bias at the junction degeneracy point; clamping transmon frequency to 0",
            stacklevel=2,
        )
        return 0.0
    return omega


def zero_point_fluctuation(mech: MechanicsParams) -> float:
    """Ground-state positional spread sqrt(hbar / (2*mass*omega_m)) in metres."""
    return math.sqrt(HBAR / (2.0 * mech.mass * mech.omega_m))


def thermal_occupation_and_coherence(mech: MechanicsParams, temperature_k: float) -> tuple[float, float]:
    """High-temperature-limit phonon occupation n = kB*T/(hbar*omega_m) and
    the thermal coherence time 1/(n*gamma_m), in (count, seconds)."""
    _require(math.isfinite(temperature_k), "temperature must be finite")
    _require(temperature_k > 0.0, "temperature must be positive")
    n_bar = KB * temperature_k / (HBAR * mech.omega_m)
    return n_bar, 1.0 / (n_bar * mech.gamma_m)


def vacuum_coupling_from_slope(
    slope_hz2_per_k: float, omega_m: float, single_sideband: bool = False
) -> float:
    """Vacuum electromechanical coupling (rad/s) from the slope of the
    integrated frequency-noise variance <dw^2>/(2pi)^2 versus temperature,
    in Hz^2/K.

    Default convention: <dw^2> = 2 * g_m0^2 * n_bar (thermal motion feeds
    both sidebands), giving g_m0/2pi = sqrt(slope*hbar*omega_m / (2*kB)).
    With single_sideband=True the variance is taken as g_m0^2 * n_bar and the
    factor 2 is dropped; this convention is sqrt(2) larger and is kept only
    for comparison.
    """
    _require(_finite(slope_hz2_per_k, omega_m), "inputs must be finite")
    _require(slope_hz2_per_k >= 0.0, "slope must be nonnegative")
    _require(omega_m > 0.0, "omega_m must be positive")
    denom = KB if single_sideband else 2.0 * KB
    return TWO_PI * math.sqrt(slope_hz2_per_k * HBAR * omega_m / denom)


def integrated_displacement_noise(
    s_pp_over_s_mod: float,
    phi0: float,
    omega_mod: float,
    gamma_m: float,
    enbw_hz: float,
) -> float:
    """Integrated resonator frequency-noise variance <dw^2> (rad^2/s^2) from
    the thermal-peak to calibration-spur height ratio of a sideband PSD:

        <dw^2> = phi0^2 * omega_mod^2 * gamma_m / (4 * ENBW) * S_pp/S_mod

    phi0 is the frequency-modulation index of the calibration tone at
    omega_mod (rad/s); gamma_m is the fitted thermal-peak linewidth (rad/s);
    enbw_hz is the analyzer equivalent noise bandwidth the spur height was
    normalized to. The thermal peak is assumed at frequency ~ omega_mod.
    """
    _require(
        _finite(s_pp_over_s_mod, phi0, omega_mod, gamma_m, enbw_hz),
        "inputs must be finite",
    )
    _require(s_pp_over_s_mod >= 0.0, "peak ratio must be nonnegative")
    _require(phi0 > 0.0, "modulation index must be positive")
    _require(omega_mod > 0.0, "omega_mod must be positive")
    _require(gamma_m > 0.0, "gamma_m must be positive")
    if enbw_hz == 0.0:
        raise DomainError("analyzer bandwidth must be nonzero")
    _require(enbw_hz > 0.0, "analyzer bandwidth must be positive")
    return phi0 * phi0 * omega_mod * omega_mod * gamma_m / (4.0 * enbw_hz) * s_pp_over_s_mod
