"""Experiment configuration: a single JSON document with explicit
unit-suffixed keys. Unknown keys are errors, not warnings; silent unit
mistakes are the failure mode this format exists to prevent.

Reference configurations for the three calibration pipelines ship with the
package in ``data/reference_device.json`` and are what ``emcal selftest``
runs against.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigurationError
from .physcore import (
    TWO_PI,
    MechanicsParams,
    ResonatorParams,
    SystemParams,
    TransmonParams,
)
from .tracesynth import CalibrationTone, KappaModel, NoiseSpec

PIPELINE_QUBIT = "qubit_stark"
PIPELINE_EMIA = "emia"
PIPELINE_GM0 = "gm0_thermal"
PIPELINES = (PIPELINE_QUBIT, PIPELINE_EMIA, PIPELINE_GM0)

CONFIG_SCHEMA = "emcal-config/1"

_SWEEP_SCALES = {
    "p_app_pw": ("power", 1e-12),
    "p_app_nw": ("power", 1e-9),
    "p_app_mw": ("power", 1e-3),
    "p_app_w": ("power", 1.0),
    "temperature_mk": ("temperature", 1e-3),
    "temperature_k": ("temperature", 1.0),
}

_EMIA_DEFAULTS = {"points_per_trace": 801, "window_linewidths": 40.0}
_GM0_DEFAULTS = {"enbw_hz": 1.0, "points_per_trace": 1601, "window_linewidths": 30.0}


@dataclass
class ExperimentConfig:
    """Parsed and validated configuration, everything in SI / angular units."""

    pipeline: str
    system: SystemParams
    delta_tc: float | None
    kappa_model: KappaModel | None
    sweep: np.ndarray
    sweep_kind: str  # "power" | "temperature"
    noise: NoiseSpec
    x_true: float | None
    emia_points: int
    emia_window_linewidths: float
    tone: CalibrationTone | None
    enbw_hz: float
    gm0_points: int
    gm0_window_linewidths: float
    uncertainties: dict
    resolved: dict  # canonical document, defaults filled in

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def _check_keys(doc: dict, allowed, path: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in {path}")


def _get_number(doc: dict, key: str, path: str, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise ConfigurationError(f"missing required key {key!r} in {path}")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}.{key} must be a number, got {value!r}")
    return float(value)


def _section(doc: dict, name: str, required: bool):
    section = doc.get(name)
    if section is None:
        if required:
            raise ConfigurationError(f"pipeline requires a {name!r} section")
        return None
    if not isinstance(section, dict):
        raise ConfigurationError(f"{name!r} must be an object")
    return section


def _parse_resonator(section: dict) -> ResonatorParams:
    _check_keys(section, {"omega_c_ghz", "kappa_mhz"}, "resonator")
    return ResonatorParams(
        omega_c=TWO_PI * 1e9 * _get_number(section, "omega_c_ghz", "resonator"),
        kappa=TWO_PI * 1e6 * _get_number(section, "kappa_mhz", "resonator"),
    )


def _parse_transmon(section: dict) -> tuple[TransmonParams, float]:
    _check_keys(
        section,
        {"omega_q_max_ghz", "alpha_mhz", "g_tc_mhz", "delta_tc_ghz"},
        "transmon",
    )
    params = TransmonParams(
        omega_q_max=TWO_PI * 1e9 * _get_number(section, "omega_q_max_ghz", "transmon"),
        alpha=TWO_PI * 1e6 * _get_number(section, "alpha_mhz", "transmon"),
        g_tc=TWO_PI * 1e6 * _get_number(section, "g_tc_mhz", "transmon"),
    )
    delta_tc = TWO_PI * 1e9 * _get_number(section, "delta_tc_ghz", "transmon")
    return params, delta_tc


def _parse_mechanics(section: dict) -> MechanicsParams:
    _check_keys(section, {"omega_m_mhz", "gamma_m_hz", "g_m0_hz", "mass_pg"}, "mechanics")
    return MechanicsParams(
        omega_m=TWO_PI * 1e6 * _get_number(section, "omega_m_mhz", "mechanics"),
        gamma_m=TWO_PI * _get_number(section, "gamma_m_hz", "mechanics"),
        g_m0=TWO_PI * _get_number(section, "g_m0_hz", "mechanics"),
        mass=1e-15 * _get_number(section, "mass_pg", "mechanics"),
    )


def _parse_kappa_model(section: dict) -> KappaModel:
    if "mode" not in section:
        raise ConfigurationError("kappa_model needs a 'mode' key")
    mode = section["mode"]
    if mode == "linear":
        _check_keys(section, {"mode", "offset_mhz", "slope_khz_per_nw"}, "kappa_model")
        offset = TWO_PI * 1e6 * _get_number(section, "offset_mhz", "kappa_model")
        # kHz/nW -> (rad/s)/W
        slope = TWO_PI * 1e3 * _get_number(section, "slope_khz_per_nw", "kappa_model", default=0.0) / 1e-9
        return KappaModel(mode="linear", offset=offset, slope=slope)
    if mode == "tabulated":
        _check_keys(section, {"mode", "table"}, "kappa_model")
        rows = section.get("table")
        if not isinstance(rows, list) or not rows:
            raise ConfigurationError("tabulated kappa_model needs a nonempty 'table' list")
        table = []
        for i, row in enumerate(rows):
            if not isinstance(row, dict):
                raise ConfigurationError(f"kappa_model.table[{i}] must be an object")
            _check_keys(row, {"p_app_mw", "kappa_mhz"}, f"kappa_model.table[{i}]")
            table.append(
                (
                    1e-3 * _get_number(row, "p_app_mw", f"kappa_model.table[{i}]"),
                    TWO_PI * 1e6 * _get_number(row, "kappa_mhz", f"kappa_model.table[{i}]"),
                )
            )
        return KappaModel(mode="tabulated", table=tuple(table))
    raise ConfigurationError(f"unknown kappa_model mode {mode!r}")


def _parse_sweep(section: dict) -> tuple[np.ndarray, str]:
    _check_keys(section, set(_SWEEP_SCALES), "sweep")
    if len(section) != 1:
        raise ConfigurationError("sweep must contain exactly one setpoint key")
    key, spec = next(iter(section.items()))
    kind, scale = _SWEEP_SCALES[key]
    if isinstance(spec, list):
        if not spec:
            raise ConfigurationError("sweep list must not be empty")
        values = np.array([float(v) for v in spec]) * scale
    elif isinstance(spec, dict):
        _check_keys(spec, {"start", "stop", "points", "spacing"}, f"sweep.{key}")
        start = _get_number(spec, "start", f"sweep.{key}")
        stop = _get_number(spec, "stop", f"sweep.{key}")
        points = spec.get("points")
        if not isinstance(points, int) or isinstance(points, bool) or points < 1:
            raise ConfigurationError(f"sweep.{key}.points must be a positive integer")
        spacing = spec.get("spacing", "linear")
        if spacing == "linear":
            values = np.linspace(start, stop, points) * scale
        elif spacing == "log":
            if start <= 0.0 or stop <= 0.0:
                raise ConfigurationError("log spacing needs positive endpoints")
            values = np.geomspace(start, stop, points) * scale
        else:
            raise ConfigurationError(f"unknown sweep spacing {spacing!r}")
    else:
        raise ConfigurationError(f"sweep.{key} must be a list or a range object")
    if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
        raise ConfigurationError("sweep setpoints must be finite and positive")
    if np.any(np.diff(values) < 0.0):
        raise ConfigurationError("sweep setpoints must be nondecreasing")
    return values, kind


def _parse_noise(section: dict | None) -> NoiseSpec:
    if section is None:
        return NoiseSpec()
    _check_keys(section, {"relative_amplitude", "seed"}, "noise")
    amplitude = _get_number(section, "relative_amplitude", "noise", default=0.0)
    seed = section.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigurationError("noise.seed must be an integer")
    return NoiseSpec(relative_amplitude=amplitude, seed=seed)


def _parse_uncertainties(section: dict | None) -> dict:
    if section is None:
        return {}
    allowed = {"g_tc_mhz", "alpha_mhz", "kappa_khz", "g_m0_hz"}
    _check_keys(section, allowed, "uncertainties")
    out = {}
    if "g_tc_mhz" in section:
        out["g_tc"] = TWO_PI * 1e6 * _get_number(section, "g_tc_mhz", "uncertainties")
    if "alpha_mhz" in section:
        out["alpha"] = TWO_PI * 1e6 * _get_number(section, "alpha_mhz", "uncertainties")
    if "kappa_khz" in section:
        out["kappa"] = TWO_PI * 1e3 * _get_number(section, "kappa_khz", "uncertainties")
    if "g_m0_hz" in section:
        out["g_m0"] = TWO_PI * _get_number(section, "g_m0_hz", "uncertainties")
    return out


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a configuration document and convert it to SI/angular units."""
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a JSON object")
    allowed_top = {
        "schema",
        "pipeline",
        "x_true_per_s",
        "resonator",
        "transmon",
        "mechanics",
        "kappa_model",
        "sweep",
        "noise",
        "emia",
        "gm0",
        "uncertainties",
    }
    _check_keys(doc, allowed_top, "top level")
    schema = doc.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigurationError(f"unsupported config schema {schema!r}")
    pipeline = doc.get("pipeline")
    if pipeline not in PIPELINES:
        raise ConfigurationError(f"pipeline must be one of {PIPELINES}, got {pipeline!r}")

    resonator = _parse_resonator(_section(doc, "resonator", required=True))

    transmon_section = _section(doc, "transmon", required=pipeline == PIPELINE_QUBIT)
    transmon, delta_tc = (None, None)
    if transmon_section is not None:
        transmon, delta_tc = _parse_transmon(transmon_section)

    mechanics_section = _section(
        doc, "mechanics", required=pipeline in (PIPELINE_EMIA, PIPELINE_GM0)
    )
    mechanics = _parse_mechanics(mechanics_section) if mechanics_section is not None else None

    needs_kappa_model = pipeline in (PIPELINE_QUBIT, PIPELINE_EMIA)
    kappa_section = _section(doc, "kappa_model", required=needs_kappa_model)
    kappa_model = _parse_kappa_model(kappa_section) if kappa_section is not None else None

    sweep, sweep_kind = _parse_sweep(_section(doc, "sweep", required=True))
    expected_kind = "temperature" if pipeline == PIPELINE_GM0 else "power"
    if sweep_kind != expected_kind:
        raise ConfigurationError(
            f"pipeline {pipeline!r} needs a {expected_kind} sweep, got {sweep_kind}"
        )

    noise = _parse_noise(_section(doc, "noise", required=False))

    x_true = None
    if "x_true_per_s" in doc:
        x_true = _get_number(doc, "x_true_per_s", "top level")
        if x_true <= 0.0:
            raise ConfigurationError("x_true_per_s must be positive")

    emia_section = _section(doc, "emia", required=False) or {}
    _check_keys(emia_section, set(_EMIA_DEFAULTS), "emia")
    emia_points = emia_section.get("points_per_trace", _EMIA_DEFAULTS["points_per_trace"])
    emia_window = float(emia_section.get("window_linewidths", _EMIA_DEFAULTS["window_linewidths"]))

    gm0_section = _section(doc, "gm0", required=pipeline == PIPELINE_GM0)
    tone = None
    enbw_hz = _GM0_DEFAULTS["enbw_hz"]
    gm0_points = _GM0_DEFAULTS["points_per_trace"]
    gm0_window = _GM0_DEFAULTS["window_linewidths"]
    if gm0_section is not None:
        allowed = {"omega_mod_mhz", "modulation_depth_hz", "enbw_hz", "points_per_trace", "window_linewidths"}
        _check_keys(gm0_section, allowed, "gm0")
        omega_mod = TWO_PI * 1e6 * _get_number(gm0_section, "omega_mod_mhz", "gm0")
        depth = TWO_PI * _get_number(gm0_section, "modulation_depth_hz", "gm0")
        # FM index: peak frequency deviation over modulation frequency
        tone = CalibrationTone(phi0=depth / omega_mod, omega_mod=omega_mod)
        enbw_hz = _get_number(gm0_section, "enbw_hz", "gm0", default=_GM0_DEFAULTS["enbw_hz"])
        if enbw_hz <= 0.0:
            raise ConfigurationError("gm0.enbw_hz must be positive")
        gm0_points = gm0_section.get("points_per_trace", _GM0_DEFAULTS["points_per_trace"])
        gm0_window = float(gm0_section.get("window_linewidths", _GM0_DEFAULTS["window_linewidths"]))

    for label, n_points in (("emia", emia_points), ("gm0", gm0_points)):
        if not isinstance(n_points, int) or isinstance(n_points, bool) or n_points < 16:
            raise ConfigurationError(f"{label}.points_per_trace must be an integer >= 16")

    uncertainties = _parse_uncertainties(_section(doc, "uncertainties", required=False))

    resolved = copy.deepcopy(doc)
    resolved["schema"] = CONFIG_SCHEMA
    resolved.setdefault("noise", {})
    resolved["noise"] = {
        "relative_amplitude": noise.relative_amplitude,
        "seed": noise.seed,
    }
    if pipeline == PIPELINE_EMIA:
        resolved["emia"] = {"points_per_trace": emia_points, "window_linewidths": emia_window}
    if gm0_section is not None:
        resolved["gm0"] = dict(gm0_section)
        resolved["gm0"]["enbw_hz"] = enbw_hz
        resolved["gm0"]["points_per_trace"] = gm0_points
        resolved["gm0"]["window_linewidths"] = gm0_window

    system = SystemParams(resonator=resonator, transmon=transmon, mechanics=mechanics)
    return ExperimentConfig(
        pipeline=pipeline,
        system=system,
        delta_tc=delta_tc,
        kappa_model=kappa_model,
        sweep=sweep,
        sweep_kind=sweep_kind,
        noise=noise,
        x_true=x_true,
        emia_points=emia_points,
        emia_window_linewidths=emia_window,
        tone=tone,
        enbw_hz=enbw_hz,
        gm0_points=gm0_points,
        gm0_window_linewidths=gm0_window,
        uncertainties=uncertainties,
        resolved=resolved,
    )


def load_config(path) -> ExperimentConfig:
    """Load and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _reference_document() -> dict:
    text = resources.files("emcal").joinpath("data/reference_device.json").read_text("utf-8")
    return json.loads(text)


def default_config_dict(pipeline: str) -> dict:
    """Copy of the packaged reference configuration for one pipeline; dump it
    to JSON to get a starting config file."""
    doc = _reference_document()
    configs = doc["configs"]
    if pipeline not in configs:
        raise ConfigurationError(f"no reference configuration for pipeline {pipeline!r}")
    return copy.deepcopy(configs[pipeline])


def default_config(pipeline: str) -> ExperimentConfig:
    """Parsed reference configuration for one pipeline."""
    return parse_config(default_config_dict(pipeline))
