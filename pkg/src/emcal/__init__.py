"""emcal: photon-number calibration for a hybrid microwave resonator /
transmon / nanomechanical-string device.

Synthesizes spectroscopy records from closed-form models and recovers the
line-attenuation calibration factor x by two independent routes (dispersive
qubit shift and sideband absorption), plus the vacuum electromechanical
coupling from thermal noise spectra, cross-validating them.
"""

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    DomainError,
    EmcalError,
    FitError,
    PeakResolutionError,
    SingularityError,
)
from .physcore import (
    HBAR,
    KB,
    TWO_PI,
    DriveConfig,
    MechanicsParams,
    PhysicalConstants,
    ResonatorParams,
    SystemParams,
    TransmonParams,
    ac_stark_shift,
    anharmonicity_from_two_photon,
    cooperativity,
    critical_photon_number,
    ej_ec_ratio,
    emia_effective_linewidth,
    integrated_displacement_noise,
    normal_mode_frequencies,
    photon_number,
    thermal_occupation_and_coherence,
    transmon_flux_frequency,
    vacuum_coupling_from_slope,
    zero_point_fluctuation,
)
from .tracesynth import (
    PSD,
    TRANSMISSION,
    CalibrationTone,
    KappaModel,
    NoiseSpec,
    Trace,
    add_noise,
    default_emia_axis,
    default_psd_axis,
    derive_seed,
    emia_s21,
    kappa_at_power,
    lorentzian_s21,
    read_trace_csv,
    sideband_psd,
    with_meta,
    write_trace_csv,
)
from .estimfit import (
    LineFitResult,
    LorentzianFitResult,
    PsdPeakEstimate,
    lorentzian_fit,
    lorentzian_model,
    psd_peak_ratio,
    weighted_line_fit,
)
from .config import (
    PIPELINE_EMIA,
    PIPELINE_GM0,
    PIPELINE_QUBIT,
    PIPELINES,
    ExperimentConfig,
    default_config,
    default_config_dict,
    load_config,
    parse_config,
)
from .calpipe import (
    CalibrationReport,
    PowerSeries,
    cross_consistency,
    emia_power_kernel,
    read_report,
    read_series_csv,
    run_emia_pipeline,
    run_gm0_pipeline,
    run_pipeline,
    run_qubit_pipeline,
    run_selftest,
    stark_product_slope,
    synthesize,
    synthesize_emia_traces,
    synthesize_psd_traces,
    synthesize_qubit_series,
    write_report,
    write_series_csv,
    x_from_stark_slope,
)

__version__ = "0.1.0"
