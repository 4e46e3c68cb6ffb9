"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (written through the capture so it shows under plain pytest).

Tolerances are pinned here and nowhere else. Reference anchors come from the
device characterization quoted in the README.
"""

import copy
import json
import time
import warnings

import numpy as np
import pytest

from emcal import (
    HBAR,
    KB,
    TWO_PI,
    CalibrationTone,
    MechanicsParams,
    ResonatorParams,
    SystemParams,
    TransmonParams,
    anharmonicity_from_two_photon,
    critical_photon_number,
    default_config,
    default_config_dict,
    default_psd_axis,
    ej_ec_ratio,
    integrated_displacement_noise,
    normal_mode_frequencies,
    parse_config,
    psd_peak_ratio,
    run_emia_pipeline,
    run_qubit_pipeline,
    run_gm0_pipeline,
    sideband_psd,
    thermal_occupation_and_coherence,
    x_from_stark_slope,
    zero_point_fluctuation,
)
from emcal.cli import EXIT_OK, main
from emcal.tracesynth import emia_s21
from emcal.physcore import DriveConfig

TRANSMON = TransmonParams(TWO_PI * 7.916e9, -TWO_PI * 188e6, TWO_PI * 134e6)
DELTA_TC = TWO_PI * 2.056e9
OMEGA_P = TWO_PI * 5.862e9


def announce(capsys, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"[{label}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{label}: {detail}"


def test_criterion_1_slope_inversion_identity(capsys):
    start = time.perf_counter()
    slope_per_w = -(TWO_PI**3) * 1.30e20 * 1e9  # quoted stark-product slope, per W
    x = x_from_stark_slope(slope_per_w, TRANSMON, DELTA_TC, OMEGA_P)
    elapsed = time.perf_counter() - start
    ok = 5.42 <= x <= 5.88 and elapsed < 1.0
    announce(capsys, "criterion 1", ok, f"quoted slope inverts to x_qb = {x:.4f} /s in {elapsed:.3f} s")


def test_criterion_2_stark_round_trip(capsys):
    start = time.perf_counter()
    report = run_qubit_pipeline(default_config("qubit_stark"))
    elapsed = time.perf_counter() - start
    x_err = abs(report.recovered_value / 5.65 - 1.0)
    lo_err = abs(report.photon_min / 0.7 - 1.0)
    hi_err = abs(report.photon_max / 28.0 - 1.0)
    ok = x_err < 1e-9 and lo_err < 0.05 and hi_err < 0.05 and elapsed < 1.0
    announce(
        capsys,
        "criterion 2",
        ok,
        f"x recovered to {x_err:.2e} rel; photons {report.photon_min:.3f}..{report.photon_max:.2f} "
        f"(targets 0.7/28 within 5%); {elapsed:.3f} s",
    )


def test_criterion_3_emia_round_trip(capsys):
    start = time.perf_counter()
    cfg = default_config("emia")
    report = run_emia_pipeline(cfg)
    elapsed = time.perf_counter() - start
    x_err = abs(report.recovered_value / 5.41 - 1.0)
    gamma_err = abs(report.intercept / (TWO_PI * 12.4) - 1.0)
    lo_err = abs(report.photon_min / 1.4e6 - 1.0)
    hi_err = abs(report.photon_max / 1.4e8 - 1.0)
    ok = x_err < 0.01 and gamma_err < 0.01 and lo_err < 0.10 and hi_err < 0.10 and elapsed < 10.0
    announce(
        capsys,
        "criterion 3",
        ok,
        f"x to {x_err:.2e} rel, gamma_m to {gamma_err:.2e} rel (both < 1%); photons "
        f"{report.photon_min:.3g}..{report.photon_max:.3g} within 10%; "
        f"{len(report.points)} x {cfg.emia_points}-point traces in {elapsed:.2f} s",
    )


def test_criterion_4_interference_contrast_at_unity_cooperativity(capsys):
    resonator = ResonatorParams(TWO_PI * 5.875e9, TWO_PI * 1.468e6)
    mech = MechanicsParams(TWO_PI * 3.15018e6, TWO_PI * 12.4, TWO_PI * 0.308, 2e-15)
    system = SystemParams(resonator=resonator, mechanics=mech)
    kappa = resonator.kappa
    omega_d = resonator.omega_c - mech.omega_m
    n_unity = kappa * mech.gamma_m / (4.0 * mech.g_m0**2)  # C = 1
    p = n_unity * HBAR * omega_d * (kappa**2 + 4 * mech.omega_m**2) / (2.0 * 5.41)
    drive = DriveConfig(p, resonator.omega_c, omega_d, 0.0, -mech.omega_m, 5.41)
    f0 = (omega_d + mech.omega_m) / TWO_PI
    width = 2 * mech.gamma_m / TWO_PI
    axis = np.linspace(f0 - 40 * width, f0 + 40 * width, 801)
    floor = emia_s21(system, drive, kappa, axis).values.min()
    ok = abs(floor - 0.25) <= 0.005
    announce(capsys, "criterion 4", ok, f"dip floor at unity cooperativity = {floor:.4f} (25% +- 0.5%)")


def test_criterion_5_thermal_calibration(capsys):
    cfg = default_config("gm0_thermal")
    report = run_gm0_pipeline(cfg)
    slope_hz2 = report.slope / TWO_PI**2
    g_hz = report.recovered_value / TWO_PI
    slope_err = abs(slope_hz2 / 1.253e3 - 1.0)
    g_err = abs(g_hz / 0.308 - 1.0)

    # the same variance by the two independent routes at 365 mK
    mech = cfg.system.mechanics
    trace = sideband_psd(cfg.system, 0.365, cfg.tone, cfg.enbw_hz, default_psd_axis(mech))
    est = psd_peak_ratio(trace, mech.omega_m / TWO_PI, cfg.tone.omega_mod / TWO_PI, cfg.enbw_hz)
    route_ratio = integrated_displacement_noise(
        est.s_pp_over_s_mod, cfg.tone.phi0, cfg.tone.omega_mod, est.gamma_m, cfg.enbw_hz
    ) / TWO_PI**2
    route_slope = slope_hz2 * 0.365
    in_band = 456.5 <= route_ratio <= 458.5 and 456.5 <= route_slope <= 458.5
    agree = abs(route_ratio / route_slope - 1.0) < 0.005
    ok = slope_err < 0.01 and g_err < 0.01 and in_band and agree
    announce(
        capsys,
        "criterion 5",
        ok,
        f"slope {slope_hz2:.1f} Hz^2/K (1.253e3 within 1%), g_m0 {g_hz:.4f} Hz (0.308 within 1%); "
        f"365 mK variance {route_ratio:.2f} / {route_slope:.2f} Hz^2 both in 457..458",
    )


def test_criterion_6_cross_consistency_via_cli(capsys, tmp_path):
    for pipeline, mode, rep in (("qubit_stark", "qubit", "a.json"), ("emia", "emia", "b.json")):
        cfg_path = tmp_path / f"{pipeline}.json"
        cfg_path.write_text(json.dumps(default_config_dict(pipeline)))
        assert main(["calibrate", mode, "--config", str(cfg_path), "--report", str(tmp_path / rep)]) == EXIT_OK
    capsys.readouterr()
    code = main([
        "check", "--report-a", str(tmp_path / "a.json"), "--report-b", str(tmp_path / "b.json"),
        "--threshold", "0.05",
    ])
    verdict = json.loads(capsys.readouterr().out)
    rel = verdict["relative_difference"]
    span = verdict["photon_span_ratio"]
    ok = code == EXIT_OK and verdict["consistent"] and abs(rel - 0.043) <= 0.001 and span >= 1e8
    announce(
        capsys,
        "criterion 6",
        ok,
        f"relative difference {rel * 100:.2f}% (4.3% +- 0.1%), pass at 5%; photon span {span:.3g} >= 1e8",
    )


def test_criterion_7_scalar_reproductions(capsys):
    mech_slow = MechanicsParams(TWO_PI * 3.15018e6, TWO_PI * 12.4, TWO_PI * 0.308, 2e-15)
    checks = []

    n_crit = critical_photon_number(TRANSMON.g_tc, DELTA_TC)
    checks.append(("n_crit", n_crit, abs(n_crit - 58.9) <= 0.5))

    ratio = ej_ec_ratio(TRANSMON.omega_q_max, TRANSMON.e_c)
    checks.append(("E_J/E_C", ratio, abs(ratio / 221.6 - 1.0) < 0.01))

    alpha = anharmonicity_from_two_photon(TWO_PI * 7.916e9, 2 * TWO_PI * 7.8220e9)
    checks.append(("alpha_mhz", alpha / TWO_PI / 1e6, abs(alpha / (-TWO_PI * 188e6) - 1.0) < 1e-12))

    lo, hi = normal_mode_frequencies(TWO_PI * 5.875e9, TWO_PI * 5.875e9, TWO_PI * 134.1e6)
    split_mhz = (hi - lo) / TWO_PI / 1e6
    checks.append(("splitting_mhz", split_mhz, abs(split_mhz / 268.2 - 1.0) < 1e-12))

    _, tau = thermal_occupation_and_coherence(mech_slow, 0.050)
    checks.append(("tau_us", tau * 1e6, abs(tau / 38.8e-6 - 1.0) < 0.03))

    q_m = mech_slow.omega_m / (TWO_PI * 33.5)
    checks.append(("Q_m", q_m, abs(q_m / 94000.0 - 1.0) < 0.01))

    x_zpf = zero_point_fluctuation(mech_slow)
    checks.append(
        ("x_zpf_fm", x_zpf * 1e15, abs(x_zpf / 36.5e-15 - 1.0) < 0.005 and abs(x_zpf / 35e-15 - 1.0) < 0.10)
    )

    ok = all(passed for _, _, passed in checks)
    detail = ", ".join(f"{name}={value:.4g}{'' if passed else '!'}" for name, value, passed in checks)
    announce(capsys, "criterion 7", ok, detail)


def test_criterion_8_noise_robustness_monte_carlo(capsys):
    start = time.perf_counter()
    results = {}
    for pipeline, runner, x_true in (
        ("qubit_stark", run_qubit_pipeline, 5.65),
        ("emia", run_emia_pipeline, 5.41),
    ):
        base = default_config_dict(pipeline)
        base["uncertainties"] = {}  # statistical sigma only, comparable to the spread
        base["noise"] = {"relative_amplitude": 0.01, "seed": 0}
        values, sigmas = [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for seed in range(100):
                doc = copy.deepcopy(base)
                doc["noise"]["seed"] = seed
                report = runner(parse_config(doc))
                values.append(report.recovered_value)
                sigmas.append(report.recovered_sigma_statistical)
        values = np.array(values)
        bias = abs(values.mean() / x_true - 1.0)
        spread = values.std(ddof=1)
        sigma_ratio = np.mean(sigmas) / spread
        results[pipeline] = (bias, sigma_ratio)
    elapsed = time.perf_counter() - start
    ok = elapsed < 120.0 and all(
        bias < 0.005 and abs(ratio - 1.0) < 0.30 for bias, ratio in results.values()
    )
    detail = "; ".join(
        f"{name}: bias {bias * 100:.2f}% (<0.5%), sigma/spread {ratio:.2f} (within 30%)"
        for name, (bias, ratio) in results.items()
    )
    announce(capsys, "criterion 8", ok, f"{detail}; 2x100 seeds in {elapsed:.1f} s")


def test_criterion_9_determinism_and_serialization_round_trip(capsys, tmp_path):
    byte_identical = True
    for pipeline, mode in (("qubit_stark", "qubit"), ("emia", "emia"), ("gm0_thermal", "gm0")):
        doc = default_config_dict(pipeline)
        doc["noise"] = {"relative_amplitude": 0.005, "seed": 31}
        cfg_path = tmp_path / f"{pipeline}.json"
        cfg_path.write_text(json.dumps(doc))
        out = tmp_path / f"records_{mode}"
        reports = [tmp_path / f"{mode}_{tag}.json" for tag in ("rerun1", "rerun2", "ingest")]
        assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        assert main(["calibrate", mode, "--config", str(cfg_path), "--report", str(reports[0])]) == EXIT_OK
        assert main(["calibrate", mode, "--config", str(cfg_path), "--report", str(reports[1])]) == EXIT_OK
        assert main([
            "calibrate", mode, "--config", str(cfg_path), "--traces", str(out), "--report", str(reports[2])
        ]) == EXIT_OK
        blobs = [p.read_bytes() for p in reports]
        byte_identical &= blobs[0] == blobs[1] == blobs[2]
    announce(
        capsys,
        "criterion 9",
        byte_identical,
        "reruns and CSV-ingested runs produce byte-identical reports for all three pipelines",
    )
