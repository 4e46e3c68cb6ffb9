"""End-to-end pipeline behavior: round trips on noiseless synthesis, guard
rails, exclusions, uncertainty budgets, reports and cross-consistency."""

import copy
import json

import numpy as np
import pytest

from emcal import (
    TWO_PI,
    CalibrationReport,
    ConfigurationError,
    DegenerateDataError,
    DomainError,
    FitError,
    PowerSeries,
    Trace,
    TransmonParams,
    cross_consistency,
    default_config,
    default_config_dict,
    parse_config,
    read_report,
    read_series_csv,
    run_emia_pipeline,
    run_gm0_pipeline,
    run_pipeline,
    run_qubit_pipeline,
    run_selftest,
    synthesize_emia_traces,
    synthesize_psd_traces,
    synthesize_qubit_series,
    write_report,
    write_series_csv,
    x_from_stark_slope,
)

TRANSMON = TransmonParams(TWO_PI * 7.916e9, -TWO_PI * 188e6, TWO_PI * 134e6)


class TestQubitPipeline:
    def test_noiseless_round_trip(self):
        cfg = default_config("qubit_stark")
        report = run_qubit_pipeline(cfg)
        assert report.recovered_value == pytest.approx(5.65, rel=1e-12)
        assert report.recovered_name == "x_qb"
        assert report.photon_min == pytest.approx(0.6889679464, rel=1e-6)
        assert report.photon_max == pytest.approx(28.96762352, rel=1e-6)

    def test_quoted_slope_inversion(self):
        # the quoted stark-product slope inverts into the quoted x band
        x = x_from_stark_slope(-(TWO_PI**3) * 1.30e20 * 1e9, TRANSMON, TWO_PI * 2.056e9, TWO_PI * 5.862e9)
        assert x == pytest.approx(5.66992712764, rel=1e-10)  # frozen mpmath oracle
        assert abs(x - 5.65) < 0.23

    def test_dispersive_bound_enforced(self):
        doc = default_config_dict("qubit_stark")
        doc["sweep"] = {"p_app_nw": [0.1, 10.0]}  # ~240 photons at the top
        with pytest.raises(ConfigurationError, match="photon"):
            run_qubit_pipeline(parse_config(doc))

    def test_uncertainty_budget(self):
        # noiseless: total sigma comes from the declared coupling and
        # anharmonicity sigmas alone; frozen independent arithmetic: 0.196756
        report = run_qubit_pipeline(default_config("qubit_stark"))
        assert report.recovered_sigma_statistical == pytest.approx(0.0, abs=1e-9)
        assert report.recovered_sigma_total == pytest.approx(0.196756, rel=1e-3)
        assert set(report.uncertainty_budget) == {"statistical", "g_tc", "alpha"}

    def test_ingested_series_equals_synthesis(self, tmp_path):
        cfg = default_config("qubit_stark")
        series = synthesize_qubit_series(cfg)
        path = tmp_path / "series.csv"
        write_series_csv(series, path)
        a = run_qubit_pipeline(cfg)
        b = run_qubit_pipeline(cfg, read_series_csv(path))
        assert a.to_dict() == b.to_dict()

    def test_noisy_sigma_plumbing(self):
        doc = default_config_dict("qubit_stark")
        doc["noise"] = {"relative_amplitude": 0.01, "seed": 5}
        report = run_qubit_pipeline(parse_config(doc))
        assert report.recovered_sigma_statistical > 0.0
        assert report.recovered_value == pytest.approx(5.65, rel=0.1)

    def test_empty_series_rejected(self):
        cfg = default_config("qubit_stark")
        empty = PowerSeries(np.array([]), np.array([]))
        with pytest.raises(ConfigurationError):
            run_qubit_pipeline(cfg, empty)


class TestEmiaPipeline:
    def test_noiseless_round_trip(self):
        cfg = default_config("emia")
        report = run_emia_pipeline(cfg)
        assert report.recovered_value == pytest.approx(5.41, rel=0.01)
        assert report.intercept / TWO_PI == pytest.approx(12.4, rel=0.01)
        assert report.recovered_name == "x_emia"
        # fit-mediated recovery lands far inside the 1% band
        assert report.recovered_value == pytest.approx(5.41, rel=1e-4)

    def test_photon_range(self):
        report = run_emia_pipeline(default_config("emia"))
        assert report.photon_min == pytest.approx(1.4e6, rel=0.1)
        assert report.photon_max == pytest.approx(1.4e8, rel=0.1)

    def test_zero_length_sweep_rejected(self):
        doc = default_config_dict("emia")
        doc["sweep"] = {"p_app_mw": []}
        with pytest.raises(ConfigurationError):
            parse_config(doc)

    def test_unresolved_dips_all_excluded(self):
        # a 100 Hz cavity linewidth makes every interference dip wider than
        # kappa/10, so every point is excluded and the run fails loudly
        doc = default_config_dict("emia")
        doc["kappa_model"] = {"mode": "linear", "offset_mhz": 1e-4, "slope_khz_per_nw": 0.0}
        cfg = parse_config(doc)
        with pytest.warns(UserWarning, match="excluding"):
            with pytest.raises(FitError, match="usable"):
                run_emia_pipeline(cfg)

    def test_degenerate_trace_excluded_not_fatal(self):
        cfg = default_config("emia")
        traces = synthesize_emia_traces(cfg)
        flat = Trace(
            traces[3].kind,
            traces[3].freq_hz,
            np.ones_like(traces[3].values),
            dict(traces[3].meta),
        )
        traces[3] = flat
        with pytest.warns(UserWarning, match="excluding"):
            report = run_emia_pipeline(cfg, traces)
        assert len(report.excluded_points) == 1
        assert report.excluded_points[0]["reason"]
        assert report.recovered_value == pytest.approx(5.41, rel=1e-3)

    def test_trace_without_power_metadata_rejected(self):
        cfg = default_config("emia")
        traces = synthesize_emia_traces(cfg)
        meta = dict(traces[0].meta)
        del meta["p_app_w"]
        traces[0] = Trace(traces[0].kind, traces[0].freq_hz, traces[0].values, meta)
        with pytest.raises(ConfigurationError, match="p_app_w"):
            run_emia_pipeline(cfg, traces)

    def test_uncertainty_budget_terms(self):
        report = run_emia_pipeline(default_config("emia"))
        assert set(report.uncertainty_budget) == {"statistical", "g_m0", "kappa"}
        # coupling enters squared: 2 * 0.004/0.308 = 2.6% dominates
        assert report.uncertainty_budget["g_m0"] == pytest.approx(2 * 0.004 / 0.308, rel=1e-12)
        assert report.recovered_sigma_total > report.recovered_sigma_statistical


class TestGm0Pipeline:
    def test_noiseless_round_trip(self):
        cfg = default_config("gm0_thermal")
        report = run_gm0_pipeline(cfg)
        assert report.recovered_value / TWO_PI == pytest.approx(0.308, rel=0.005)
        assert report.slope / TWO_PI**2 == pytest.approx(1254.94101145, rel=1e-6)  # frozen
        assert report.slope / TWO_PI**2 == pytest.approx(1.253e3, rel=0.01)
        assert abs(report.intercept) < 1e-6  # no injected occupation offset

    def test_identical_temperatures_degenerate(self):
        doc = default_config_dict("gm0_thermal")
        doc["sweep"] = {"temperature_mk": [100.0, 100.0]}
        with pytest.raises(DegenerateDataError):
            run_gm0_pipeline(parse_config(doc))

    def test_photon_range_absent(self):
        report = run_gm0_pipeline(default_config("gm0_thermal"))
        assert report.photon_min is None
        assert report.to_dict()["photon_number_range"] is None

    def test_per_point_failures_excluded(self):
        cfg = default_config("gm0_thermal")
        traces = synthesize_psd_traces(cfg)
        # overwrite one spectrum with a flat record: peak estimation fails there
        traces[2] = Trace("psd", traces[2].freq_hz, np.ones_like(traces[2].values), dict(traces[2].meta))
        with pytest.warns(UserWarning, match="excluding"):
            report = run_gm0_pipeline(cfg, traces)
        assert len(report.excluded_points) == 1
        assert report.recovered_value / TWO_PI == pytest.approx(0.308, rel=0.005)

    def test_noisy_recovery(self):
        doc = default_config_dict("gm0_thermal")
        doc["noise"] = {"relative_amplitude": 0.01, "seed": 3}
        report = run_gm0_pipeline(parse_config(doc))
        assert report.recovered_value / TWO_PI == pytest.approx(0.308, rel=0.05)
        assert report.recovered_sigma_statistical > 0.0


class TestCrossConsistency:
    def reports(self):
        qubit = run_qubit_pipeline(default_config("qubit_stark"))
        emia = run_emia_pipeline(default_config("emia"))
        return qubit, emia

    def test_reference_pair(self):
        verdict = cross_consistency(*self.reports())
        assert verdict["relative_difference"] == pytest.approx(0.0434, abs=0.001)
        assert verdict["consistent"]
        assert verdict["photon_span_ratio"] > 1e8

    def test_equal_values_pass(self):
        a, _ = self.reports()
        verdict = cross_consistency(a, a)
        assert verdict["relative_difference"] == 0.0
        assert verdict["consistent"]

    def test_threshold(self):
        a, b = self.reports()
        assert not cross_consistency(a, b, threshold=0.01)["consistent"]
        with pytest.raises(DomainError):
            cross_consistency(a, b, threshold=0.0)

    def test_report_without_x_rejected(self):
        qubit = run_qubit_pipeline(default_config("qubit_stark"))
        gm0 = run_gm0_pipeline(default_config("gm0_thermal"))
        with pytest.raises(ConfigurationError, match="calibration factor"):
            cross_consistency(qubit, gm0)


class TestReports:
    def test_round_trip_and_schema(self, tmp_path):
        report = run_qubit_pipeline(default_config("qubit_stark"))
        path = tmp_path / "report.json"
        write_report(report, path)
        doc = read_report(path)
        assert doc["schema"] == "emcal-report/1"
        assert doc["recovered"]["value"] == report.recovered_value
        assert doc["config_digest"].startswith("sha256:")
        assert doc["slope"]["value_2pi3_per_nw"] == pytest.approx(-1.2954e20 * 5.65 / 5.65, rel=1e-3)

    def test_byte_identical_reruns(self, tmp_path):
        cfg_doc = default_config_dict("emia")
        cfg_doc["noise"] = {"relative_amplitude": 0.01, "seed": 77}
        paths = []
        for name in ("a.json", "b.json"):
            report = run_emia_pipeline(parse_config(copy.deepcopy(cfg_doc)))
            path = tmp_path / name
            write_report(report, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_non_report_rejected(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"schema": "other/1"}))
        with pytest.raises(ConfigurationError):
            read_report(path)

    def test_gm0_convenience_fields(self):
        doc = run_gm0_pipeline(default_config("gm0_thermal")).to_dict()
        assert doc["recovered"]["value_2pi_hz"] == pytest.approx(0.308, rel=0.005)
        assert doc["slope"]["value_hz2_per_k"] == pytest.approx(1254.94, rel=1e-4)


class TestSeriesCsv:
    def test_round_trip(self, tmp_path):
        cfg_doc = default_config_dict("qubit_stark")
        cfg_doc["noise"] = {"relative_amplitude": 0.02, "seed": 9}
        series = synthesize_qubit_series(parse_config(cfg_doc))
        path = tmp_path / "series.csv"
        write_series_csv(series, path)
        back = read_series_csv(path)
        assert np.array_equal(back.p_app_w, series.p_app_w)
        assert np.array_equal(back.stark_shift_hz, series.stark_shift_hz)
        assert np.array_equal(back.sigma_hz, series.sigma_hz)
        assert np.array_equal(back.kappa_hz, series.kappa_hz)
        assert back.meta == series.meta

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("p_app_w,stark_shift_hz\n1.0,2.0\n")
        with pytest.raises(ConfigurationError):
            read_series_csv(path)


def test_run_pipeline_dispatch():
    assert run_pipeline(default_config("qubit_stark")).pipeline == "qubit_stark"
    assert run_pipeline(default_config("emia")).pipeline == "emia"
    assert run_pipeline(default_config("gm0_thermal")).pipeline == "gm0_thermal"


def test_selftest_passes():
    lines = []
    assert run_selftest(printer=lines.append) == 0
    assert len(lines) == 8
    assert all(line.startswith("[ok]") for line in lines)
