"""Command-line surface: synthesis/calibration/check flows, serialization
round trips through files, exit codes and plot emission."""

import json
import subprocess
import sys

import pytest

from emcal import default_config_dict
from emcal.cli import EXIT_CONFIG, EXIT_CONSISTENCY, EXIT_FIT, EXIT_OK, main


def write_config(tmp_path, pipeline, mutate=None):
    doc = default_config_dict(pipeline)
    if mutate:
        mutate(doc)
    path = tmp_path / f"{pipeline}.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


class TestCalibrateFlows:
    @pytest.mark.parametrize(
        "pipeline,mode", [("qubit_stark", "qubit"), ("emia", "emia"), ("gm0_thermal", "gm0")]
    )
    def test_synth_then_ingest_matches_in_memory(self, tmp_path, pipeline, mode, capsys):
        cfg = write_config(tmp_path, pipeline)
        out = tmp_path / "records"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        ingest = tmp_path / "ingest.json"
        memory = tmp_path / "memory.json"
        assert main([
            "calibrate", mode, "--config", str(cfg), "--traces", str(out), "--report", str(ingest)
        ]) == EXIT_OK
        assert main(["calibrate", mode, "--config", str(cfg), "--report", str(memory)]) == EXIT_OK
        assert ingest.read_bytes() == memory.read_bytes()

    def test_check_passes_on_reference_pair(self, tmp_path, capsys):
        qb_cfg = write_config(tmp_path, "qubit_stark")
        em_cfg = write_config(tmp_path, "emia")
        qb_rep, em_rep = tmp_path / "qb.json", tmp_path / "em.json"
        assert main(["calibrate", "qubit", "--config", str(qb_cfg), "--report", str(qb_rep)]) == EXIT_OK
        assert main(["calibrate", "emia", "--config", str(em_cfg), "--report", str(em_rep)]) == EXIT_OK
        capsys.readouterr()
        code = main(["check", "--report-a", str(qb_rep), "--report-b", str(em_rep)])
        verdict = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        assert verdict["consistent"]
        assert verdict["relative_difference"] == pytest.approx(0.0434, abs=0.001)

    def test_check_fails_at_tight_threshold(self, tmp_path, capsys):
        qb_cfg = write_config(tmp_path, "qubit_stark")
        em_cfg = write_config(tmp_path, "emia")
        qb_rep, em_rep = tmp_path / "qb.json", tmp_path / "em.json"
        main(["calibrate", "qubit", "--config", str(qb_cfg), "--report", str(qb_rep)])
        main(["calibrate", "emia", "--config", str(em_cfg), "--report", str(em_rep)])
        code = main([
            "check", "--report-a", str(qb_rep), "--report-b", str(em_rep), "--threshold", "0.01"
        ])
        assert code == EXIT_CONSISTENCY

    def test_seed_override_changes_synthesis(self, tmp_path):
        cfg = write_config(tmp_path, "qubit_stark", lambda d: d["noise"].update(relative_amplitude=0.01))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["synth", "--config", str(cfg), "--out", str(out_a), "--seed", "1"])
        main(["synth", "--config", str(cfg), "--out", str(out_b), "--seed", "2"])
        a = (out_a / "stark_series.csv").read_text()
        b = (out_b / "stark_series.csv").read_text()
        assert a != b

    def test_plots_emitted(self, tmp_path):
        cfg = write_config(tmp_path, "gm0_thermal")
        report = tmp_path / "rep.json"
        plots = tmp_path / "figs"
        assert main([
            "calibrate", "gm0", "--config", str(cfg), "--report", str(report), "--plots", str(plots)
        ]) == EXIT_OK
        svg = plots / "displacement_noise_vs_temperature.svg"
        csv = plots / "displacement_noise_vs_temperature.csv"
        assert svg.exists() and csv.exists()
        header = csv.read_text().splitlines()[0]
        assert header == "temperature_k,variance_hz2,fit_hz2"


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "emia", lambda d: d.update(surprise=1))
        code = main(["calibrate", "emia", "--config", str(cfg), "--report", str(tmp_path / "r.json")])
        assert code == EXIT_CONFIG
        assert "surprise" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main([
            "calibrate", "emia", "--config", str(tmp_path / "nope.json"), "--report", str(tmp_path / "r.json")
        ]) == EXIT_CONFIG

    def test_pipeline_mode_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, "emia")
        assert main([
            "calibrate", "qubit", "--config", str(cfg), "--report", str(tmp_path / "r.json")
        ]) == EXIT_CONFIG

    def test_missing_traces_dir(self, tmp_path):
        cfg = write_config(tmp_path, "emia")
        assert main([
            "calibrate", "emia", "--config", str(cfg), "--traces", str(tmp_path / "void"),
            "--report", str(tmp_path / "r.json"),
        ]) == EXIT_CONFIG

    def test_fit_failure(self, tmp_path):
        # every interference dip unresolved: all points excluded -> exit 3
        def cripple(doc):
            doc["kappa_model"] = {"mode": "linear", "offset_mhz": 1e-4, "slope_khz_per_nw": 0.0}

        cfg = write_config(tmp_path, "emia", cripple)
        with pytest.warns(UserWarning):
            code = main(["calibrate", "emia", "--config", str(cfg), "--report", str(tmp_path / "r.json")])
        assert code == EXIT_FIT

    def test_selftest(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("[ok]") == 8


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "emcal", "selftest"], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0
    assert "[ok]" in proc.stdout
