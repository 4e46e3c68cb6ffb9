"""Optional figure emission: one static SVG + CSV pair per pipeline result.

Presentation only; nothing downstream ever parses these files back.
"""

from __future__ import annotations

import os

import numpy as np

from .calpipe import CalibrationReport
from .config import PIPELINE_EMIA, PIPELINE_GM0, PIPELINE_QUBIT, ExperimentConfig
from .physcore import TWO_PI
from .tracesynth import kappa_at_power


def _write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = np.column_stack(columns)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def emit_report_plots(report: CalibrationReport, cfg: ExperimentConfig, outdir) -> list[str]:
    """Write the figure pair for a report plus the linewidth-vs-power model
    curve when a kappa model is configured. Returns the files written."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(outdir, exist_ok=True)
    written: list[str] = []

    def emit(name: str, fig, header, columns) -> None:
        svg = os.path.join(outdir, f"{name}.svg")
        csv = os.path.join(outdir, f"{name}.csv")
        _save(fig, svg)
        plt.close(fig)
        _write_csv(csv, header, columns)
        written.extend([svg, csv])

    if report.pipeline == PIPELINE_QUBIT:
        p_nw = np.array([pt["p_app_w"] for pt in report.points]) / 1e-9
        y = np.array([pt["stark_kappa2_rad3_s3"] for pt in report.points]) / TWO_PI**3
        model = (report.slope * p_nw * 1e-9 + report.intercept) / TWO_PI**3
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(p_nw, y, "o", label="points")
        ax.plot(p_nw, model, "k-", label="linear fit")
        ax.set_xlabel("applied power (nW)")
        ax.set_ylabel(r"shift $\times\,\kappa^2\ /(2\pi)^3$ (s$^{-3}$)")
        ax.legend()
        fig.tight_layout()
        emit("stark_product_vs_power", fig, ["p_app_nw", "stark_kappa2_2pi3", "fit"], [p_nw, y, model])

    elif report.pipeline == PIPELINE_EMIA:
        p_mw = np.array([pt["p_app_w"] for pt in report.points]) / 1e-3
        gamma = np.array([pt["gamma_eff_hz"] for pt in report.points])
        kernel = np.array([pt["kernel_rad"] for pt in report.points])
        model = (report.slope * kernel + report.intercept) / TWO_PI
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogx(p_mw, gamma, "o", label="fitted dip widths")
        ax.semilogx(p_mw, model, "k-", label="kernel model")
        ax.set_xlabel("applied power (mW)")
        ax.set_ylabel("effective linewidth (Hz)")
        ax.legend()
        fig.tight_layout()
        emit("effective_linewidth_vs_power", fig, ["p_app_mw", "gamma_eff_hz", "fit_hz"], [p_mw, gamma, model])

    elif report.pipeline == PIPELINE_GM0:
        temperature = np.array([pt["temperature_k"] for pt in report.points])
        variance = np.array([pt["variance_hz2"] for pt in report.points])
        model = (report.slope * temperature) / TWO_PI**2 + report.intercept * 2.0 * (
            report.recovered_value / TWO_PI
        ) ** 2
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(temperature, variance, "o", label="integrated noise")
        ax.plot(temperature, model, "k-", label="linear fit")
        ax.set_xlabel("temperature (K)")
        ax.set_ylabel(r"$\langle\delta\omega^2\rangle/(2\pi)^2$ (Hz$^2$)")
        ax.legend()
        fig.tight_layout()
        emit("displacement_noise_vs_temperature", fig, ["temperature_k", "variance_hz2", "fit_hz2"], [temperature, variance, model])

    if cfg.kappa_model is not None:
        p_lo, p_hi = float(cfg.sweep[0]), float(cfg.sweep[-1])
        powers = np.linspace(p_lo, p_hi, 200)
        kappas = np.array([kappa_at_power(cfg.kappa_model, float(p)) for p in powers]) / TWO_PI
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(powers / 1e-9 if p_hi < 1e-6 else powers / 1e-3, kappas / 1e6, "-")
        ax.set_xlabel("applied power (nW)" if p_hi < 1e-6 else "applied power (mW)")
        ax.set_ylabel("resonator linewidth (MHz)")
        fig.tight_layout()
        emit("resonator_linewidth_vs_power", fig, ["p_app_w", "kappa_hz"], [powers, kappas])

    return written
