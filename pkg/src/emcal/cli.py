"""Batch command line: synthesize measurement records, calibrate them,
cross-check two calibrations, or run the built-in self test.

Exit codes: 0 success, 2 configuration error, 3 fit failure,
4 consistency failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from . import calpipe
from .config import PIPELINE_EMIA, PIPELINE_GM0, PIPELINE_QUBIT, load_config
from .errors import ConfigurationError, DomainError, FitError
from .physcore import TWO_PI
from .tracesynth import NoiseSpec, read_trace_csv, write_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_CONSISTENCY = 4

_SUBCOMMAND_PIPELINE = {"qubit": PIPELINE_QUBIT, "emia": PIPELINE_EMIA, "gm0": PIPELINE_GM0}
_TRACE_PREFIX = {PIPELINE_EMIA: "emia", PIPELINE_GM0: "psd"}
SERIES_FILENAME = "stark_series.csv"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emcal",
        description="Photon-number calibration: trace synthesis and dual-pipeline estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize measurement records from a config")
    synth.add_argument("--config", required=True, help="configuration JSON")
    synth.add_argument("--out", required=True, help="output directory for CSV records")
    synth.add_argument("--seed", type=int, default=None, help="override the config noise seed")

    cal = sub.add_parser("calibrate", help="run one calibration pipeline")
    cal.add_argument("mode", choices=sorted(_SUBCOMMAND_PIPELINE), help="pipeline to run")
    cal.add_argument("--config", required=True, help="configuration JSON")
    cal.add_argument("--traces", default=None, help="ingest records from this directory instead of synthesizing")
    cal.add_argument("--report", required=True, help="write the report JSON here")
    cal.add_argument("--plots", default=None, help="also emit SVG/CSV figure pairs into this directory")

    chk = sub.add_parser("check", help="cross-check two calibration reports")
    chk.add_argument("--report-a", required=True)
    chk.add_argument("--report-b", required=True)
    chk.add_argument("--threshold", type=float, default=calpipe.DEFAULT_CONSISTENCY_THRESHOLD)

    sub.add_parser("selftest", help="reproduce the reference calibrations from built-in defaults")
    return parser


def _override_seed(cfg, seed: int | None):
    if seed is not None:
        cfg.noise = NoiseSpec(cfg.noise.relative_amplitude, seed)
        cfg.resolved["noise"] = {
            "relative_amplitude": cfg.noise.relative_amplitude,
            "seed": cfg.noise.seed,
        }
    return cfg


def _cmd_synth(args) -> int:
    cfg = _override_seed(load_config(args.config), args.seed)
    os.makedirs(args.out, exist_ok=True)
    data = calpipe.synthesize(cfg)
    if cfg.pipeline == PIPELINE_QUBIT:
        path = os.path.join(args.out, SERIES_FILENAME)
        calpipe.write_series_csv(data, path)
        print(path)
    else:
        prefix = _TRACE_PREFIX[cfg.pipeline]
        for i, trace in enumerate(data):
            path = os.path.join(args.out, f"{prefix}_{i:03d}.csv")
            write_trace_csv(trace, path)
            print(path)
    return EXIT_OK


def _load_traces(directory: str, pipeline: str) -> list:
    pattern = os.path.join(directory, f"{_TRACE_PREFIX[pipeline]}_*.csv")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigurationError(f"no {pattern} records found")
    return [read_trace_csv(p) for p in paths]


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    expected = _SUBCOMMAND_PIPELINE[args.mode]
    if cfg.pipeline != expected:
        raise ConfigurationError(
            f"config declares pipeline {cfg.pipeline!r} but 'calibrate {args.mode}' expects {expected!r}"
        )
    data = None
    if args.traces is not None:
        if cfg.pipeline == PIPELINE_QUBIT:
            data = calpipe.read_series_csv(os.path.join(args.traces, SERIES_FILENAME))
        else:
            data = _load_traces(args.traces, cfg.pipeline)
    report = calpipe.run_pipeline(cfg, data)
    calpipe.write_report(report, args.report)
    recovered = report.recovered_value
    if report.pipeline == PIPELINE_GM0:
        summary = f"g_m0/2pi = {recovered / TWO_PI:.6g} Hz"
    else:
        summary = f"{report.recovered_name} = {recovered:.6g} /s"
    print(f"{report.pipeline}: {summary} (sigma_total {report.recovered_sigma_total:.3g}) -> {args.report}")
    if args.plots is not None:
        from .plots import emit_report_plots

        for path in emit_report_plots(report, cfg, args.plots):
            print(path)
    return EXIT_OK


def _cmd_check(args) -> int:
    verdict = calpipe.cross_consistency(
        calpipe.read_report(args.report_a),
        calpipe.read_report(args.report_b),
        threshold=args.threshold,
    )
    print(json.dumps(verdict, indent=2, sort_keys=True))
    return EXIT_OK if verdict["consistent"] else EXIT_CONSISTENCY


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "check":
            return _cmd_check(args)
        return calpipe.run_selftest()
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
