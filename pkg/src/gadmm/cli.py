"""Command-line entry points.

Three subcommands share a TOML config:

  run       one configured instance; writes summary/trace/report files
  sweep     every value in the sweep section; same files plus plot data
  diagnose  condition checks and KKT residuals as diagnostics.json

Exit codes: 0 success, 1 missing input file, 2 invalid config, 3 output
I/O failure, 4 solver failure (including any errored sweep row).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    ExperimentSpec,
    configured_value,
    diagnose,
    emit_csv,
    emit_plot_data,
    execute_run,
    parse_config,
    run_sweep,
    write_diagnostics,
    write_report,
)

EXIT_OK = 0
EXIT_MISSING_FILE = 1
EXIT_BAD_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gadmm",
        description="Distributed consensus optimization experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run one configured instance"),
        ("sweep", "run every value of the configured sweep"),
        ("diagnose", "emit solvability diagnostics for the instance"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML config file")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        if name == "sweep":
            cmd.add_argument(
                "--workers",
                type=int,
                default=1,
                help="parallel worker processes for sweep values",
            )
    return parser


def _load_spec(args: argparse.Namespace) -> ExperimentSpec:
    spec = parse_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        spec = dataclasses.replace(
            spec, run=dataclasses.replace(spec.run, seed=args.seed)
        )
    return spec


def _emit_run_outputs(results, spec, out_dir: Path, parameter: str) -> list[Path]:
    written = emit_csv(results, out_dir)
    written.append(
        emit_plot_data(results, out_dir / "plot.dat", parameter=parameter)
    )
    written.append(write_report(results, spec, out_dir / "report.txt"))
    return written


def _cmd_run(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    result = execute_run(spec, spec.run, configured_value(spec.run))
    written = _emit_run_outputs([result], spec, Path(args.out), "value")
    for path in written:
        print(f"wrote {path}")
    if result.error is not None:
        print(f"solver failed: {result.error}", file=sys.stderr)
        return EXIT_SOLVER
    status = "converged" if result.converged else "hit iteration cap"
    print(
        f"{status} after {result.iterations} iterations, "
        f"{result.messages} messages, delta_param={result.delta_param:.6g}"
    )
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    if spec.sweep is None:
        raise ConfigError("sweep", "missing sweep section")
    results = run_sweep(spec, workers=args.workers)
    written = _emit_run_outputs(
        results, spec, Path(args.out), spec.sweep.parameter
    )
    for path in written:
        print(f"wrote {path}")
    failures = [r for r in results if r.error is not None]
    for res in failures:
        print(f"value {res.value:g} failed: {res.error}", file=sys.stderr)
    return EXIT_SOLVER if failures else EXIT_OK


def _cmd_diagnose(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    report = diagnose(spec)
    path = write_diagnostics(report, Path(args.out) / "diagnostics.json")
    print(f"wrote {path}")
    if report["run_error"] is not None:
        print(f"solver failed: {report['run_error']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "diagnose": _cmd_diagnose}[
        args.command
    ]
    try:
        return handler(args)
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
