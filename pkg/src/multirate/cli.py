"""Command line entry point: ``multirate <subcommand>``.

Exit status is 0 on success, 1 when the engine fails and 2 for bad
arguments or configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .engine import EngineFailure
from .harness import (
    MODES,
    PRESETS,
    ConfigError,
    RunConfig,
    compare_modes,
    consistency_experiment,
    execute,
    observed_order,
    output_directory,
    preset_config,
    write_outputs,
)

EXIT_OK = 0
EXIT_ENGINE = 1
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    """``ArgumentParser`` that raises instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multirate", description="Conservative self-adjusting multirate experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="execute one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES)

    p = sub.add_parser("preset", help="run a built-in experiment")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--t-end", type=float)
    p.add_argument("--output-dir")

    p = sub.add_parser("compare", help="conservative, component-baseline and single-rate side by side")
    p.add_argument("--config", required=True)

    p = sub.add_parser("audit", help="conservation audit of a conservative run")
    p.add_argument("--config", required=True)

    p = sub.add_parser("consistency", help="local error next to a pinned refinement interface")
    p.add_argument("--scheme", required=True, choices=("forward_euler", "backward_euler"))
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--grids", type=int, nargs="+", default=[100, 200, 400])
    p.add_argument("--no-refine", action="store_true")
    return parser


def _summary(report) -> dict:
    keys = ("problem", "mode", "valid", "t_final", "mass_ratio", "mass_diff_normalized", "l1_error",
            "n_global_steps", "n_total_substeps", "n_function_evals", "n_newton_iters",
            "max_interface_mismatch", "max_reconstruction_residual", "error")
    d = report.to_dict(include_history=False)
    return {k: d[k] for k in keys}


def _run(cfg: RunConfig, mode: Optional[str]) -> int:
    result = execute(cfg, mode)
    outdir = write_outputs(result, output_directory(cfg))
    print(json.dumps(_summary(result.report), indent=2))
    print(f"outputs written to {outdir}")
    return EXIT_OK if result.report.valid else EXIT_ENGINE


def _compare(cfg: RunConfig) -> int:
    reports = compare_modes(cfg)
    header = f"{'mode':<20}{'mass_ratio':>14}{'mass_diff':>12}{'l1_error':>12}{'steps':>8}{'f_evals':>12}"
    print(header)
    for mode, r in reports.items():
        l1 = "-" if r.l1_error is None else f"{r.l1_error:.3e}"
        print(f"{mode:<20}{r.mass_ratio[0]:>14.6f}{r.mass_diff_normalized[0]:>12.3e}{l1:>12}"
              f"{r.n_global_steps:>8}{r.n_function_evals:>12}")
    return EXIT_OK if all(r.valid for r in reports.values()) else EXIT_ENGINE


def _audit(cfg: RunConfig) -> int:
    result = execute(cfg, "conservative")
    r = result.report
    out = {
        "valid": r.valid,
        "n_global_steps": r.n_global_steps,
        "max_interface_mismatch": r.max_interface_mismatch,
        "max_reconstruction_residual": r.max_reconstruction_residual,
        "max_balance_error": r.max_balance_error,
        "mass_diff_normalized": r.mass_diff_normalized,
        "error": r.error,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK if r.valid else EXIT_ENGINE


def _consistency(args) -> int:
    if args.cfl <= 0 or any(n < 4 for n in args.grids):
        raise ConfigError("cfl must be positive and every grid needs at least 4 cells")
    rows = consistency_experiment(args.scheme, args.cfl, tuple(args.grids), refine=not args.no_refine)
    print(f"{'n_cells':>8}{'dx':>14}{'error':>14}")
    for n, dx, err in rows:
        print(f"{n:>8}{dx:>14.6e}{err:>14.6e}")
    if len(rows) > 1:
        print(f"observed order {observed_order(rows):.3f}")
    return EXIT_OK


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and dispatch; returns the exit status."""
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "run":
            return _run(RunConfig.from_file(args.config), args.mode)
        if args.command == "preset":
            overrides = {}
            if args.mode:
                overrides["mode"] = args.mode
            if args.t_end is not None:
                overrides["t_end"] = args.t_end
                snaps = PRESETS[args.name].get("snapshot_times", [])
                overrides["snapshot_times"] = [t for t in snaps if t <= args.t_end]
            if args.output_dir:
                overrides["output_dir"] = args.output_dir
            return _run(preset_config(args.name, **overrides), None)
        if args.command == "compare":
            return _compare(RunConfig.from_file(args.config))
        if args.command == "audit":
            return _audit(RunConfig.from_file(args.config))
        return _consistency(args)
    except ConfigError as exc:
        print(f"multirate: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EngineFailure as exc:
        print(f"multirate: engine failure: {exc}", file=sys.stderr)
        return EXIT_ENGINE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
