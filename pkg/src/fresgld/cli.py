"""Command-line entry point.

    fresgld run CONFIG [--output-dir DIR] [--emit-gnuplot]
    fresgld compare CONFIG CONFIG... [--output-dir DIR]
    fresgld preset NAME [--output FILE]
    fresgld diag w2 FILE_A FILE_B [--column NAME]

Exit status: 0 on success, 1 on a configuration error, 2 when a sampler
fails at run time.  ``$FRESGLD_OUTPUT_DIR`` overrides the configured output
directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .config import PRESETS, ConfigError, ExperimentConfig, preset
from .diagnostics import wasserstein2_1d
from .experiment import compare, run_experiment
from .samplers import NonFiniteGradient, StepTooLarge

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def load_samples(path, column: str | None = None) -> np.ndarray:
    """One column of a CSV file with a header row.

    Trace files keep only the low-temperature rows.  Without ``column`` the
    first ``theta_*`` column is used, falling back to the first column.
    """
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None:
        raise ValueError(f"{path}: expected a header row")
    if "chain_id" in names:
        data = data[data["chain_id"] == 0]
    if column is None:
        column = next((n for n in names if n.startswith("theta_")), names[0])
    if column not in names:
        raise ValueError(f"{path}: no column {column!r}")
    return np.atleast_1d(np.asarray(data[column], dtype=float))


def _summary_line(result) -> str:
    agg = result.aggregate
    parts = [f"{result.config.name}: {agg['n_seeds'] - agg['n_failed']}/{agg['n_seeds']} seeds ok"]
    for key in ("w2_to_truth", "swap_acceptance_rate", "annulus_coverage", "angular_bins_occupied"):
        if key in agg:
            parts.append(f"{key}={agg[key]['mean']:.4g}+-{agg[key]['sd']:.2g}")
    return ", ".join(parts)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.emit_gnuplot:
        cfg = replace(cfg, emit_gnuplot=True)
    result = run_experiment(cfg, args.output_dir)
    print(_summary_line(result))
    print(f"outputs: {result.output_dir}")
    if result.failed:
        print(f"failed seeds: {result.failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_compare(args) -> int:
    configs = [ExperimentConfig.load(p) for p in args.configs]
    try:
        cmp = compare(configs, args.output_dir)
    except ValueError as err:
        raise ConfigError("configs", str(err)) from None
    for rank, name in enumerate(cmp.ranking, 1):
        res = next(r for r in cmp.results if r.config.name == name)
        print(f"{rank}. {_summary_line(res)}")
    for name, diffs in cmp.paired_differences.items():
        d = np.array(list(diffs.values()))
        print(f"{name} - {cmp.results[0].config.name}: mean paired {cmp.metric} difference "
              f"{d.mean():.4g}, lower in {int((d < 0).sum())}/{d.size} seeds")
    return EXIT_RUNTIME if any(r.failed for r in cmp.results) else EXIT_OK


def _cmd_preset(args) -> int:
    cfg = preset(args.name)
    if args.output:
        cfg.save(args.output)
    else:
        print(cfg.to_json())
    return EXIT_OK


def _cmd_diag(args) -> int:
    try:
        a = load_samples(args.file_a, args.column)
        b = load_samples(args.file_b, args.column)
    except (OSError, ValueError) as err:
        raise ConfigError("file", str(err)) from None
    print(json.dumps({"w2": wasserstein2_1d(a, b), "n_a": int(a.size), "n_b": int(b.size)}))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not sampler failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fresgld", description="Replica-exchange Langevin experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--emit-gnuplot", action="store_true", help="write plot.gp beside the data")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run and rank several variants")
    p.add_argument("configs", nargs="+")
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("preset", help="print a named preset config")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.set_defaults(func=_cmd_preset)

    p = sub.add_parser("diag", help="diagnostics on sample files")
    diag = p.add_subparsers(dest="diag_command", required=True)
    w2 = diag.add_parser("w2", help="W2 distance between two 1-D sample files")
    w2.add_argument("file_a")
    w2.add_argument("file_b")
    w2.add_argument("--column")
    w2.set_defaults(func=_cmd_diag)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepTooLarge, NonFiniteGradient, FloatingPointError) as err:
        print(f"sampler error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
