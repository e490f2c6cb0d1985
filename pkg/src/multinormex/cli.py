"""Command-line front end: ``multinormex <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import get_args

import numpy as np
from pydantic import ValidationError

from multinormex.artifacts import (
    read_qq_csv,
    read_sample_csv,
    write_qq_csv,
    write_qq_svg,
    write_rate_slopes_csv,
    write_rates_csv,
    write_sample_csv,
)
from multinormex.compare import deviation_summary, qq_table, rate_experiment
from multinormex.config import ExperimentConfig, load_config
from multinormex.engine import NormexConfig, sample_method
from multinormex.exceptions import ArtifactError, ConfigError, NormexError
from multinormex.geoquantile import EXTREME_LENGTH, level_grid, solve_gq
from multinormex.runner import ExperimentRunner, compare_moments
from multinormex.streams import derive_seed
from multinormex.types import FamilyParams, Level, NormKind, SolverOptions, Variant

logger = logging.getLogger(__name__)

# ── Exit codes ─────────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_FAILED = 1
"""Anomalies, failed checks or a runtime error."""
EXIT_USAGE = 2
"""Invalid config, arguments or input files."""


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the master seed (u64)")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--threads", type=int, help="worker threads; results do not change")
    parser.add_argument("--count", type=int, help="override the sample size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multinormex",
        description="Normex approximations of heavy-tailed vector sums and their QQ validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_flags(sub.add_parser("run", help="full pipeline from a config"))
    _add_config_flags(sub.add_parser("sample", help="write sum samples for the configured methods"))
    _add_config_flags(sub.add_parser("rates", help="convergence-rate experiment"))

    moments = sub.add_parser("moments", help="closed-form vs oracle truncated moments")
    moments.add_argument("--variant", required=True, choices=get_args(Variant))
    moments.add_argument("--alpha", required=True, type=float)
    moments.add_argument("--d", required=True, type=int)
    moments.add_argument("--theta", type=float)
    moments.add_argument("--norm", required=True, choices=get_args(NormKind))
    moments.add_argument("--y", required=True, type=float, action="append")
    moments.add_argument("--draws", type=int, default=1_000_000)
    moments.add_argument("--seed", type=int, default=0)
    moments.add_argument("--threads", type=int, default=1)

    gq = sub.add_parser("geoquantile", help="geometric quantile of a CSV sample")
    gq.add_argument("--sample", required=True, type=Path)
    gq.add_argument("--u", required=True, type=float, nargs="+")
    gq.add_argument("--tol", type=float, default=1e-8)
    gq.add_argument("--max-iter", type=int, default=500)

    qq = sub.add_parser("qq", help="QQ table of two CSV samples on the standard level grid")
    qq.add_argument("--ref", required=True, type=Path)
    qq.add_argument("--cmp", required=True, type=Path)
    qq.add_argument("--out", required=True, type=Path)
    qq.add_argument("--threads", type=int, default=1)

    plot = sub.add_parser("plot", help="render a QQ CSV to one SVG per component")
    plot.add_argument("--qq", required=True, type=Path)
    plot.add_argument("--out", type=Path, help="output directory (default: next to the CSV)")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(
        args.config,
        seed=args.seed,
        output_dir=args.out,
        threads=args.threads,
        count=args.count,
    )


# ── Subcommands ────────────────────────────────────────────────────────


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    result = ExperimentRunner(config).run()
    for name, total in result.manifest.anomaly_totals.items():
        limit = getattr(config.anomaly_limits, name)
        marker = f" (over limit {limit})" if total > limit else ""
        print(f"anomaly: {name}={total}{marker}", file=sys.stderr)
    for name, ok in result.manifest.checks.items():
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
    print(f"artifacts written to {result.output_dir}")
    return result.exit_status


def cmd_sample(args: argparse.Namespace) -> int:
    config = _load(args)
    out = Path(config.output_dir)
    for method in config.methods:
        sample = sample_method(
            NormexConfig(
                family=config.family,
                norm=config.norm,
                n=config.n,
                count=config.count,
                seed=derive_seed(config.seed, f"method/{method}"),
                y_floor=config.y_floor,
                method=method,
                zero_shift=config.zero_shift,
                threads=config.threads,
            )
        )
        path = write_sample_csv(out / f"sample_{method}.csv", sample.values)
        print(f"{method}: {path}")
    return EXIT_OK


def cmd_rates(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.rate_n_list is None:
        raise ConfigError("rates needs rate_n_list in the config", path=str(args.config))
    report = rate_experiment(
        config.family,
        config.norm,
        [m for m in config.methods if m != "DirectSum"],
        config.rate_n_list,
        config.rate_count or config.count,
        derive_seed(config.seed, "rates"),
        grid_per_dim=config.grid_per_dim,
        threads=config.threads,
    )
    out = Path(config.output_dir)
    write_rates_csv(out / "rates.csv", report)
    write_rate_slopes_csv(out / "rate_slopes.csv", report)
    for method, rate in report.methods.items():
        print(f"{method}: slope={rate.slope:.4f} se={rate.slope_se:.4f} theory={rate.theoretical}")
    return EXIT_OK


def cmd_moments(args: argparse.Namespace) -> int:
    params = FamilyParams(variant=args.variant, alpha=args.alpha, d=args.d, theta=args.theta)
    rows, passed = compare_moments(
        params, args.norm, args.y, args.draws, args.seed, threads=args.threads
    )
    print(f"{'y':>8} {'quantity':>8} {'i':>2} {'j':>2} {'closed':>14} {'oracle':>14} {'se':>10} {'z':>6}")
    for y, quantity, i, j, exact, estimate, se, z in rows:
        print(f"{y:8g} {quantity:>8} {i:2d} {j:2d} {exact:14.8g} {estimate:14.8g} {se:10.3g} {z:6.2f}")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_geoquantile(args: argparse.Namespace) -> int:
    sample = read_sample_csv(args.sample)
    if len(args.u) != sample.shape[1]:
        raise ValueError(f"--u needs {sample.shape[1]} values, got {len(args.u)}")
    result = solve_gq(
        sample,
        Level(np.array(args.u)),
        SolverOptions(tol=args.tol, max_iter=args.max_iter),
    )
    print(
        json.dumps(
            {
                "q": [float(v) for v in result.q],
                "objective": result.objective_value,
                "gradient_norm": result.gradient_norm,
                "iterations": result.iterations,
                "converged": result.converged,
                "at_data_point": result.at_data_point,
            }
        )
    )
    return EXIT_OK if result.converged else EXIT_FAILED


def cmd_qq(args: argparse.Namespace) -> int:
    ref = read_sample_csv(args.ref)
    cmp = read_sample_csv(args.cmp)
    table = qq_table(ref, cmp, level_grid(ref.shape[1]), threads=args.threads)
    write_qq_csv(args.out, table)
    summary = deviation_summary(table)
    print(f"mean |q_cmp - q_ref| = {summary.overall.mean_abs:.6g}, max = {summary.overall.max_abs:.6g}")
    return EXIT_OK if not (table.ref_non_converged or table.cmp_non_converged) else EXIT_FAILED


def cmd_plot(args: argparse.Namespace) -> int:
    rows = read_qq_csv(args.qq)
    out = args.out or args.qq.parent
    for component in sorted({r.component for r in rows}):
        path = write_qq_svg(
            out / f"{args.qq.stem}_{component}.svg",
            rows,
            component,
            f"{args.qq.stem}, component {component} (extreme: |u| > {EXTREME_LENGTH})",
        )
        print(path)
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "sample": cmd_sample,
    "rates": cmd_rates,
    "moments": cmd_moments,
    "geoquantile": cmd_geoquantile,
    "qq": cmd_qq,
    "plot": cmd_plot,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch the subcommand and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ArtifactError, ValidationError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NormexError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
