"""The ``run`` pipeline: sample, check moments, solve quantiles, compare, write."""

from __future__ import annotations

import logging
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from pydantic import BaseModel, Field

from multinormex.artifacts import (
    atomic_write_bytes,
    write_deviations_csv,
    write_moments_csv,
    write_qq_csv,
    write_qq_svg,
    write_rate_slopes_csv,
    write_rates_csv,
)
from multinormex.compare import deviation_summary, qq_table_from_quantiles, rate_experiment
from multinormex.config import ExperimentConfig
from multinormex.engine import NormexConfig, sample_method
from multinormex.exceptions import AcceptanceRateError
from multinormex.geoquantile import EXTREME_LENGTH, level_grid, solve_levels
from multinormex.moments import mc_truncated_moments, truncated_moments
from multinormex.streams import SUBSTREAM_RULE, derive_seed
from multinormex.types import (
    NORMEX_METHODS,
    DeviationSummary,
    FamilyParams,
    FloatArray,
    GeoQuantile,
    Level,
    Method,
    NormKind,
    SumSample,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

ORACLE_Z_LIMIT = 4.0
"""Largest accepted |closed form - oracle| in oracle standard errors."""

CLT_MARGIN = 2.0
"""Required ratio of CLT to Normex deviation excess over the null deviation."""

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    try:
        return version("multinormex")
    except PackageNotFoundError:
        return "0.0.0+unknown"


class RunManifest(BaseModel):
    """Reproducibility record written at the end of every run.

    Attributes:
        config: Echo of the validated configuration.
        tool_version: Installed multinormex version.
        stage_seconds: Wall time per pipeline stage.
        seeds: Derived seed of every sampled stream family.
        substream_rule: How block generators are derived from a seed.
        y_floor_hits: Conditioning norms raised to the floor, per method.
        jitter_events: Jittered covariance factorizations, per method.
        factorization_resamples: Draws resampled after failed factorizations.
        solver_non_converged: Non-converged quantile levels, per sample.
        anomaly_totals: Every nonzero anomaly counter, summed over samples.
        anomalies: Counters above their configured limits.
        checks: Outcome of each requested check.
        exit_status: 0 when no anomaly and every check passed, else 1.
    """

    model_config = {"extra": "forbid"}

    config: dict[str, Any]
    tool_version: str
    stage_seconds: dict[str, float] = Field(default_factory=dict)
    seeds: dict[str, int] = Field(default_factory=dict)
    substream_rule: str = SUBSTREAM_RULE
    y_floor_hits: dict[str, int] = Field(default_factory=dict)
    jitter_events: dict[str, int] = Field(default_factory=dict)
    factorization_resamples: dict[str, int] = Field(default_factory=dict)
    solver_non_converged: dict[str, int] = Field(default_factory=dict)
    anomaly_totals: dict[str, int] = Field(default_factory=dict)
    anomalies: list[str] = Field(default_factory=list)
    checks: dict[str, bool] = Field(default_factory=dict)
    exit_status: int = 0


class RunResult(NamedTuple):
    exit_status: int
    output_dir: Path
    manifest: RunManifest
    deviations: dict[str, DeviationSummary]


def resolve_levels(config: ExperimentConfig) -> list[Level]:
    """Level grid named by the config, or its explicit levels."""
    if config.levels == "paper-grid":
        return level_grid(config.family.d)
    levels = []
    for u in config.levels:
        arr = np.asarray(u, dtype=np.float64)
        levels.append(Level(arr, is_extreme=float(np.linalg.norm(arr)) > EXTREME_LENGTH))
    return levels


def compare_moments(
    params: FamilyParams,
    norm: NormKind,
    levels: Sequence[float],
    draws: int,
    seed: int,
    *,
    threads: int = 1,
) -> tuple[list[list[Any]], bool]:
    """Closed-form truncated moments against the rejection oracle.

    Every mean and raw second moment E[Y_i Y_j] is compared; the result
    passes when each lies within ORACLE_Z_LIMIT oracle standard errors.
    Levels where the oracle acceptance is too low fail without rows.

    Returns:
        Tuple (rows, passed); rows follow the moments.csv columns.
    """
    d = params.d
    rows: list[list[Any]] = []
    passed = True
    for y in levels:
        try:
            oracle = mc_truncated_moments(
                params, norm, y, draws, derive_seed(seed, f"oracle/{y!r}"), threads=threads
            )
        except AcceptanceRateError as e:
            logger.warning("compare_moments: %s", e)
            passed = False
            continue
        closed = truncated_moments(params, norm, y)
        second = closed.sigma + np.outer(closed.mu, closed.mu)
        entries = [("mean", i, i, closed.mu[i], oracle.mu[i], oracle.mu_se[i]) for i in range(d)]
        entries += [
            ("second", i, j, second[i, j], oracle.second[i, j], oracle.second_se[i, j])
            for i in range(d)
            for j in range(d)
        ]
        for quantity, i, j, exact, estimate, se in entries:
            gap = abs(float(exact) - float(estimate))
            z = gap / float(se) if se > 0 else (0.0 if gap == 0 else float("inf"))
            passed = passed and z <= ORACLE_Z_LIMIT
            rows.append([float(y), quantity, i, j, float(exact), float(estimate), float(se), z])
    return rows, passed


class ExperimentRunner:
    """Runs one experiment config end to end.

    Artifacts are written even when anomalies or failed checks make the
    run exit with status 1.
    """

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.manifest = RunManifest(
            config=config.model_dump(mode="json"),
            tool_version=tool_version(),
        )

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.manifest.stage_seconds[name] = elapsed
            logger.info("stage %s done in %.2fs", name, elapsed)

    def _sample(self, method: Method, label: str) -> SumSample:
        cfg = self.config
        seed = derive_seed(cfg.seed, label)
        self.manifest.seeds[label] = seed
        result = sample_method(
            NormexConfig(
                family=cfg.family,
                norm=cfg.norm,
                n=cfg.n,
                count=cfg.count,
                seed=seed,
                y_floor=cfg.y_floor,
                method=method,
                zero_shift=cfg.zero_shift,
                threads=cfg.threads,
            )
        )
        meta = result.metadata
        self.manifest.y_floor_hits[label] = meta.y_floor_hits
        self.manifest.jitter_events[label] = meta.jitter_events
        self.manifest.factorization_resamples[label] = meta.factorization_resamples
        return result

    def _solve(self, label: str, values: FloatArray, levels: list[Level]) -> list[GeoQuantile]:
        solved = solve_levels(values, levels, self.config.solver, threads=self.config.threads)
        self.manifest.solver_non_converged[label] = sum(not g.converged for g in solved)
        return solved

    # ── Checks ─────────────────────────────────────────────────────────

    def check_moments(self) -> bool:
        """Run :func:`compare_moments` at the configured levels and write moments.csv."""
        cfg = self.config
        for y in cfg.moment_levels:
            self.manifest.seeds[f"oracle/{y!r}"] = derive_seed(cfg.seed, f"oracle/{y!r}")
        rows, passed = compare_moments(
            cfg.family, cfg.norm, cfg.moment_levels, cfg.oracle_draws, cfg.seed, threads=cfg.threads
        )
        write_moments_csv(self.output_dir / "moments.csv", rows)
        return passed

    def check_normex_beats_clt(
        self, deviations: dict[str, DeviationSummary], levels: list[Level], ref_q: list[GeoQuantile]
    ) -> bool:
        """Every Normex method's mean line deviation beats the CLT's by CLT_MARGIN.

        Deviations are taken in excess of the null deviation between two
        independent direct-sum samples.
        """
        if "DirectSum" in deviations:
            null = deviations["DirectSum"].overall.mean_abs
        else:
            sample = self._sample("DirectSum", "null")
            table = qq_table_from_quantiles(ref_q, self._solve("null", sample.values, levels))
            null = deviation_summary(table).overall.mean_abs
        clt = deviations["CLT"].overall.mean_abs
        passed = True
        for method in NORMEX_METHODS:
            if method not in deviations:
                continue
            normex = deviations[method].overall.mean_abs
            ok = normex < clt and clt - null >= CLT_MARGIN * max(normex - null, 0.0)
            logger.info(
                "normex_beats_clt: method=%s, mean_dev=%.5f, clt=%.5f, null=%.5f, ok=%s",
                method,
                normex,
                clt,
                null,
                ok,
            )
            passed = passed and ok
        return passed

    def anomaly_totals(self) -> dict[str, int]:
        """Nonzero anomaly counters summed over every sample."""
        m = self.manifest
        totals = {
            "y_floor_hits": sum(m.y_floor_hits.values()),
            "jitter_events": sum(m.jitter_events.values()),
            "factorization_resamples": sum(m.factorization_resamples.values()),
            "solver_non_converged": sum(m.solver_non_converged.values()),
        }
        return {name: total for name, total in totals.items() if total}

    def _anomalies(self) -> list[str]:
        limits = self.config.anomaly_limits
        found = []
        for name, total in self.manifest.anomaly_totals.items():
            limit = getattr(limits, name)
            if total > limit:
                found.append(f"{name}={total} exceeds limit {limit}")
        return found

    # ── Pipeline ───────────────────────────────────────────────────────

    def run(self) -> RunResult:
        """Execute the pipeline and write every artifact, the manifest last."""
        cfg = self.config
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.debug("run: config=%s", self.manifest.config)

        with self._stage("sample"):
            reference = self._sample("DirectSum", "reference")
            samples = {m: self._sample(m, f"method/{m}") for m in cfg.methods}

        if "moments_oracle" in cfg.checks:
            with self._stage("moments"):
                self.manifest.checks["moments_oracle"] = self.check_moments()

        with self._stage("geoquantile"):
            levels = resolve_levels(cfg)
            ref_q = self._solve("reference", reference.values, levels)
            solved = {m: self._solve(m, s.values, levels) for m, s in samples.items()}

        deviations: dict[str, DeviationSummary] = {}
        with self._stage("qq"):
            for method, cmp_q in solved.items():
                table = qq_table_from_quantiles(ref_q, cmp_q)
                write_qq_csv(self.output_dir / f"qq_{method}.csv", table)
                deviations[method] = deviation_summary(table)
                if cfg.plots:
                    for component in range(cfg.family.d):
                        write_qq_svg(
                            self.output_dir / f"qq_{method}_{component}.svg",
                            table.rows,
                            component,
                            f"{method} vs DirectSum, component {component}",
                        )
            write_deviations_csv(self.output_dir / "deviations.csv", deviations)

        if "normex_beats_clt" in cfg.checks:
            with self._stage("normex_beats_clt"):
                self.manifest.checks["normex_beats_clt"] = self.check_normex_beats_clt(
                    deviations, levels, ref_q
                )

        if cfg.rate_n_list is not None:
            with self._stage("rates"):
                rate_seed = derive_seed(cfg.seed, "rates")
                self.manifest.seeds["rates"] = rate_seed
                report = rate_experiment(
                    cfg.family,
                    cfg.norm,
                    [m for m in cfg.methods if m != "DirectSum"],
                    cfg.rate_n_list,
                    cfg.rate_count or cfg.count,
                    rate_seed,
                    grid_per_dim=cfg.grid_per_dim,
                    threads=cfg.threads,
                )
                write_rates_csv(self.output_dir / "rates.csv", report)
                write_rate_slopes_csv(self.output_dir / "rate_slopes.csv", report)

        self.manifest.anomaly_totals = self.anomaly_totals()
        self.manifest.anomalies = self._anomalies()
        failed = [name for name, ok in self.manifest.checks.items() if not ok]
        for anomaly in self.manifest.anomalies:
            logger.warning("run: anomaly %s", anomaly)
        if failed:
            logger.warning("run: failed checks %s", failed)
        self.manifest.exit_status = 1 if self.manifest.anomalies or failed else 0
        atomic_write_bytes(
            self.output_dir / MANIFEST_NAME,
            self.manifest.model_dump_json(indent=2).encode("utf-8"),
        )
        return RunResult(self.manifest.exit_status, self.output_dir, self.manifest, deviations)
