"""Experiment configuration loaded from a JSON document."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from multinormex.engine import DEFAULT_Y_FLOOR
from multinormex.exceptions import ConfigError, UnsupportedPairError
from multinormex.families import check_pair
from multinormex.types import NORMEX_METHODS, FamilyParams, Method, NormKind, SolverOptions

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

DEFAULT_COUNT = 100_000
"""Desk-scale sample size per method."""

DEFAULT_MOMENT_LEVELS: tuple[float, ...] = (0.5, 1.0, 2.0, 5.0, 20.0, 100.0)

Check = Literal["moments_oracle", "normex_beats_clt"]


class AnomalyLimits(BaseModel):
    """Largest tolerated anomaly counters; anything above fails the run."""

    model_config = {"extra": "forbid"}

    y_floor_hits: int = Field(default=0, ge=0)
    jitter_events: int = Field(default=0, ge=0)
    factorization_resamples: int = Field(default=0, ge=0)
    solver_non_converged: int = Field(default=0, ge=0)


class ExperimentConfig(BaseModel):
    """Full description of a ``run`` invocation.

    Attributes:
        family: Summand family.
        norm: Norm ordering the summands.
        n: Number of summands.
        count: Sample size per method.
        seed: 64-bit unsigned master seed.
        methods: Generators compared against the direct-sum reference.
        levels: "paper-grid" or an explicit list of level vectors.
        output_dir: Directory receiving the artifacts.
        rate_n_list: Summand counts of the optional rate experiment.
        rate_count: Sample size per rate point (defaults to ``count``).
        grid_per_dim: Orthant corners per axis for rate distances.
        y_floor: Smallest admissible conditioning norm.
        zero_shift: Use b_n = 0 for MRV-Normex.
        threads: Worker threads; never changes results.
        plots: Emit SVG QQ plots.
        solver: Geometric-quantile solver options.
        checks: Acceptance-style checks to run.
        moment_levels: Truncation levels of the moments oracle check.
        oracle_draws: Monte Carlo draws of the moments oracle check.
        anomaly_limits: Tolerated anomaly counters.
    """

    model_config = {"extra": "forbid"}

    family: FamilyParams
    norm: NormKind
    n: int = Field(default=52, ge=1)
    count: int = Field(default=DEFAULT_COUNT, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    methods: list[Method] = Field(min_length=1)
    levels: Literal["paper-grid"] | list[list[float]] = "paper-grid"
    output_dir: str = "out"
    rate_n_list: list[int] | None = None
    rate_count: int | None = Field(default=None, ge=1)
    grid_per_dim: int = Field(default=99, ge=2)
    y_floor: float = Field(default=DEFAULT_Y_FLOOR, gt=0)
    zero_shift: bool = False
    threads: int = Field(default=1, ge=1)
    plots: bool = True
    solver: SolverOptions = Field(default_factory=SolverOptions)
    checks: list[Check] = Field(default_factory=list)
    moment_levels: list[float] = Field(default_factory=lambda: list(DEFAULT_MOMENT_LEVELS))
    oracle_draws: int = Field(default=1_000_000, ge=10_000)
    anomaly_limits: AnomalyLimits = Field(default_factory=AnomalyLimits)

    @model_validator(mode="after")
    def _check_preconditions(self) -> ExperimentConfig:
        d, alpha = self.family.d, self.family.alpha
        if len(set(self.methods)) != len(self.methods):
            raise ValueError(f"methods must be unique, got {self.methods}")
        if "CLT" in self.methods and alpha <= 2:
            raise ValueError(f"CLT requires finite variance (alpha > 2), got alpha={alpha}")
        if any(m in NORMEX_METHODS for m in self.methods) and self.n < 2:
            raise ValueError(f"Normex methods require n >= 2, got n={self.n}")
        if any(m != "DirectSum" for m in self.methods) or "moments_oracle" in self.checks:
            try:
                check_pair(self.family, self.norm, "truncated_moments")
            except UnsupportedPairError as e:
                raise ValueError(str(e)) from e
        if self.levels == "paper-grid":
            if d not in (2, 3):
                raise ValueError(f"paper-grid levels need d in {{2, 3}}, got d={d}")
        else:
            for u in self.levels:
                if len(u) != d or not np.linalg.norm(u) < 1.0:
                    raise ValueError(f"level {u} must have length {d} and norm < 1")
        if self.rate_n_list is not None:
            ns = self.rate_n_list
            if any(b <= a for a, b in zip(ns, ns[1:], strict=False)) or min(ns) < 2:
                raise ValueError(f"rate_n_list must be strictly increasing and >= 2, got {ns}")
            if len(ns) < 2 or ns[-1] < 10 * ns[0]:
                raise ValueError(f"rate_n_list must cover at least one decade, got {ns}")
        if "normex_beats_clt" in self.checks and (
            "CLT" not in self.methods or not any(m in NORMEX_METHODS for m in self.methods)
        ):
            raise ValueError("check normex_beats_clt needs CLT and a Normex method among methods")
        if any(y <= 0 for y in self.moment_levels):
            raise ValueError("moment_levels must be > 0")
        return self


def _details(error: ValidationError) -> list[str]:
    return [
        f"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}"
        for item in error.errors()
    ]


def load_config(path: str | Path, **overrides: Any) -> ExperimentConfig:
    """Read, override and validate an experiment config.

    Args:
        path: JSON config file.
        **overrides: Top-level fields replacing the file's values; None
            values are ignored.

    Raises:
        ConfigError: If the file is unreadable, not JSON, or invalid.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}", path=str(path)) from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object", path=str(path))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        details = _details(e)
        raise ConfigError(
            f"invalid config {path}: " + "; ".join(details), path=str(path), details=details
        ) from e
    logger.debug("load_config: path=%s, methods=%s", path, config.methods)
    return config
