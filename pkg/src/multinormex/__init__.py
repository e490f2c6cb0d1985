"""multinormex: Normex approximations of sums of iid heavy-tailed random vectors."""

import logging
import os
import sys
import warnings

LOG_LEVEL_ENV = "MULTINORMEX_LOG_LEVEL"
_LEVEL_NAMES = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
# block workers log from pool threads, so records carry the thread name
_LOG_FORMAT = "%(asctime)s %(levelname)s [%(threadName)s] %(name)s: %(message)s"


def _configure_logging() -> logging.Logger:
    """Apply MULTINORMEX_LOG_LEVEL to the package logger.

    Unset means WARNING and no handler, leaving output to the application.
    A set value also attaches one stderr handler.
    """
    raw = os.getenv(LOG_LEVEL_ENV)
    name = (raw or "WARNING").upper()
    if name not in _LEVEL_NAMES:
        warnings.warn(
            f"Invalid {LOG_LEVEL_ENV}='{name}'. "
            f"Valid values: {', '.join(_LEVEL_NAMES)}. Using WARNING.",
            stacklevel=2,
        )
        name = "WARNING"
    package_logger = logging.getLogger(__name__)
    package_logger.setLevel(name)
    if raw is not None and not package_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        package_logger.addHandler(handler)
    return package_logger


_configure_logging()

from multinormex.compare import (  # noqa: E402
    deviation_summary,
    fit_slope,
    line_deviation,
    orthant_sup_distance,
    qq_table,
    qq_table_from_quantiles,
    rate_experiment,
    theoretical_exponents,
)
from multinormex.config import ExperimentConfig, load_config  # noqa: E402
from multinormex.engine import (  # noqa: E402
    NormexConfig,
    conditional_decomposition_check,
    conditional_gaussian,
    sample_clt,
    sample_d_normex,
    sample_method,
    sample_mrv_normex,
    sample_sum,
    select_maximum,
)
from multinormex.exceptions import (  # noqa: E402
    AcceptanceRateError,
    ArtifactError,
    ConfigError,
    FactorizationError,
    MomentConditionError,
    NormexError,
    UnsupportedPairError,
)
from multinormex.families import (  # noqa: E402
    empirical_theta,
    joint_survival,
    marginal_survival,
    norm_cdf,
    norm_of,
    norming_constants,
    sample_family,
    sample_theta,
    second_order_indices,
)
from multinormex.geoquantile import (  # noqa: E402
    extreme_quantile_ratio,
    gq_gradient,
    gq_objective,
    level_grid,
    min_norm_subgradient,
    solve_gq,
    solve_levels,
    spatial_rank,
)
from multinormex.moments import (  # noqa: E402
    mc_truncated_moments,
    truncated_moments,
    truncated_moments_batch,
    unconditional_moments,
)
from multinormex.runner import ExperimentRunner, RunManifest, RunResult  # noqa: E402
from multinormex.types import (  # noqa: E402
    FamilyParams,
    GeoQuantile,
    Level,
    Method,
    NormKind,
    QQRow,
    QQTable,
    RateReport,
    SolverOptions,
    SumSample,
    TruncatedMoments,
    Variant,
)

__all__ = [
    # Families
    "FamilyParams",
    "Variant",
    "NormKind",
    "norm_of",
    "sample_family",
    "marginal_survival",
    "joint_survival",
    "norm_cdf",
    "norming_constants",
    "sample_theta",
    "empirical_theta",
    "second_order_indices",
    # Truncated moments
    "TruncatedMoments",
    "truncated_moments",
    "truncated_moments_batch",
    "unconditional_moments",
    "mc_truncated_moments",
    # Engine
    "Method",
    "NormexConfig",
    "SumSample",
    "select_maximum",
    "conditional_gaussian",
    "sample_sum",
    "sample_clt",
    "sample_d_normex",
    "sample_mrv_normex",
    "sample_method",
    "conditional_decomposition_check",
    # Geometric quantiles
    "Level",
    "GeoQuantile",
    "SolverOptions",
    "gq_objective",
    "gq_gradient",
    "solve_gq",
    "solve_levels",
    "spatial_rank",
    "level_grid",
    "min_norm_subgradient",
    "extreme_quantile_ratio",
    # Comparison
    "QQRow",
    "QQTable",
    "RateReport",
    "qq_table",
    "qq_table_from_quantiles",
    "line_deviation",
    "deviation_summary",
    "orthant_sup_distance",
    "theoretical_exponents",
    "fit_slope",
    "rate_experiment",
    # Experiments
    "ExperimentConfig",
    "load_config",
    "ExperimentRunner",
    "RunManifest",
    "RunResult",
    # Exceptions
    "NormexError",
    "UnsupportedPairError",
    "MomentConditionError",
    "AcceptanceRateError",
    "FactorizationError",
    "ConfigError",
    "ArtifactError",
]


def main() -> None:
    """Entry point for the ``multinormex`` console script."""
    from multinormex.cli import main as cli_main

    sys.exit(cli_main())
