"""Distribution comparisons: QQ tables, line deviations, orthant distance, rates."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy import stats

from multinormex.engine import NormexConfig, sample_method
from multinormex.families import second_order_indices
from multinormex.geoquantile import solve_levels
from multinormex.streams import derive_seed
from multinormex.types import (
    DeviationSummary,
    FamilyParams,
    FloatArray,
    GeoQuantile,
    Level,
    LineDeviation,
    Method,
    MethodRate,
    NormKind,
    QQRow,
    QQTable,
    RatePoint,
    RateReport,
    SolverOptions,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

DEFAULT_GRID_PER_DIM = 99
"""Orthant corners per axis, at pooled marginal quantiles 1% ... 99%."""

_REL_FLOOR = 1e-12


# ── QQ tables ──────────────────────────────────────────────────────────


def qq_table_from_quantiles(
    ref: Sequence[GeoQuantile],
    cmp: Sequence[GeoQuantile],
) -> QQTable:
    """Pair already-solved quantiles level by level, one row per component."""
    if len(ref) != len(cmp):
        raise ValueError(f"quantile lists differ in length: {len(ref)} != {len(cmp)}")
    rows: list[QQRow] = []
    for index, (a, b) in enumerate(zip(ref, cmp, strict=True)):
        for component, (qa, qb) in enumerate(zip(a.q, b.q, strict=True)):
            rows.append(
                QQRow(
                    level_index=index,
                    level_norm=a.level.norm,
                    is_extreme=a.level.is_extreme,
                    component=component,
                    q_ref=float(qa),
                    q_cmp=float(qb),
                )
            )
    return QQTable(
        rows=rows,
        ref_non_converged=sum(not g.converged for g in ref),
        cmp_non_converged=sum(not g.converged for g in cmp),
    )


def qq_table(
    ref: FloatArray,
    cmp: FloatArray,
    levels: Sequence[Level],
    opts: SolverOptions | None = None,
    *,
    threads: int = 1,
) -> QQTable:
    """Geometric quantiles of both samples at every level, paired per component.

    Raises:
        ValueError: If the samples differ in dimension.
    """
    ref = np.asarray(ref, dtype=np.float64)
    cmp = np.asarray(cmp, dtype=np.float64)
    if ref.shape[1:] != cmp.shape[1:]:
        raise ValueError(f"dimension mismatch: {ref.shape[1:]} != {cmp.shape[1:]}")
    ref_q = solve_levels(ref, levels, opts, threads=threads)
    cmp_q = ref_q if cmp is ref else solve_levels(cmp, levels, opts, threads=threads)
    table = qq_table_from_quantiles(ref_q, cmp_q)
    if table.ref_non_converged or table.cmp_non_converged:
        logger.warning(
            "qq_table: non-converged levels ref=%d, cmp=%d",
            table.ref_non_converged,
            table.cmp_non_converged,
        )
    return table


def line_deviation(table: QQTable | Sequence[QQRow]) -> LineDeviation:
    """Max and mean of |q_cmp - q_ref| and the max relative deviation.

    Raises:
        ValueError: If there are no rows.
    """
    rows = table.rows if isinstance(table, QQTable) else list(table)
    if not rows:
        raise ValueError("line_deviation needs a nonempty table")
    ref = np.array([r.q_ref for r in rows])
    gap = np.abs(np.array([r.q_cmp for r in rows]) - ref)
    rel = gap / np.maximum(np.abs(ref), _REL_FLOOR)
    return LineDeviation(
        max_abs=float(gap.max()),
        mean_abs=float(gap.mean()),
        max_rel=float(rel.max()),
    )


def deviation_summary(table: QQTable) -> DeviationSummary:
    """Line deviations overall, on moderate levels and on extreme levels."""
    moderate = [r for r in table.rows if not r.is_extreme]
    extreme = [r for r in table.rows if r.is_extreme]
    return DeviationSummary(
        overall=line_deviation(table),
        moderate=line_deviation(moderate) if moderate else None,
        extreme=line_deviation(extreme) if extreme else None,
    )


# ── Orthant distance ───────────────────────────────────────────────────


def _corners(pooled: FloatArray, grid_per_dim: int | None) -> list[FloatArray]:
    if grid_per_dim is None:
        return [np.unique(pooled[:, k]) for k in range(pooled.shape[1])]
    if grid_per_dim < 2:
        raise ValueError(f"grid_per_dim must be >= 2, got {grid_per_dim}")
    probs = np.linspace(0.01, 0.99, grid_per_dim)
    return [np.unique(np.quantile(pooled[:, k], probs)) for k in range(pooled.shape[1])]


def _orthant_cdf(sample: FloatArray, corners: list[FloatArray]) -> FloatArray:
    # cell index = first corner >= x, so x <= corner[k] for every k >= index
    shape = tuple(len(c) + 1 for c in corners)
    index = np.zeros(len(sample), dtype=np.int64)
    for k, c in enumerate(corners):
        index = index * shape[k] + np.searchsorted(c, sample[:, k], side="left")
    counts = np.bincount(index, minlength=math.prod(shape)).reshape(shape).astype(np.float64)
    for axis in range(len(corners)):
        np.cumsum(counts, axis=axis, out=counts)
    inner = tuple(slice(0, len(c)) for c in corners)
    return counts[inner] / len(sample)


def orthant_sup_distance(
    a: FloatArray,
    b: FloatArray,
    grid_per_dim: int | None = DEFAULT_GRID_PER_DIM,
) -> float:
    """Max |F_A(t) - F_B(t)| over lower-left orthant corners t.

    Corners sit on the product of pooled marginal quantiles at levels
    1% ... 99%. With ``grid_per_dim=None`` every pooled value is a corner,
    which for d = 1 gives the two-sample KS statistic.

    Raises:
        ValueError: If dimensions differ or grid_per_dim < 2.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a, b = a[:, None], np.asarray(b, dtype=np.float64).reshape(-1, 1)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} != {b.shape[1]}")
    corners = _corners(np.concatenate([a, b]), grid_per_dim)
    gap = np.abs(_orthant_cdf(a, corners) - _orthant_cdf(b, corners))
    return float(gap.max())


# ── Rate experiment ────────────────────────────────────────────────────


def theoretical_exponents(params: FamilyParams, norm: NormKind) -> dict[Method, float | None]:
    """Decay exponents of the distance to the sum, per method.

    CLT: -(alpha - 2)/2. d-Normex: -(1/2 - (3 - alpha)/alpha). MRV-Normex: the
    slowest of the d-Normex term, -rho/alpha and -min(1, beta/alpha).
    """
    alpha = params.alpha
    d_normex = -(0.5 - (3.0 - alpha) / alpha)
    rho, beta = second_order_indices(params, norm)
    return {
        "DirectSum": None,
        "CLT": -(alpha - 2.0) / 2.0 if alpha > 2 else None,
        "DNormex": d_normex,
        "MRVNormex": max(d_normex, -rho / alpha, -min(1.0, beta / alpha)),
    }


def fit_slope(points: Sequence[RatePoint]) -> tuple[float, float]:
    """OLS slope of log distance on log n and its standard error."""
    if len(points) < 2 or any(p.distance <= 0 for p in points):
        logger.warning("fit_slope: need >= 2 positive distances, got %s", points)
        return math.nan, math.nan
    fit = stats.linregress(np.log([p.n for p in points]), np.log([p.distance for p in points]))
    return float(fit.slope), float(fit.stderr)


def rate_experiment(
    params: FamilyParams,
    norm: NormKind,
    methods: Sequence[Method],
    n_list: Sequence[int],
    count: int,
    seed: int,
    *,
    grid_per_dim: int | None = DEFAULT_GRID_PER_DIM,
    threads: int = 1,
) -> RateReport:
    """Orthant distance of each method's sample to a direct-sum sample over n.

    The Monte Carlo noise floor, measured between two independent direct-sum
    samples, is reported per n.

    Raises:
        ValueError: If n_list is not strictly increasing or spans less than a decade.
    """
    ns = list(n_list)
    if any(b <= a for a, b in zip(ns, ns[1:], strict=False)):
        raise ValueError(f"n_list must be strictly increasing, got {ns}")
    if len(ns) < 2 or ns[-1] < 10 * ns[0]:
        raise ValueError(f"n_list must cover at least one decade, got {ns}")
    if not 2.0 < params.alpha < 3.0:
        logger.warning("rate_experiment: alpha=%g outside (2, 3), exponents may coincide", params.alpha)
    exponents = theoretical_exponents(params, norm)
    points: dict[Method, list[RatePoint]] = {m: [] for m in methods}
    floor: list[RatePoint] = []
    for n in ns:

        def run(method: Method, label: str, n: int = n) -> FloatArray:
            config = NormexConfig(
                family=params,
                norm=norm,
                n=n,
                count=count,
                seed=derive_seed(seed, f"rates/{label}/{n}"),
                method=method,
                threads=threads,
            )
            return sample_method(config).values

        reference = run("DirectSum", "reference")
        floor.append(RatePoint(n, orthant_sup_distance(run("DirectSum", "null"), reference, grid_per_dim)))
        for method in methods:
            distance = orthant_sup_distance(run(method, method), reference, grid_per_dim)
            points[method].append(RatePoint(n, distance))
            logger.info("rate_experiment: n=%d, method=%s, distance=%.5f", n, method, distance)
    report: dict[Method, MethodRate] = {}
    for method in methods:
        slope, se = fit_slope(points[method])
        report[method] = MethodRate(
            method=method,
            points=tuple(points[method]),
            slope=slope,
            slope_se=se,
            theoretical=exponents[method],
        )
    return RateReport(methods=report, noise_floor=tuple(floor))
