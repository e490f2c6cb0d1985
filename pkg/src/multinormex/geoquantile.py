"""Empirical geometric (spatial) quantiles.

The quantile of level u (||u||_2 < 1) minimizes the convex objective
(1/n) sum_i (||x_i - q|| - <u, q>). The solver runs BFGS on a Huber-smoothed
version whose gradient is exactly (1/n) sum_i (q - x_i)/max(||q - x_i||, eps) - u,
polishes with damped Newton steps, and finally tests whether a nearby data
point satisfies the nonsmooth optimality condition, returning it exactly.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import optimize

from multinormex.types import FloatArray, GeoQuantile, Level, SolverOptions

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

GRID_LENGTHS: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.9225, 0.945, 0.9675, 0.99)
"""Level lengths of the standard grid."""

EXTREME_LENGTH = 0.9
"""Levels strictly longer than this are tagged extreme."""

_NEWTON_STEPS = 50
_DATA_POINT_CANDIDATES = 4


def _prepare(sample: FloatArray, u: Level | FloatArray) -> tuple[FloatArray, FloatArray]:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("sample must be a nonempty (n, d) array")
    level = u.u if isinstance(u, Level) else np.atleast_1d(np.asarray(u, dtype=np.float64))
    if level.shape != (x.shape[1],):
        raise ValueError(f"level must have length {x.shape[1]}, got {level.shape}")
    return x, level


def data_scale(sample: FloatArray) -> float:
    """Largest componentwise range, or 1 for a degenerate sample."""
    spread = float(np.max(np.ptp(sample, axis=0)))
    return spread if spread > 0 else 1.0


def gq_objective(sample: FloatArray, u: Level | FloatArray, q: FloatArray) -> float:
    """(1/n) sum_i (||x_i - q||_2 - <u, q>)."""
    x, level = _prepare(sample, u)
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    return float(np.mean(np.linalg.norm(x - q, axis=1)) - level @ q)


def gq_gradient(
    sample: FloatArray,
    u: Level | FloatArray,
    q: FloatArray,
    epsilon: float = 0.0,
) -> FloatArray:
    """(1/n) sum_i (q - x_i)/max(||q - x_i||, epsilon) - u.

    With epsilon = 0 terms of data points coinciding with q are dropped.
    """
    x, level = _prepare(sample, u)
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    diff = q - x
    dist = np.linalg.norm(diff, axis=1)
    denom = np.maximum(dist, epsilon)
    safe = np.where(denom > 0, denom, 1.0)
    units = np.where((denom > 0)[:, None], diff / safe[:, None], 0.0)
    return units.mean(axis=0) - level


def _smoothed(x: FloatArray, level: FloatArray, q: FloatArray, eps: float) -> tuple[float, FloatArray]:
    diff = q - x
    dist = np.linalg.norm(diff, axis=1)
    # Huber smoothing inside eps keeps the gradient equal to diff / max(dist, eps)
    value = np.where(dist >= eps, dist, dist**2 / (2.0 * eps) + eps / 2.0)
    grad = (diff / np.maximum(dist, eps)[:, None]).mean(axis=0) - level
    return float(value.mean() - level @ q), grad


def _hessian(x: FloatArray, q: FloatArray, eps: float) -> FloatArray:
    diff = q - x
    dist = np.maximum(np.linalg.norm(diff, axis=1), eps)
    units = diff / dist[:, None]
    d = x.shape[1]
    outer = np.einsum("ni,nj->nij", units, units)
    return ((np.eye(d)[None] - outer) / dist[:, None, None]).mean(axis=0)


def data_point_subgradient(sample: FloatArray, u: Level | FloatArray, k: int) -> tuple[float, float]:
    """Norm of the smooth part of the subgradient at data point k and its ball radius.

    x_k minimizes the objective iff the first value is at most the second.
    """
    x, level = _prepare(sample, u)
    diff = x[k] - x
    dist = np.linalg.norm(diff, axis=1)
    same = dist == 0
    safe = np.where(same, 1.0, dist)
    units = np.where(same[:, None], 0.0, diff / safe[:, None])
    s = units.sum(axis=0) / len(x) - level
    return float(np.linalg.norm(s)), float(same.sum()) / len(x)


def min_norm_subgradient(sample: FloatArray, u: Level | FloatArray, q: FloatArray) -> float:
    """Smallest norm over the subdifferential of the exact objective at q."""
    x, level = _prepare(sample, u)
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    diff = q - x
    dist = np.linalg.norm(diff, axis=1)
    same = dist == 0
    safe = np.where(same, 1.0, dist)
    s = np.where(same[:, None], 0.0, diff / safe[:, None]).sum(axis=0) / len(x) - level
    radius = float(same.sum()) / len(x)
    return max(float(np.linalg.norm(s)) - radius, 0.0)


def _initial_point(x: FloatArray, opts: SolverOptions) -> FloatArray:
    match opts.init:
        case "median":
            return np.median(x, axis=0)
        case "mean":
            return x.mean(axis=0)
        case "user":
            assert opts.q0 is not None
            q0 = np.asarray(opts.q0, dtype=np.float64)
            if q0.shape != (x.shape[1],):
                raise ValueError(f"q0 must have length {x.shape[1]}")
            return q0


def solve_gq(
    sample: FloatArray,
    u: Level | FloatArray,
    opts: SolverOptions | None = None,
) -> GeoQuantile:
    """Empirical geometric quantile of level u.

    Args:
        sample: (n, d) data, or a 1-d array for d = 1.
        u: Level with ||u||_2 < 1.
        opts: Solver options.

    Returns:
        Best iterate; ``converged`` is False when the tolerance was not met
        within ``opts.max_iter`` iterations.

    Raises:
        ValueError: If the sample is empty or u has the wrong shape or norm.
    """
    opts = opts or SolverOptions()
    level = u if isinstance(u, Level) else Level(np.atleast_1d(np.asarray(u, dtype=np.float64)))
    x, lv = _prepare(sample, level)
    scale = data_scale(x)
    eps = opts.epsilon if opts.epsilon is not None else 1e-9 * scale
    tol = opts.tol * (1.0 + float(np.linalg.norm(lv)))
    history: list[float] = []

    def fun(q: FloatArray) -> tuple[float, FloatArray]:
        return _smoothed(x, lv, q, eps)

    def record(q: FloatArray) -> None:
        history.append(fun(q)[0])

    q0 = _initial_point(x, opts)
    history.append(fun(q0)[0])
    result = optimize.minimize(
        fun,
        q0,
        jac=True,
        method="BFGS",
        callback=record,
        options={"gtol": tol, "maxiter": opts.max_iter, "norm": 2.0},
    )
    q = np.asarray(result.x, dtype=np.float64)
    iterations = int(result.nit)
    value, grad = fun(q)

    for _ in range(_NEWTON_STEPS):
        if np.linalg.norm(grad) <= tol:
            break
        try:
            step = -np.linalg.solve(_hessian(x, q, eps), grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-12:
            trial = q + t * step
            trial_value, trial_grad = fun(trial)
            if trial_value <= value + 1e-4 * t * float(grad @ step):
                break
            t /= 2.0
        else:
            break
        q, value, grad = trial, trial_value, trial_grad
        iterations += 1
        history.append(value)

    at_data_point = False
    nearest = np.argsort(np.linalg.norm(x - q, axis=1), kind="stable")[:_DATA_POINT_CANDIDATES]
    for k in nearest:
        smooth_part, radius = data_point_subgradient(x, lv, int(k))
        if smooth_part <= radius:
            q = x[int(k)].copy()
            at_data_point = True
            break

    grad_norm = min_norm_subgradient(x, lv, q)
    converged = grad_norm <= tol
    if not converged:
        logger.warning(
            "solve_gq: not converged, |u|=%.4f, gradient_norm=%.3e, iterations=%d",
            float(np.linalg.norm(lv)),
            grad_norm,
            iterations,
        )
    return GeoQuantile(
        level=level,
        q=q,
        objective_value=gq_objective(x, lv, q),
        gradient_norm=grad_norm,
        iterations=iterations,
        converged=converged,
        at_data_point=at_data_point,
        history=tuple(history),
    )


def solve_levels(
    sample: FloatArray,
    levels: Sequence[Level],
    opts: SolverOptions | None = None,
    *,
    threads: int = 1,
) -> list[GeoQuantile]:
    """Solve every level; results are returned in level order."""
    if threads <= 1:
        return [solve_gq(sample, level, opts) for level in levels]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda level: solve_gq(sample, level, opts), levels))


def spatial_rank(sample: FloatArray, j: int) -> Level:
    """Level whose empirical geometric quantile is the data point x_j.

    u_j = (1/n) sum_{i != j} (x_j - x_i)/||x_j - x_i||; rows equal to x_j are
    skipped.

    Raises:
        ValueError: If n < 2 or every row equals row j.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n < 2:
        raise ValueError("spatial_rank needs at least 2 rows")
    diff = x[j] - np.delete(x, j, axis=0)
    dist = np.linalg.norm(diff, axis=1)
    keep = dist > 0
    if not keep.any():
        raise ValueError(f"all rows equal row {j}")
    if not keep.all():
        logger.warning("spatial_rank: skipped %d rows duplicating row %d", int((~keep).sum()), j)
    u = (diff[keep] / dist[keep, None]).sum(axis=0) / n
    return Level(u)


def level_grid(d: int) -> list[Level]:
    """Standard level grid: the zero level plus 9 lengths times the direction set.

    d = 3 uses polar and azimuth angles on the pi/4 grid with the poles
    deduplicated (26 directions, 235 levels); d = 2 uses 16 directions at
    pi/8 steps (145 levels).
    """
    if d == 3:
        directions = [np.array([0.0, 0.0, 1.0])]
        for polar in (math.pi / 4, math.pi / 2, 3 * math.pi / 4):
            for k in range(8):
                azimuth = k * math.pi / 4
                directions.append(
                    np.array(
                        [
                            math.sin(polar) * math.cos(azimuth),
                            math.sin(polar) * math.sin(azimuth),
                            math.cos(polar),
                        ]
                    )
                )
        directions.append(np.array([0.0, 0.0, -1.0]))
    elif d == 2:
        directions = [
            np.array([math.cos(k * math.pi / 8), math.sin(k * math.pi / 8)]) for k in range(16)
        ]
    else:
        raise ValueError(f"level_grid supports d in {{2, 3}}, got d={d}")
    levels = [Level(np.zeros(d))]
    for length in GRID_LENGTHS[1:]:
        for direction in directions:
            levels.append(Level(length * direction, is_extreme=length > EXTREME_LENGTH))
    return levels


def extreme_quantile_ratio(
    sample: FloatArray,
    direction: FloatArray,
    lambdas: Sequence[float],
    opts: SolverOptions | None = None,
) -> tuple[FloatArray, float]:
    """Extreme-quantile diagnostic ||Q(lambda u)||^2 (1 - lambda) and its limit.

    For finite covariance Sigma the scaled norms approach
    (tr Sigma - u' Sigma u)/2 as lambda -> 1 for a unit direction u.

    Returns:
        Tuple (scaled_norms, limit).
    """
    x = np.asarray(sample, dtype=np.float64)
    unit = np.asarray(direction, dtype=np.float64)
    unit = unit / np.linalg.norm(unit)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    limit = float((np.trace(cov) - unit @ cov @ unit) / 2.0)
    scaled = np.array(
        [
            float(np.sum(solve_gq(x, Level(lam * unit), opts).q ** 2)) * (1.0 - lam)
            for lam in lambdas
        ]
    )
    return scaled, limit
