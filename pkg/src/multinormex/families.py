"""Heavy-tailed vector families: samplers, survival functions and tail limits.

Four families live on the positive orthant, all with Pareto-Lomax type
tails of index alpha:

- ``MvParetoLomax``: joint survival (1 + x_1 + ... + x_d)^(-alpha).
- ``IndepParetoLomax``: independent Pareto-Lomax(alpha) components.
- ``ClaytonParetoLomax``: Pareto-Lomax margins glued by a survival Clayton
  copula with parameter theta (d = 2).
- ``RadialParetoLomax``: density proportional to (1 + ||x||_inf)^(-(alpha + d)).

Each (family, norm) pair with a closed form is listed in ``SUPPORTED_PAIRS``.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special

from multinormex.exceptions import Operation, UnsupportedPairError
from multinormex.streams import DEFAULT_BLOCK_ROWS, block_generator, map_blocks
from multinormex.types import (
    EmpiricalTheta,
    FamilyParams,
    FloatArray,
    NormingConstants,
    NormKind,
    SecondOrder,
    Variant,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

SUPPORTED_PAIRS: frozenset[tuple[Variant, NormKind]] = frozenset(
    {
        ("MvParetoLomax", "L1"),
        ("IndepParetoLomax", "Linf"),
        ("ClaytonParetoLomax", "Linf"),
        ("RadialParetoLomax", "Linf"),
    }
)
"""Family/norm pairs with closed-form norm laws, moments and Theta."""

DEFAULT_THETA_QUANTILE = 0.999
"""Norm quantile above which the empirical Theta fallback keeps draws."""

_EMPIRICAL_CHUNK_ROWS = 1 << 20


def check_pair(params: FamilyParams, norm: NormKind, operation: Operation) -> None:
    """Reject family/norm pairs without closed forms."""
    if (params.variant, norm) not in SUPPORTED_PAIRS:
        raise UnsupportedPairError(
            f"{operation} is not available for {params.variant} with the {norm} norm",
            variant=params.variant,
            norm=norm,
            operation=operation,
        )


def norm_of(sample: FloatArray, norm: NormKind) -> FloatArray:
    """Row norms of a sample (any leading shape, last axis = components)."""
    if norm == "L1":
        return np.sum(np.abs(sample), axis=-1)
    return np.max(np.abs(sample), axis=-1)


def _as_nonnegative(x: float | FloatArray, name: str) -> FloatArray:
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"{name} must be >= 0")
    return arr


def _scalar_or_array(arr: FloatArray) -> float | FloatArray:
    return float(arr) if arr.ndim == 0 else arr


# ── Sampling ───────────────────────────────────────────────────────────


def _lomax(rng: np.random.Generator, alpha: float, shape: tuple[int, ...]) -> FloatArray:
    # U^(-1/alpha) - 1 with -log U ~ Exp(1)
    return np.expm1(rng.standard_exponential(shape) / alpha)


def _linf_sphere(rng: np.random.Generator, rows: int, d: int) -> FloatArray:
    directions = rng.random((rows, d))
    face = rng.integers(0, d, size=rows)
    directions[np.arange(rows), face] = 1.0
    return directions


def draw_family(params: FamilyParams, rng: np.random.Generator, rows: int) -> FloatArray:
    """Draw ``rows`` iid vectors of the family from ``rng``."""
    alpha, d = params.alpha, params.d
    match params.variant:
        case "MvParetoLomax":
            out = np.empty((rows, d))
            out[:, 0] = _lomax(rng, alpha, (rows,))
            partial = out[:, 0].copy()
            for k in range(1, d):
                # X_(k+1) | X_1..X_k ~ (1 + X_1 + ... + X_k) * Lomax(alpha + k)
                out[:, k] = (1.0 + partial) * _lomax(rng, alpha + k, (rows,))
                partial += out[:, k]
            return out
        case "IndepParetoLomax":
            return _lomax(rng, alpha, (rows, d))
        case "ClaytonParetoLomax":
            theta = params.alpha_theta / alpha
            frailty = rng.gamma(1.0 / theta, 1.0, size=(rows, 1))
            expo = rng.standard_exponential((rows, d))
            # U = (1 + E/V)^(-1/theta) has the Clayton copula; X = U^(-1/alpha) - 1
            return np.expm1(np.log1p(expo / frailty) / params.alpha_theta)
        case "RadialParetoLomax":
            b = rng.beta(d, alpha, size=rows)
            radius = b / (1.0 - b)
            return radius[:, None] * _linf_sphere(rng, rows, d)


def sample_family(
    params: FamilyParams,
    count: int,
    seed: int,
    *,
    threads: int = 1,
) -> FloatArray:
    """Draw ``count`` iid rows from the family.

    Args:
        params: Family description.
        count: Number of rows, at least 1.
        seed: 64-bit unsigned seed.
        threads: Worker threads; the result does not depend on it.

    Returns:
        Array of shape (count, d) with nonnegative entries.

    Raises:
        ValueError: If count < 1 or the seed is out of range.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    logger.debug(
        "sample_family: variant=%s, alpha=%g, d=%d, count=%d, seed=%d",
        params.variant,
        params.alpha,
        params.d,
        count,
        seed,
    )
    return map_blocks(
        lambda rng, rows: draw_family(params, rng, rows),
        count,
        seed,
        "family",
        threads=threads,
    )


# ── Survival functions and norm laws ───────────────────────────────────


def marginal_survival(params: FamilyParams, x: float | FloatArray) -> float | FloatArray:
    """P(X_j > x) = (1 + x)^(-alpha) for the Pareto-Lomax margin families."""
    arr = _as_nonnegative(x, "x")
    if params.variant == "RadialParetoLomax":
        raise UnsupportedPairError(
            "RadialParetoLomax marginals have no closed form",
            variant=params.variant,
            operation="marginal_survival",
        )
    return _scalar_or_array(np.exp(-params.alpha * np.log1p(arr)))


def joint_survival(params: FamilyParams, x: FloatArray | list[float]) -> float:
    """P(X_i > x_i for all i)."""
    arr = _as_nonnegative(x, "x")
    if arr.shape != (params.d,):
        raise ValueError(f"x must have length {params.d}, got shape {arr.shape}")
    alpha = params.alpha
    match params.variant:
        case "MvParetoLomax":
            return float((1.0 + arr.sum()) ** -alpha)
        case "IndepParetoLomax":
            return float(np.exp(-alpha * np.log1p(arr).sum()))
        case "ClaytonParetoLomax":
            at = params.alpha_theta
            inner = np.sum(np.exp(at * np.log1p(arr))) - 1.0
            return float(inner ** (-alpha / at))
        case "RadialParetoLomax":
            raise UnsupportedPairError(
                "RadialParetoLomax joint survival has no closed form",
                variant=params.variant,
                operation="joint_survival",
            )


def gamma_series_survival(alpha: float, d: int, y: FloatArray) -> FloatArray:
    """Finite Gamma series sum_{k<d} Gamma(alpha+k)/(k! Gamma(alpha)) y^k (1+y)^-(alpha+k).

    Equals 1 - I_{y/(1+y)}(d, alpha); terms are summed with math.fsum.
    """
    log1p_y = np.log1p(y)
    with np.errstate(divide="ignore"):
        log_y = np.log(y)
    terms = []
    for k in range(d):
        log_coef = special.gammaln(alpha + k) - special.gammaln(k + 1) - special.gammaln(alpha)
        power = k * log_y if k else 0.0
        terms.append(np.exp(log_coef + power - (alpha + k) * log1p_y))
    stacked = np.stack(np.broadcast_arrays(*terms), axis=-1)
    if stacked.ndim == 1:
        return np.asarray(math.fsum(stacked))
    return np.array([math.fsum(row) for row in stacked.reshape(-1, d)]).reshape(y.shape)


def norm_cdf(
    params: FamilyParams,
    norm: NormKind,
    y: float | FloatArray,
    *,
    form: str = "beta",
) -> float | FloatArray:
    """Cdf of ||X|| at ``y``.

    For the radial-type pairs (MvParetoLomax-L1, RadialParetoLomax-Linf) the
    norm satisfies ||X|| / (1 + ||X||) ~ Beta(d, alpha). ``form`` selects the
    evaluator there: "beta" (regularized incomplete beta), "gamma_sum"
    (finite Gamma-function series) or "three_term" (the d = 3 expansion).
    """
    check_pair(params, norm, "norm_cdf")
    arr = _as_nonnegative(y, "y")
    alpha, d = params.alpha, params.d
    match params.variant:
        case "MvParetoLomax" | "RadialParetoLomax":
            if form == "beta":
                result = special.betainc(d, alpha, arr / (1.0 + arr))
            elif form == "gamma_sum":
                result = 1.0 - gamma_series_survival(alpha, d, arr)
            elif form == "three_term":
                if d != 3:
                    raise ValueError("the three-term form requires d = 3")
                ratio = arr / (1.0 + arr)
                result = 1.0 - np.exp(-alpha * np.log1p(arr)) * (
                    1.0 + alpha * ratio + alpha * (alpha + 1.0) / 2.0 * ratio**2
                )
            else:
                raise ValueError(f"unknown norm_cdf form: {form!r}")
        case "IndepParetoLomax":
            result = (-np.expm1(-alpha * np.log1p(arr))) ** d
        case "ClaytonParetoLomax":
            result = 1.0 - clayton_max_survival(params, arr)
    return _scalar_or_array(np.asarray(result))


def norm_survival(params: FamilyParams, norm: NormKind, y: float | FloatArray) -> float | FloatArray:
    """P(||X|| > y), evaluated without cancellation for large y."""
    check_pair(params, norm, "norm_cdf")
    arr = _as_nonnegative(y, "y")
    alpha, d = params.alpha, params.d
    match params.variant:
        case "MvParetoLomax" | "RadialParetoLomax":
            result = special.betainc(alpha, d, 1.0 / (1.0 + arr))
        case "IndepParetoLomax":
            result = -np.expm1(d * np.log1p(-np.exp(-alpha * np.log1p(arr))))
        case "ClaytonParetoLomax":
            result = clayton_max_survival(params, arr)
    return _scalar_or_array(np.asarray(result))


def clayton_max_survival(params: FamilyParams, t: FloatArray) -> FloatArray:
    """P(max(X_1, X_2) > t) = 2(1+t)^-alpha - (2(1+t)^(alpha*theta) - 1)^(-1/theta)."""
    theta = params.theta
    assert theta is not None
    log1p_t = np.log1p(t)
    both = np.exp(-np.log(2.0 * np.exp(params.alpha_theta * log1p_t) - 1.0) / theta)
    return 2.0 * np.exp(-params.alpha * log1p_t) - both


# ── Frechet law and norming ────────────────────────────────────────────


def frechet_cdf(alpha: float, x: float | FloatArray) -> float | FloatArray:
    """P(H_alpha <= x) = exp(-x^(-alpha)), x > 0."""
    arr = np.asarray(x, dtype=np.float64)
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if np.any(~(arr > 0)):
        raise ValueError("x must be > 0")
    return _scalar_or_array(np.exp(-(arr ** -alpha)))


def frechet_quantile(alpha: float, u: float | FloatArray) -> float | FloatArray:
    """Inverse of :func:`frechet_cdf`: (-ln u)^(-1/alpha), u in (0, 1)."""
    arr = np.asarray(u, dtype=np.float64)
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValueError("u must lie in (0, 1)")
    return _scalar_or_array((-np.log(arr)) ** (-1.0 / alpha))


def tail_constant(params: FamilyParams, norm: NormKind) -> float:
    """c^alpha = lim y^alpha P(||X|| > y)."""
    check_pair(params, norm, "norming_constants")
    alpha, d = params.alpha, params.d
    match params.variant:
        case "IndepParetoLomax":
            return float(d)
        case "ClaytonParetoLomax":
            theta = params.alpha_theta / alpha
            return 2.0 - 2.0 ** (-1.0 / theta)
        case "MvParetoLomax" | "RadialParetoLomax":
            # sum of every Gamma-series coefficient
            return float(
                np.exp(special.gammaln(alpha + d) - special.gammaln(alpha + 1) - special.gammaln(d))
            )


def norming_constants(
    params: FamilyParams,
    norm: NormKind,
    n: int,
    *,
    zero_shift: bool = False,
) -> NormingConstants:
    """a_n = (c^alpha n)^(1/alpha) and b_n = -1 (0 with ``zero_shift``)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    c_alpha = tail_constant(params, norm)
    return NormingConstants(
        a_n=(c_alpha * n) ** (1.0 / params.alpha),
        b_n=0.0 if zero_shift else -1.0,
    )


def second_order_indices(params: FamilyParams, norm: NormKind) -> SecondOrder:
    """Second-order indices (rho, beta) of the norm and angular convergence."""
    check_pair(params, norm, "second_order_indices")
    match params.variant:
        case "IndepParetoLomax":
            return SecondOrder(rho=params.alpha, beta=params.alpha)
        case "ClaytonParetoLomax":
            return SecondOrder(rho=min(params.alpha_theta, 1.0), beta=1.0)
        case "MvParetoLomax" | "RadialParetoLomax":
            return SecondOrder(rho=1.0, beta=math.inf)


# ── Angular component ──────────────────────────────────────────────────


def draw_theta(
    params: FamilyParams,
    norm: NormKind,
    rng: np.random.Generator,
    rows: int,
) -> FloatArray:
    """Draw ``rows`` limit directions on the unit sphere of ``norm``."""
    check_pair(params, norm, "sample_theta")
    d = params.d
    match params.variant:
        case "IndepParetoLomax":
            out = np.zeros((rows, d))
            out[np.arange(rows), rng.integers(0, d, size=rows)] = 1.0
            return out
        case "MvParetoLomax":
            expo = rng.standard_exponential((rows, d))
            return expo / expo.sum(axis=1, keepdims=True)
        case "RadialParetoLomax":
            return _linf_sphere(rng, rows, d)
        case "ClaytonParetoLomax":
            theta = params.alpha_theta / params.alpha
            power = 1.0 + 1.0 / theta
            w = rng.random(rows)
            # inverse of (1 - (1 + t^(alpha theta))^-power) / (1 - 2^-power)
            base = 1.0 - w * -np.expm1(-power * math.log(2.0))
            free = np.expm1(-np.log(base) / power) ** (1.0 / params.alpha_theta)
            face = rng.integers(0, 2, size=rows)
            out = np.empty((rows, 2))
            out[np.arange(rows), face] = 1.0
            out[np.arange(rows), 1 - face] = np.minimum(free, 1.0)
            return out


def sample_theta(
    params: FamilyParams,
    norm: NormKind,
    count: int,
    seed: int,
    *,
    threads: int = 1,
) -> FloatArray:
    """Draw ``count`` directions from the spectral law of the pair.

    Raises:
        UnsupportedPairError: If no exact sampler exists; use
            :func:`empirical_theta` instead.
    """
    check_pair(params, norm, "sample_theta")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return map_blocks(
        lambda rng, rows: draw_theta(params, norm, rng, rows),
        count,
        seed,
        "theta",
        threads=threads,
    )


def empirical_theta(
    params: FamilyParams,
    norm: NormKind,
    count: int,
    seed: int,
    *,
    quantile: float = DEFAULT_THETA_QUANTILE,
) -> EmpiricalTheta:
    """Directions X/||X|| of the ``count`` largest of ceil(count/(1-quantile)) draws.

    Works for any family and norm; biased by the finite threshold, which is
    returned with the directions.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {quantile}")
    raw = math.ceil(count / (1.0 - quantile))
    keep = min(count + 1, raw)
    best_rows = np.empty((0, params.d))
    best_norms = np.empty(0)
    for chunk, rows in enumerate(_chunk_sizes(raw)):
        draws = draw_family(params, block_generator(seed, "empirical_theta", chunk), rows)
        rows_all = np.concatenate([best_rows, draws])
        norms_all = np.concatenate([best_norms, norm_of(draws, norm)])
        if len(norms_all) > keep:
            top = np.argpartition(norms_all, len(norms_all) - keep)[-keep:]
            top.sort()
            rows_all, norms_all = rows_all[top], norms_all[top]
        best_rows, best_norms = rows_all, norms_all
    order = np.argsort(best_norms, kind="stable")[::-1]
    threshold = float(best_norms[order[-1]]) if raw > count else 0.0
    chosen = order[:count]
    chosen.sort()
    kept = best_rows[chosen]
    directions = kept / norm_of(kept, norm)[:, None]
    logger.debug(
        "empirical_theta: raw=%d, count=%d, threshold=%g", raw, count, threshold
    )
    return EmpiricalTheta(directions=directions, threshold=threshold, raw_draws=raw)


def _chunk_sizes(raw: int) -> list[int]:
    chunk = max(_EMPIRICAL_CHUNK_ROWS, DEFAULT_BLOCK_ROWS)
    full, rest = divmod(raw, chunk)
    return [chunk] * full + ([rest] if rest else [])
