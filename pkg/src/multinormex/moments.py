"""Mean vector and covariance of X conditioned on ||X|| <= y.

The radial-type pairs (MvParetoLomax with L1, RadialParetoLomax with Linf)
factor as X = R * D with R = ||X|| independent of the direction D, and
R / (1 + R) ~ Beta(d, alpha). Truncated power moments of R reduce to
incomplete beta functions, D contributes fixed moment factors.
IndepParetoLomax truncates each component separately. The Clayton pair is
integrated in closed form when alpha * theta = 1 and by tensor
Gauss-Legendre quadrature otherwise.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import integrate, interpolate, special

from multinormex.exceptions import AcceptanceRateError, MomentConditionError
from multinormex.families import (
    check_pair,
    gamma_series_survival,
    norm_cdf,
    norm_of,
    sample_family,
)
from multinormex.types import (
    FamilyParams,
    FloatArray,
    NormKind,
    OracleMoments,
    TruncatedMoments,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

MIN_ACCEPTANCE_RATE = 1e-4
"""Rejection oracle refuses truncation levels accepting fewer draws."""

MIN_ORACLE_DRAWS = 10_000

CLAYTON_CLOSED_FORM_MIN_Y = 0.1
"""Below this level the closed Clayton forms lose digits to cancellation."""

_PANEL_WIDTH = 0.5
_PANEL_NODES = 24
_SPLINE_NODES = 256
_SPLINE_MIN_BATCH = 32
_UNIT_TOL = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_PANEL_NODES)


def _check_levels(y: float | FloatArray) -> FloatArray:
    arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if np.any(~(arr > 0)) or np.any(~np.isfinite(arr)):
        raise ValueError("truncation level y must be finite and > 0")
    return arr


def _direction_factors(params: FamilyParams) -> tuple[float, float, float]:
    """E[D_i], E[D_i^2], E[D_i D_j] of the direction of a radial-type pair."""
    d = params.d
    if params.variant == "MvParetoLomax":
        # Dirichlet(1, ..., 1) on the L1 simplex
        return 1.0 / d, 2.0 / (d * (d + 1)), 1.0 / (d * (d + 1))
    # uniform on the positive faces of the Linf sphere
    return (d + 1) / (2 * d), (d + 2) / (3 * d), (d + 2) / (4 * d)


# ── Radial decomposition ───────────────────────────────────────────────


def incomplete_beta(a: float, b: float, z: FloatArray) -> FloatArray:
    """Unregularized B_z(a, b) = int_0^z t^(a-1) (1-t)^(b-1) dt for any real b."""
    z = np.asarray(z, dtype=np.float64)
    if b > 0:
        return special.betainc(a, b, z) * special.beta(a, b)
    out = np.asarray(z**a / a * special.hyp2f1(a, 1.0 - b, a + 1.0, z), dtype=np.float64)
    bad = ~np.isfinite(out)
    if np.any(bad):
        flat = out.reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            flat[i] = integrate.quad(
                lambda t: t ** (a - 1.0) * (1.0 - t) ** (b - 1.0), 0.0, float(z.reshape(-1)[i])
            )[0]
    return out


def radial_power_ratio(d: int, alpha: float, m: int, y: FloatArray) -> FloatArray:
    """E[R^m | R <= y] for R/(1+R) ~ Beta(d, alpha), finite for every alpha > 0."""
    z = y / (1.0 + y)
    cdf = special.betainc(d, alpha, z)
    if alpha > m:
        scale = np.exp(special.betaln(d + m, alpha - m) - special.betaln(d, alpha))
        return scale * special.betainc(d + m, alpha - m, z) / cdf
    return incomplete_beta(d + m, alpha - m, z) / (special.beta(d, alpha) * cdf)


def _radial_batch(params: FamilyParams, ys: FloatArray) -> tuple[FloatArray, FloatArray]:
    d, alpha = params.d, params.alpha
    m1, m2_diag, m2_off = _direction_factors(params)
    r1 = radial_power_ratio(d, alpha, 1, ys)
    r2 = radial_power_ratio(d, alpha, 2, ys)
    mu = np.repeat((m1 * r1)[:, None], d, axis=1)
    pattern = np.full((d, d), m2_off) + np.eye(d) * (m2_diag - m2_off)
    second = r2[:, None, None] * pattern
    return mu, second - mu[:, :, None] * mu[:, None, :]


def _independent_batch(params: FamilyParams, ys: FloatArray) -> tuple[FloatArray, FloatArray]:
    d, alpha = params.d, params.alpha
    r1 = radial_power_ratio(1, alpha, 1, ys)
    r2 = radial_power_ratio(1, alpha, 2, ys)
    mu = np.repeat(r1[:, None], d, axis=1)
    # components are independent given the box, so off-diagonals are exactly 0
    sigma = (r2 - r1**2)[:, None, None] * np.eye(d)
    return mu, sigma


# ── Clayton pair ───────────────────────────────────────────────────────


def _q0(c: FloatArray, p: float, y: FloatArray) -> FloatArray:
    # int_0^y (c + x)^-p dx
    return (c ** (1.0 - p) - (c + y) ** (1.0 - p)) / (p - 1.0)


def _q1(c: FloatArray, p: float, y: FloatArray) -> FloatArray:
    # int_0^y x (c + x)^-p dx
    return -y * (c + y) ** (1.0 - p) / (p - 1.0) + _q0(c, p - 1.0, y) / (p - 1.0)


def _q2(c: FloatArray, p: float, y: FloatArray) -> FloatArray:
    # int_0^y x^2 (c + x)^-p dx
    return -(y**2) * (c + y) ** (1.0 - p) / (p - 1.0) + 2.0 * _q1(c, p - 1.0, y) / (p - 1.0)


def clayton_unit_box_moments(alpha: float, y: FloatArray) -> tuple[FloatArray, ...]:
    """Box integrals E[X1; box], E[X1^2; box], E[X1 X2; box] for alpha * theta = 1.

    With alpha * theta = 1 the joint survival is (1 + x1 + x2)^-alpha and the
    density alpha (alpha + 1) (1 + x1 + x2)^-(alpha + 2). Undefined for
    alpha in {1, 2}.
    """
    one = np.ones_like(y)
    shifted = 1.0 + y
    m1 = alpha * (_q1(one, alpha + 1.0, y) - _q1(shifted, alpha + 1.0, y))
    m2 = alpha * (_q2(one, alpha + 1.0, y) - _q2(shifted, alpha + 1.0, y))
    m12 = (
        _q1(one, alpha, y)
        - _q1(shifted, alpha, y)
        - alpha * y * _q1(shifted, alpha + 1.0, y)
    )
    return m1, m2, m12


def clayton_box_quadrature(params: FamilyParams, y: float) -> tuple[float, float, float, float]:
    """Mass, E[X1; box], E[X1^2; box], E[X1 X2; box] on [0, y]^2 by quadrature.

    Integrates in v = log(1 + x) with composite Gauss-Legendre panels.
    """
    alpha, at = params.alpha, params.alpha_theta
    theta = at / alpha
    upper = math.log1p(y)
    panels = max(1, math.ceil(upper / _PANEL_WIDTH))
    edges = np.linspace(0.0, upper, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    v = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).reshape(-1)
    w = (half[:, None] * _GL_WEIGHTS[None, :]).reshape(-1)
    x = np.expm1(v)
    e1 = np.exp(at * v)
    log_a = np.log(e1[:, None] + e1[None, :] - 1.0)
    log_density = (
        math.log(alpha * alpha * (1.0 + theta))
        + at * (v[:, None] + v[None, :])
        - (1.0 / theta + 2.0) * log_a
    )
    weights = w[:, None] * w[None, :] * np.exp(log_density)
    mass = float(weights.sum())
    row = weights.sum(axis=1)
    return (
        mass,
        float(row @ x),
        float(row @ (x * x)),
        float(x @ weights @ x),
    )


def _clayton_uses_closed_form(params: FamilyParams) -> bool:
    alpha = params.alpha
    return (
        abs(params.alpha_theta - 1.0) < _UNIT_TOL
        and abs(alpha - 1.0) > 1e-9
        and abs(alpha - 2.0) > 1e-9
    )


def _clayton_conditional(params: FamilyParams, ys: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    """E[X1 | box], E[X1^2 | box], E[X1 X2 | box] for each level."""
    mean = np.empty_like(ys)
    sq = np.empty_like(ys)
    cross = np.empty_like(ys)
    closed = np.zeros(ys.shape, dtype=bool)
    if _clayton_uses_closed_form(params):
        closed = ys >= CLAYTON_CLOSED_FORM_MIN_Y
    if np.any(closed):
        yc = ys[closed]
        mass = np.asarray(norm_cdf(params, "Linf", yc))
        m1, m2, m12 = clayton_unit_box_moments(params.alpha, yc)
        mean[closed], sq[closed], cross[closed] = m1 / mass, m2 / mass, m12 / mass
    rest = np.flatnonzero(~closed)
    if len(np.unique(ys[rest])) > _SPLINE_MIN_BATCH:
        mean[rest], sq[rest], cross[rest] = _clayton_spline(params, ys[rest])
    else:
        for i in rest:
            mass_q, m1q, m2q, m12q = clayton_box_quadrature(params, float(ys[i]))
            mean[i], sq[i], cross[i] = m1q / mass_q, m2q / mass_q, m12q / mass_q
    return mean, sq, cross


def _clayton_spline(params: FamilyParams, ys: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    # quadrature on a log grid spanning the batch, cubic interpolation in log y
    lo, hi = math.log(float(ys.min())), math.log(float(ys.max()))
    grid = np.linspace(lo, hi, _SPLINE_NODES)
    values = np.empty((_SPLINE_NODES, 3))
    for k, log_y in enumerate(grid):
        mass, m1, m2, m12 = clayton_box_quadrature(params, math.exp(log_y))
        values[k] = (m1 / mass, m2 / mass, m12 / mass)
    logger.debug(
        "clayton spline: nodes=%d, y_range=[%g, %g], batch=%d",
        _SPLINE_NODES,
        math.exp(lo),
        math.exp(hi),
        len(ys),
    )
    spline = interpolate.CubicSpline(grid, values, axis=0)
    fitted = spline(np.log(ys))
    return fitted[:, 0], fitted[:, 1], fitted[:, 2]


def _clayton_batch(params: FamilyParams, ys: FloatArray) -> tuple[FloatArray, FloatArray]:
    mean, sq, cross = _clayton_conditional(params, ys)
    mu = np.stack([mean, mean], axis=1)
    var = sq - mean**2
    cov = cross - mean**2
    sigma = np.empty((len(ys), 2, 2))
    sigma[:, 0, 0] = sigma[:, 1, 1] = var
    sigma[:, 0, 1] = sigma[:, 1, 0] = cov
    return mu, sigma


# ── Public operations ──────────────────────────────────────────────────


def truncated_moments_batch(
    params: FamilyParams,
    norm: NormKind,
    ys: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    """Vectorized :func:`truncated_moments`.

    Returns:
        Tuple (mu, sigma) with shapes (k, d) and (k, d, d).
    """
    check_pair(params, norm, "truncated_moments")
    levels = _check_levels(ys)
    match params.variant:
        case "MvParetoLomax" | "RadialParetoLomax":
            return _radial_batch(params, levels)
        case "IndepParetoLomax":
            return _independent_batch(params, levels)
        case "ClaytonParetoLomax":
            return _clayton_batch(params, levels)
    raise AssertionError(params.variant)


def truncated_moments(params: FamilyParams, norm: NormKind, y: float) -> TruncatedMoments:
    """Mean and covariance of the law of X given ||X|| <= y.

    Finite for every alpha > 0 because y is finite.

    Raises:
        UnsupportedPairError: If the pair has no closed form.
        ValueError: If y is not a finite positive number.
    """
    mu, sigma = truncated_moments_batch(params, norm, np.array([y], dtype=np.float64))
    return TruncatedMoments(y=float(y), mu=mu[0], sigma=sigma[0])


def unconditional_moments(params: FamilyParams) -> tuple[FloatArray, FloatArray]:
    """Mean vector and covariance matrix of X.

    Raises:
        MomentConditionError: If alpha <= 2.
    """
    alpha, d = params.alpha, params.d
    if alpha <= 2:
        raise MomentConditionError(
            f"second moments require alpha > 2, got alpha={alpha}", alpha=alpha, order=2
        )
    lomax_mean = 1.0 / (alpha - 1.0)
    lomax_var = alpha / ((alpha - 1.0) ** 2 * (alpha - 2.0))
    match params.variant:
        case "MvParetoLomax":
            cov = np.full((d, d), 1.0 / ((alpha - 1.0) ** 2 * (alpha - 2.0)))
            np.fill_diagonal(cov, lomax_var)
            return np.full(d, lomax_mean), cov
        case "IndepParetoLomax":
            return np.full(d, lomax_mean), np.eye(d) * lomax_var
        case "RadialParetoLomax":
            mean = (d + 1) / (2.0 * (alpha - 1.0))
            sq = (d + 1) * (d + 2) / (3.0 * (alpha - 1.0) * (alpha - 2.0))
            cross = (d + 1) * (d + 2) / (4.0 * (alpha - 1.0) * (alpha - 2.0))
            cov = np.full((d, d), cross - mean**2)
            np.fill_diagonal(cov, sq - mean**2)
            return np.full(d, mean), cov
        case "ClaytonParetoLomax":
            covariance = _clayton_covariance(params)
            cov = np.array([[lomax_var, covariance], [covariance, lomax_var]])
            return np.full(2, lomax_mean), cov
    raise AssertionError(params.variant)


def _clayton_covariance(params: FamilyParams) -> float:
    alpha, at = params.alpha, params.alpha_theta
    if abs(at - 1.0) < _UNIT_TOL:
        return 1.0 / ((alpha - 1.0) ** 2 * (alpha - 2.0))
    theta = at / alpha

    # Hoeffding: Cov = int int S(x1, x2) - S1(x1) S2(x2), in v = log(1 + x)
    def integrand(v2: float, v1: float) -> float:
        joint = (math.exp(at * v1) + math.exp(at * v2) - 1.0) ** (-1.0 / theta)
        return (joint - math.exp(-alpha * (v1 + v2))) * math.exp(v1 + v2)

    value, error = integrate.dblquad(
        integrand, 0.0, math.inf, 0.0, math.inf, epsabs=1e-11, epsrel=1e-9
    )
    logger.debug("clayton covariance: value=%g, error=%g", value, error)
    return float(value)


def mc_truncated_moments(
    params: FamilyParams,
    norm: NormKind,
    y: float,
    n_mc: int,
    seed: int,
    *,
    threads: int = 1,
) -> OracleMoments:
    """Rejection Monte Carlo estimate of the truncated moments with standard errors.

    Raises:
        ValueError: If n_mc < 10^4 or y <= 0.
        AcceptanceRateError: If fewer than 1e-4 of the draws fall below y.
    """
    if n_mc < MIN_ORACLE_DRAWS:
        raise ValueError(f"n_mc must be >= {MIN_ORACLE_DRAWS}, got {n_mc}")
    _check_levels(y)
    draws = sample_family(params, n_mc, seed, threads=threads)
    kept = draws[norm_of(draws, norm) <= y]
    rate = len(kept) / n_mc
    if rate < MIN_ACCEPTANCE_RATE or len(kept) < 2:
        raise AcceptanceRateError(
            f"acceptance rate {rate:.2e} below {MIN_ACCEPTANCE_RATE:g} at y={y:g}",
            acceptance_rate=rate,
            y=y,
        )
    root_k = math.sqrt(len(kept))
    mu = kept.mean(axis=0)
    products = kept[:, :, None] * kept[:, None, :]
    second = products.mean(axis=0)
    logger.debug("mc_truncated_moments: y=%g, accepted=%d, rate=%.4f", y, len(kept), rate)
    return OracleMoments(
        y=float(y),
        mu=mu,
        mu_se=kept.std(axis=0, ddof=1) / root_k,
        second=second,
        second_se=products.std(axis=0, ddof=1) / root_k,
        sigma=second - np.outer(mu, mu),
        accepted=len(kept),
        acceptance_rate=rate,
    )


# ── Explicit cross-check forms ─────────────────────────────────────────


def mv_lomax_l1_d3_explicit(alpha: float, y: float) -> TruncatedMoments:
    """Truncated moments of the 3-dimensional Pareto-Lomax law under L1, in elementary form.

    Uses Taylor polynomials of (1 + y)^(alpha + 2); agrees with the
    incomplete-beta evaluation of :func:`truncated_moments`.
    """
    if alpha in (1.0, 2.0):
        raise ValueError("explicit d = 3 forms are singular at alpha in {1, 2}")
    _check_levels(y)
    a = alpha
    base = (1.0 + y) ** -(a + 2.0)
    cdf = 1.0 - (1.0 + y) ** -a * (
        1.0 + a * y / (1.0 + y) + a * (a + 1.0) / 2.0 * (y / (1.0 + y)) ** 2
    )
    taylor3 = 1.0 + (a + 2.0) * y * (1.0 + y * (a + 1.0) * (a * y + 3.0) / 6.0)
    first = ((1.0 + y) ** (a + 2.0) - taylor3) * base / (a - 1.0)
    taylor4 = (a + 2.0) * y * (y * (a + 1.0) * (a * y * (y * (a - 1.0) / 24.0 + 1.0 / 6.0) + 0.5) + 1.0) + 1.0
    tail = 1.0 - taylor4 * base
    sq = 2.0 * tail / ((a - 2.0) * (a - 1.0))
    cross = tail / ((a - 2.0) * (a - 1.0))
    mean = first / cdf
    sigma = np.full((3, 3), cross / cdf - mean**2)
    np.fill_diagonal(sigma, sq / cdf - mean**2)
    return TruncatedMoments(y=float(y), mu=np.full(3, mean), sigma=sigma)


def radial_linf_gamma_sum_moments(alpha: float, d: int, y: float) -> TruncatedMoments:
    """Truncated moments of the radial Linf family through finite Gamma series.

    Requires alpha > 2 so that every series coefficient is positive.
    """
    if alpha <= 2:
        raise MomentConditionError(
            f"Gamma-series forms require alpha > 2, got alpha={alpha}", alpha=alpha, order=2
        )
    _check_levels(y)
    arr = np.asarray(y, dtype=np.float64)
    cdf = 1.0 - float(gamma_series_survival(alpha, d, arr))
    first = 1.0 - float(gamma_series_survival(alpha - 1.0, d + 1, arr))
    second = 1.0 - float(gamma_series_survival(alpha - 2.0, d + 2, arr))
    mean = (d + 1) / (2.0 * (alpha - 1.0)) * first / cdf
    sq = (d + 1) * (d + 2) / (3.0 * (alpha - 1.0) * (alpha - 2.0)) * second / cdf
    cross = (d + 1) * (d + 2) / (4.0 * (alpha - 1.0) * (alpha - 2.0)) * second / cdf
    sigma = np.full((d, d), cross - mean**2)
    np.fill_diagonal(sigma, sq - mean**2)
    return TruncatedMoments(y=float(y), mu=np.full(d, mean), sigma=sigma)
