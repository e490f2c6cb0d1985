"""Generators for the n-term sum S_n of iid family vectors.

Four methods share one configuration model:

- ``DirectSum``: exact sums of n fresh draws (ground truth).
- ``CLT``: Gaussian with mean n * E[X] and covariance n * Cov(X).
- ``DNormex``: exact maximum-norm term plus a Gaussian with the truncated
  moments of the remaining n - 1 terms.
- ``MRVNormex``: maximum replaced by (a_n H + b_n) * Theta with H Frechet.

Rows are generated in fixed blocks of :data:`ENGINE_BLOCK_ROWS`, each from
its own counter-based sub-stream, so output never depends on threads.
"""

from __future__ import annotations

import logging
import math
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from multinormex.exceptions import FactorizationError, MomentConditionError, NormexError
from multinormex.families import (
    DEFAULT_THETA_QUANTILE,
    check_pair,
    draw_family,
    draw_theta,
    empirical_theta,
    norm_of,
    norming_constants,
)
from multinormex.moments import truncated_moments_batch, unconditional_moments
from multinormex.streams import block_generator, run_blocks
from multinormex.types import (
    NORMEX_METHODS,
    FamilyParams,
    FloatArray,
    Method,
    NormingConstants,
    NormKind,
    SumMetadata,
    SumSample,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

ENGINE_BLOCK_ROWS = 1024
"""Rows per sub-stream block for the sum generators."""

DEFAULT_Y_FLOOR = 1e-8

JITTER_SCALE = 1e-12
"""Relative diagonal jitter (times the trace) retried when Cholesky fails."""

MAX_RESAMPLE_ROUNDS = 1000


class NormexConfig(BaseModel):
    """Configuration of one sum generator run.

    Attributes:
        family: Summand family.
        norm: Norm ordering the summands.
        n: Number of summands; Normex methods need n >= 2.
        count: Number of sum draws.
        seed: 64-bit unsigned seed.
        y_floor: Smallest admissible conditioning norm.
        method: Generator.
        zero_shift: Use b_n = 0 instead of -1 for MRV-Normex.
        theta_source: Exact angular sampler or the empirical fallback.
        theta_quantile: Norm quantile of the empirical fallback.
        threads: Worker threads; results do not depend on it.
    """

    model_config = {"extra": "forbid", "frozen": True}

    family: FamilyParams
    norm: NormKind
    n: int = Field(ge=1)
    count: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    y_floor: float = Field(default=DEFAULT_Y_FLOOR, gt=0)
    method: Method = "DirectSum"
    zero_shift: bool = False
    theta_source: Literal["exact", "empirical"] = "exact"
    theta_quantile: float = Field(default=DEFAULT_THETA_QUANTILE, gt=0, lt=1)
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_method(self) -> NormexConfig:
        if self.method in NORMEX_METHODS and self.n < 2:
            raise ValueError(f"{self.method} requires n >= 2, got n={self.n}")
        if self.method == "CLT" and self.family.alpha <= 2:
            raise ValueError(
                f"CLT requires finite variance (alpha > 2), got alpha={self.family.alpha}"
            )
        return self


class _BlockResult(NamedTuple):
    values: FloatArray
    y_floor_hits: int = 0
    jitter_events: int = 0
    resamples: int = 0
    levels: FloatArray | None = None


class DecompositionCheck(NamedTuple):
    """Band-conditioned comparison of the trimmed sum with truncated draws.

    Attributes:
        ks_pvalues: Two-sample KS p-value per component.
        correlations: Correlation of max-direction component i with
            trimmed-sum component j.
        correlation_se: Standard error 1/sqrt(rows) of each correlation.
        rows: Number of band-conditioned tuples.
    """

    ks_pvalues: FloatArray
    correlations: FloatArray
    correlation_se: float
    rows: int


# ── Helpers ────────────────────────────────────────────────────────────


def _metadata(config: NormexConfig, blocks: list[_BlockResult], **extra: object) -> SumMetadata:
    return SumMetadata(
        method=config.method,
        seed=config.seed,
        n=config.n,
        count=config.count,
        y_floor=config.y_floor,
        y_floor_hits=sum(b.y_floor_hits for b in blocks),
        jitter_events=sum(b.jitter_events for b in blocks),
        factorization_resamples=sum(b.resamples for b in blocks),
        **extra,  # type: ignore[arg-type]
    )


def _run(config: NormexConfig, fn: object) -> list[_BlockResult]:
    return run_blocks(
        fn,  # type: ignore[arg-type]
        config.count,
        config.seed,
        config.method,
        threads=config.threads,
        block_rows=ENGINE_BLOCK_ROWS,
    )


def factorize(sigma: FloatArray, ys: FloatArray) -> tuple[FloatArray, FloatArray, int]:
    """Batched lower Cholesky factors, retrying failed rows with trace jitter.

    Returns:
        Tuple (factors, ok, jitter_events); ``ok`` flags rows that factorized.
    """
    try:
        return np.linalg.cholesky(sigma), np.ones(len(sigma), dtype=bool), 0
    except np.linalg.LinAlgError:
        pass
    d = sigma.shape[-1]
    factors = np.zeros_like(sigma)
    ok = np.ones(len(sigma), dtype=bool)
    jitter_events = 0
    for i, matrix in enumerate(sigma):
        try:
            factors[i] = np.linalg.cholesky(matrix)
            continue
        except np.linalg.LinAlgError:
            jitter = JITTER_SCALE * float(np.trace(matrix))
        jitter_events += 1
        logger.warning("covariance factorization failed at y=%g, retrying with jitter=%g", ys[i], jitter)
        try:
            factors[i] = np.linalg.cholesky(matrix + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            ok[i] = False
    return factors, ok, jitter_events


def _gaussian_rows(
    config: NormexConfig,
    rng: np.random.Generator,
    ys: FloatArray,
) -> tuple[FloatArray, FloatArray, int]:
    mu, sigma = truncated_moments_batch(config.family, config.norm, ys)
    factors, ok, jitter_events = factorize(sigma, ys)
    eps = rng.standard_normal(mu.shape)
    m = config.n - 1
    z = m * mu + math.sqrt(m) * np.einsum("rij,rj->ri", factors, eps)
    return z, ok, jitter_events


def _max_terms(
    config: NormexConfig,
    rng: np.random.Generator,
    rows: int,
) -> tuple[FloatArray, FloatArray, int]:
    """Maximum-norm term of n fresh draws per row, with y >= y_floor."""
    params, n, d = config.family, config.n, config.family.d
    top = np.empty((rows, d))
    ys = np.empty(rows)
    pending = np.arange(rows)
    hits = 0
    for _ in range(MAX_RESAMPLE_ROUNDS):
        draws = draw_family(params, rng, len(pending) * n).reshape(len(pending), n, d)
        norms = norm_of(draws, config.norm)
        # argmax returns the lowest index among ties
        idx = np.argmax(norms, axis=1)
        picked = np.arange(len(pending))
        top[pending] = draws[picked, idx]
        ys[pending] = norms[picked, idx]
        low = ys[pending] < config.y_floor
        hits += int(low.sum())
        pending = pending[low]
        if len(pending) == 0:
            return top, ys, hits
    raise NormexError(f"could not draw a maximum above y_floor={config.y_floor:g}")


def select_maximum(sample: FloatArray, norm: NormKind) -> tuple[int, float]:
    """Index and norm of the maximum-norm row; ties go to the lowest index."""
    norms = norm_of(sample, norm)
    idx = int(np.argmax(norms))
    return idx, float(norms[idx])


# ── Generators ─────────────────────────────────────────────────────────


def sample_sum(config: NormexConfig) -> SumSample:
    """Exact sums of n iid family draws."""
    params, n, d = config.family, config.n, config.family.d

    def block(rng: np.random.Generator, rows: int) -> _BlockResult:
        draws = draw_family(params, rng, rows * n).reshape(rows, n, d)
        return _BlockResult(draws.sum(axis=1))

    blocks = _run(config, block)
    logger.info("sample_sum: n=%d, count=%d", n, config.count)
    return SumSample(np.concatenate([b.values for b in blocks]), _metadata(config, blocks))


def sample_clt(config: NormexConfig) -> SumSample:
    """Gaussian draws with mean n * E[X] and covariance n * Cov(X).

    Raises:
        MomentConditionError: If alpha <= 2.
    """
    alpha = config.family.alpha
    if alpha <= 2:
        raise MomentConditionError(
            f"CLT requires finite variance (alpha > 2), got alpha={alpha}", alpha=alpha, order=2
        )
    mean, cov = unconditional_moments(config.family)
    eigval, eigvec = np.linalg.eigh(config.n * cov)
    root = eigvec @ np.diag(np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.T

    def block(rng: np.random.Generator, rows: int) -> _BlockResult:
        eps = rng.standard_normal((rows, len(mean)))
        return _BlockResult(config.n * mean + eps @ root.T)

    blocks = _run(config, block)
    return SumSample(np.concatenate([b.values for b in blocks]), _metadata(config, blocks))


def sample_d_normex(config: NormexConfig) -> SumSample:
    """Exact maximum plus Gaussian((n-1) mu(y), (n-1) Sigma(y)) with y its norm."""
    check_pair(config.family, config.norm, "truncated_moments")

    def block(rng: np.random.Generator, rows: int) -> _BlockResult:
        top, ys, hits = _max_terms(config, rng, rows)
        z, ok, jitter_events = _gaussian_rows(config, rng, ys)
        resamples = 0
        for _ in range(MAX_RESAMPLE_ROUNDS):
            if ok.all():
                break
            bad = np.flatnonzero(~ok)
            resamples += len(bad)
            top_b, ys_b, hits_b = _max_terms(config, rng, len(bad))
            z_b, ok_b, jitter_b = _gaussian_rows(config, rng, ys_b)
            top[bad], ys[bad], z[bad] = top_b, ys_b, z_b
            ok[bad] = ok_b
            hits += hits_b
            jitter_events += jitter_b
        else:
            raise FactorizationError(
                "covariance factorization kept failing after resampling",
                y=float(ys[~ok][0]),
                jitter=JITTER_SCALE,
            )
        return _BlockResult(top + z, hits, jitter_events, resamples)

    blocks = _run(config, block)
    meta = _metadata(config, blocks)
    logger.info(
        "sample_d_normex: n=%d, count=%d, y_floor_hits=%d, jitter_events=%d",
        config.n,
        config.count,
        meta.y_floor_hits,
        meta.jitter_events,
    )
    return SumSample(np.concatenate([b.values for b in blocks]), meta)


def _frechet_levels(
    config: NormexConfig,
    constants: NormingConstants,
    rng: np.random.Generator,
    rows: int,
) -> tuple[FloatArray, int]:
    ys = np.empty(rows)
    pending = np.arange(rows)
    hits = 0
    for _ in range(MAX_RESAMPLE_ROUNDS):
        # H = E^(-1/alpha) with E ~ Exp(1) is Frechet(alpha)
        with np.errstate(divide="ignore"):
            h = rng.standard_exponential(len(pending)) ** (-1.0 / config.family.alpha)
        level = constants.a_n * h + constants.b_n
        ys[pending] = level
        bad = ~(np.isfinite(level) & (level >= config.y_floor))
        hits += int(bad.sum())
        pending = pending[bad]
        if len(pending) == 0:
            return ys, hits
    raise NormexError(f"could not draw a Frechet level above y_floor={config.y_floor:g}")


def sample_mrv_normex(config: NormexConfig) -> SumSample:
    """(a_n H + b_n) * Theta plus the conditional Gaussian at y = a_n H + b_n."""
    params, norm = config.family, config.norm
    constants = norming_constants(params, norm, config.n, zero_shift=config.zero_shift)
    threshold: float | None = None
    directions: FloatArray | None = None
    if config.theta_source == "empirical":
        fallback = empirical_theta(
            params, norm, config.count, config.seed, quantile=config.theta_quantile
        )
        directions, threshold = fallback.directions, fallback.threshold
    else:
        check_pair(params, norm, "sample_theta")

    def block(rng: np.random.Generator, rows: int) -> _BlockResult:
        ys, hits = _frechet_levels(config, constants, rng, rows)
        theta = draw_theta(params, norm, rng, rows) if directions is None else None
        z, ok, jitter_events = _gaussian_rows(config, rng, ys)
        resamples = 0
        while not ok.all():
            bad = np.flatnonzero(~ok)
            resamples += len(bad)
            if resamples > MAX_RESAMPLE_ROUNDS * rows:
                raise FactorizationError(
                    "covariance factorization kept failing after resampling",
                    y=float(ys[bad[0]]),
                    jitter=JITTER_SCALE,
                )
            ys_b, hits_b = _frechet_levels(config, constants, rng, len(bad))
            z_b, ok_b, jitter_b = _gaussian_rows(config, rng, ys_b)
            ys[bad], z[bad], ok[bad] = ys_b, z_b, ok_b
            hits += hits_b
            jitter_events += jitter_b
        values = z if theta is None else ys[:, None] * theta + z
        return _BlockResult(values, hits, jitter_events, resamples, ys)

    blocks = _run(config, block)
    values = np.concatenate([b.values for b in blocks])
    if directions is not None:
        levels = np.concatenate([b.levels for b in blocks if b.levels is not None])
        values = values + levels[:, None] * directions
    meta = _metadata(config, blocks, norming=constants, theta_threshold=threshold)
    logger.info(
        "sample_mrv_normex: n=%d, count=%d, a_n=%g, b_n=%g, y_floor_hits=%d",
        config.n,
        config.count,
        constants.a_n,
        constants.b_n,
        meta.y_floor_hits,
    )
    return SumSample(values, meta)


def sample_method(config: NormexConfig) -> SumSample:
    """Dispatch to the generator named by ``config.method``."""
    match config.method:
        case "DirectSum":
            return sample_sum(config)
        case "CLT":
            return sample_clt(config)
        case "DNormex":
            return sample_d_normex(config)
        case "MRVNormex":
            return sample_mrv_normex(config)


def conditional_gaussian(
    y: float,
    n: int,
    params: FamilyParams,
    norm: NormKind,
    seed: int,
    *,
    size: int | None = None,
    y_floor: float = DEFAULT_Y_FLOOR,
) -> FloatArray:
    """Draw(s) from Gaussian((n-1) mu(y), (n-1) Sigma(y)).

    Returns a d-vector, or a (size, d) array when ``size`` is given.

    Raises:
        ValueError: If y < y_floor or n < 2.
        FactorizationError: If Sigma(y) cannot be factorized even with jitter.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not y >= y_floor:
        raise ValueError(f"y must be >= y_floor={y_floor:g}, got {y}")
    mu, sigma = truncated_moments_batch(params, norm, np.array([y]))
    factors, ok, _ = factorize(sigma, np.array([y]))
    if not ok[0]:
        raise FactorizationError(
            f"covariance at y={y:g} is not positive definite",
            y=y,
            jitter=JITTER_SCALE * float(np.trace(sigma[0])),
        )
    rng = block_generator(seed, "conditional_gaussian", 0)
    rows = 1 if size is None else size
    eps = rng.standard_normal((rows, params.d))
    draws = (n - 1) * mu[0] + math.sqrt(n - 1) * eps @ factors[0].T
    return draws[0] if size is None else draws


def conditional_decomposition_check(
    params: FamilyParams,
    norm: NormKind,
    *,
    n: int,
    y: float,
    band: float,
    rows: int,
    seed: int,
    max_draws: int = 50_000_000,
) -> DecompositionCheck:
    """Check the order-statistic decomposition inside a narrow norm band.

    Tuples of n draws whose maximum norm lies in [y, y + band] are collected.
    Their trimmed sums (all terms but the maximum) are compared per
    component with sums of n - 1 iid draws truncated at norm y, and the max
    direction is correlated with the trimmed sum.

    Raises:
        ValueError: If the band is too rare to collect ``rows`` tuples
            within ``max_draws`` family draws.
    """
    if n < 2 or rows < 2 or band <= 0:
        raise ValueError("need n >= 2, rows >= 2 and band > 0")
    d = params.d
    trimmed: list[FloatArray] = []
    directions: list[FloatArray] = []
    found = drawn = 0
    block = 0
    while found < rows:
        if drawn > max_draws:
            raise ValueError(f"band [{y}, {y + band}] too rare: {found} tuples in {drawn} draws")
        rng = block_generator(seed, "decomposition/band", block)
        block += 1
        tuples = draw_family(params, rng, ENGINE_BLOCK_ROWS * n).reshape(-1, n, d)
        drawn += ENGINE_BLOCK_ROWS * n
        norms = norm_of(tuples, norm)
        idx = np.argmax(norms, axis=1)
        top_norm = norms[np.arange(len(tuples)), idx]
        inside = np.flatnonzero((top_norm >= y) & (top_norm <= y + band))
        for i in inside:
            top = tuples[i, idx[i]]
            trimmed.append(tuples[i].sum(axis=0) - top)
            directions.append(top / top_norm[i])
        found += len(inside)
    trimmed_arr = np.array(trimmed[:rows])
    direction_arr = np.array(directions[:rows])

    reference: list[FloatArray] = []
    needed = rows * (n - 1)
    block = 0
    while sum(len(r) for r in reference) < needed:
        rng = block_generator(seed, "decomposition/truncated", block)
        block += 1
        draws = draw_family(params, rng, 8 * ENGINE_BLOCK_ROWS)
        reference.append(draws[norm_of(draws, norm) <= y])
    truncated = np.concatenate(reference)[:needed].reshape(rows, n - 1, d).sum(axis=1)

    pvalues = np.array(
        [stats.ks_2samp(trimmed_arr[:, k], truncated[:, k]).pvalue for k in range(d)]
    )
    correlations = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            correlations[i, j] = np.corrcoef(direction_arr[:, i], trimmed_arr[:, j])[0, 1]
    logger.debug("conditional_decomposition_check: rows=%d, drawn=%d", rows, drawn)
    return DecompositionCheck(
        ks_pvalues=pvalues,
        correlations=correlations,
        correlation_se=1.0 / math.sqrt(rows),
        rows=rows,
    )
