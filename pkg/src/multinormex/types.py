"""Type definitions shared across multinormex modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, model_validator

type FloatArray = npt.NDArray[np.float64]

Variant = Literal[
    "MvParetoLomax",
    "IndepParetoLomax",
    "ClaytonParetoLomax",
    "RadialParetoLomax",
]
NormKind = Literal["L1", "Linf"]
Method = Literal["DirectSum", "CLT", "DNormex", "MRVNormex"]

NORMEX_METHODS: tuple[Method, ...] = ("DNormex", "MRVNormex")


class FamilyParams(BaseModel):
    """Heavy-tailed vector family on the positive orthant.

    Attributes:
        variant: Family name.
        alpha: Tail index; moments of order k exist iff alpha > k.
        d: Dimension.
        theta: Clayton dependence parameter (Clayton variant only).
    """

    model_config = {"extra": "forbid", "frozen": True}

    variant: Variant
    alpha: float = Field(gt=0)
    d: int = Field(ge=1)
    theta: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_clayton(self) -> FamilyParams:
        if self.variant == "ClaytonParetoLomax":
            if self.d != 2:
                raise ValueError("ClaytonParetoLomax requires d = 2")
            if self.theta is None:
                raise ValueError("ClaytonParetoLomax requires theta")
        elif self.theta is not None:
            raise ValueError(f"theta is only valid for ClaytonParetoLomax, not {self.variant}")
        return self

    @property
    def alpha_theta(self) -> float:
        """Product alpha * theta (Clayton only)."""
        if self.theta is None:
            raise ValueError(f"{self.variant} has no theta")
        return self.alpha * self.theta


class NormingConstants(NamedTuple):
    """Scale a_n and shift b_n of the maximum's Frechet approximation."""

    a_n: float
    b_n: float


class SecondOrder(NamedTuple):
    """Second-order indices (rho, beta) entering the MRV-Normex rate."""

    rho: float
    beta: float


class TruncatedMoments(NamedTuple):
    """Mean and covariance of X conditioned on ||X|| <= y."""

    y: float
    mu: FloatArray
    sigma: FloatArray


class OracleMoments(NamedTuple):
    """Rejection Monte Carlo estimate of the truncated moments.

    ``second`` holds the raw second moments E[Y_i Y_j]; the ``*_se`` arrays
    are standard errors of the corresponding entries.
    """

    y: float
    mu: FloatArray
    mu_se: FloatArray
    second: FloatArray
    second_se: FloatArray
    sigma: FloatArray
    accepted: int
    acceptance_rate: float


class EmpiricalTheta(NamedTuple):
    """Directions of draws whose norm exceeds an empirical quantile."""

    directions: FloatArray
    threshold: float
    raw_draws: int


@dataclass(frozen=True, eq=False)
class Level:
    """Point of the open Euclidean unit ball indexing a geometric quantile."""

    u: FloatArray
    is_extreme: bool = False

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.float64)
        if u.ndim != 1:
            raise ValueError("level must be a 1-d vector")
        if not np.linalg.norm(u) < 1.0:
            raise ValueError(f"level norm must be < 1, got {np.linalg.norm(u)!r}")
        object.__setattr__(self, "u", u)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.u))


class GeoQuantile(NamedTuple):
    """Solved empirical geometric quantile for one level."""

    level: Level
    q: FloatArray
    objective_value: float
    gradient_norm: float
    iterations: int
    converged: bool
    at_data_point: bool
    history: tuple[float, ...] = ()


class SolverOptions(BaseModel):
    """Options of the geometric-quantile solver.

    Attributes:
        tol: Gradient tolerance, applied to ||grad||_2 / (1 + ||u||).
        max_iter: Maximum quasi-Newton iterations.
        epsilon: Smoothing radius for coincident points. None means
            1e-9 times the data scale.
        init: Initial point rule.
        q0: Initial point when ``init`` is "user".
    """

    model_config = {"extra": "forbid", "frozen": True}

    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=500, ge=1)
    epsilon: float | None = Field(default=None, gt=0)
    init: Literal["median", "mean", "user"] = "median"
    q0: tuple[float, ...] | None = None

    @model_validator(mode="after")
    def _check_user_start(self) -> SolverOptions:
        if self.init == "user" and self.q0 is None:
            raise ValueError("init='user' requires q0")
        return self


class SumMetadata(BaseModel):
    """Provenance and anomaly counters of a generated sum sample."""

    model_config = {"extra": "forbid"}

    method: Method
    seed: int
    n: int
    count: int
    norming: NormingConstants | None = None
    y_floor: float
    y_floor_hits: int = Field(default=0, ge=0)
    jitter_events: int = Field(default=0, ge=0)
    factorization_resamples: int = Field(default=0, ge=0)
    theta_threshold: float | None = None


@dataclass
class SumSample:
    """Draws of the n-term sum together with their metadata."""

    values: FloatArray
    metadata: SumMetadata


@dataclass(frozen=True)
class QQRow:
    """One (level, component) pair of a QQ table."""

    level_index: int
    level_norm: float
    is_extreme: bool
    component: int
    q_ref: float
    q_cmp: float


@dataclass
class QQTable:
    """Paired geometric quantiles of a reference and a compared sample."""

    rows: list[QQRow]
    ref_non_converged: int = 0
    cmp_non_converged: int = 0


class LineDeviation(NamedTuple):
    """Distance of QQ points from the identity line."""

    max_abs: float
    mean_abs: float
    max_rel: float


class DeviationSummary(NamedTuple):
    """Line deviations overall and split by level length."""

    overall: LineDeviation
    moderate: LineDeviation | None
    extreme: LineDeviation | None


class RatePoint(NamedTuple):
    n: int
    distance: float


class MethodRate(NamedTuple):
    """Distances to the direct sum over n and the fitted log-log slope."""

    method: Method
    points: tuple[RatePoint, ...]
    slope: float
    slope_se: float
    theoretical: float | None


@dataclass
class RateReport:
    """Convergence-rate experiment result."""

    methods: dict[Method, MethodRate]
    noise_floor: tuple[RatePoint, ...] = field(default_factory=tuple)
