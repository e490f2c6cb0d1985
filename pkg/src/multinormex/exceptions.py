"""Custom exceptions for multinormex."""

from __future__ import annotations

from typing import Literal

# Operations that may reject a (family, norm) pair
Operation = Literal[
    "marginal_survival",
    "joint_survival",
    "norm_cdf",
    "norming_constants",
    "sample_theta",
    "truncated_moments",
    "unconditional_moments",
    "second_order_indices",
]


class NormexError(Exception):
    """Base exception for multinormex."""


class UnsupportedPairError(NormexError):
    """Raised when an operation has no closed form for a family/norm pair.

    Attributes:
        variant: Family variant name.
        norm: Norm kind, or None when the operation does not depend on it.
        operation: Name of the rejecting operation.
    """

    def __init__(
        self,
        message: str,
        *,
        variant: str,
        norm: str | None = None,
        operation: Operation,
    ) -> None:
        super().__init__(message)
        self.variant = variant
        self.norm = norm
        self.operation = operation


class MomentConditionError(NormexError):
    """Raised when a moment of the requested order does not exist.

    Attributes:
        alpha: Tail index of the family.
        order: Moment order that would be required (the moment exists iff alpha > order).
    """

    def __init__(self, message: str, *, alpha: float, order: int) -> None:
        super().__init__(message)
        self.alpha = alpha
        self.order = order


class AcceptanceRateError(NormexError):
    """Raised when a rejection estimator keeps too few draws.

    Attributes:
        acceptance_rate: Fraction of draws with norm at most y.
        y: Truncation level.
    """

    def __init__(self, message: str, *, acceptance_rate: float, y: float) -> None:
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.y = y


class FactorizationError(NormexError):
    """Raised when a covariance matrix cannot be factorized even with jitter.

    Attributes:
        y: Truncation level the covariance belongs to.
        jitter: Diagonal jitter that was tried last.
    """

    def __init__(self, message: str, *, y: float, jitter: float) -> None:
        super().__init__(message)
        self.y = y
        self.jitter = jitter


class ConfigError(NormexError):
    """Raised when an experiment configuration is unreadable or invalid.

    Attributes:
        path: Config file path, if the config came from a file.
        details: Validation messages, one per failing field.
    """

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        details: list[str] | None = None,
    ) -> None:
        super().__init__(message)
        self.path = path
        self.details = details or []


class ArtifactError(NormexError):
    """Raised when an input artifact (CSV sample or QQ table) is unusable.

    Attributes:
        path: Offending file.
    """

    def __init__(self, message: str, *, path: str) -> None:
        super().__init__(message)
        self.path = path
