"""Tests for multinormex.types module."""

import numpy as np
import pytest
from pydantic import ValidationError

from multinormex.types import (
    FamilyParams,
    Level,
    QQRow,
    SolverOptions,
    SumMetadata,
)


class TestFamilyParams:
    """Tests for FamilyParams model."""

    def test_valid_values(self) -> None:
        """FamilyParams should accept a plain family."""
        params = FamilyParams(variant="MvParetoLomax", alpha=2.3, d=3)
        assert params.alpha == 2.3
        assert params.d == 3
        assert params.theta is None

    def test_rejects_nonpositive_alpha(self) -> None:
        """FamilyParams should reject alpha <= 0."""
        with pytest.raises(ValidationError):
            FamilyParams(variant="MvParetoLomax", alpha=0.0, d=3)

    def test_rejects_zero_dimension(self) -> None:
        """FamilyParams should reject d < 1."""
        with pytest.raises(ValidationError):
            FamilyParams(variant="IndepParetoLomax", alpha=2.3, d=0)

    def test_rejects_unknown_variant(self) -> None:
        """FamilyParams should reject variants outside the supported set."""
        with pytest.raises(ValidationError):
            FamilyParams(variant="Gumbel", alpha=2.3, d=2)  # type: ignore[arg-type]

    def test_rejects_extra_fields(self) -> None:
        """FamilyParams should reject unknown keys."""
        with pytest.raises(ValidationError):
            FamilyParams(variant="MvParetoLomax", alpha=2.3, d=3, rho=1.0)  # type: ignore[call-arg]

    def test_clayton_requires_theta(self) -> None:
        """Clayton should require theta."""
        with pytest.raises(ValidationError, match="requires theta"):
            FamilyParams(variant="ClaytonParetoLomax", alpha=2.3, d=2)

    def test_clayton_requires_two_dimensions(self) -> None:
        """Clayton should require d = 2."""
        with pytest.raises(ValidationError, match="d = 2"):
            FamilyParams(variant="ClaytonParetoLomax", alpha=2.3, d=3, theta=0.5)

    def test_theta_rejected_for_other_variants(self) -> None:
        """theta should only be accepted for Clayton."""
        with pytest.raises(ValidationError, match="only valid"):
            FamilyParams(variant="IndepParetoLomax", alpha=2.3, d=2, theta=0.5)

    def test_alpha_theta(self) -> None:
        """alpha_theta should be the product alpha * theta."""
        params = FamilyParams(variant="ClaytonParetoLomax", alpha=2.0, d=2, theta=0.25)
        assert params.alpha_theta == pytest.approx(0.5)

    def test_alpha_theta_without_theta_raises(self) -> None:
        """alpha_theta should raise for non-Clayton families."""
        params = FamilyParams(variant="MvParetoLomax", alpha=2.3, d=3)
        with pytest.raises(ValueError, match="no theta"):
            _ = params.alpha_theta

    def test_is_frozen(self) -> None:
        """FamilyParams should be immutable."""
        params = FamilyParams(variant="MvParetoLomax", alpha=2.3, d=3)
        with pytest.raises(ValidationError):
            params.alpha = 3.0  # type: ignore[misc]


class TestLevel:
    """Tests for Level dataclass."""

    def test_norm(self) -> None:
        """Level.norm should be the Euclidean norm."""
        assert Level(np.array([0.3, 0.4])).norm == pytest.approx(0.5)

    def test_accepts_list_input(self) -> None:
        """Level should convert list input to a float array."""
        level = Level([0.1, 0.2])  # type: ignore[arg-type]
        assert isinstance(level.u, np.ndarray)
        assert level.u.dtype == np.float64

    def test_rejects_unit_norm(self) -> None:
        """Level should reject ||u|| >= 1."""
        with pytest.raises(ValueError, match="level norm must be < 1"):
            Level(np.array([0.6, 0.8]))

    def test_rejects_matrix(self) -> None:
        """Level should reject non-vector input."""
        with pytest.raises(ValueError, match="1-d"):
            Level(np.zeros((2, 2)))

    def test_is_extreme_defaults_false(self) -> None:
        """is_extreme should default to False."""
        assert Level(np.zeros(3)).is_extreme is False


class TestSolverOptions:
    """Tests for SolverOptions model."""

    def test_defaults(self) -> None:
        """SolverOptions should default to the median start and tol 1e-8."""
        opts = SolverOptions()
        assert opts.tol == 1e-8
        assert opts.max_iter == 500
        assert opts.init == "median"
        assert opts.epsilon is None

    def test_user_init_requires_q0(self) -> None:
        """init='user' should require q0."""
        with pytest.raises(ValidationError, match="requires q0"):
            SolverOptions(init="user")

    def test_rejects_nonpositive_tol(self) -> None:
        """tol should be > 0."""
        with pytest.raises(ValidationError):
            SolverOptions(tol=0.0)


class TestSumMetadata:
    """Tests for SumMetadata model."""

    def test_counters_default_to_zero(self) -> None:
        """Anomaly counters should default to 0."""
        meta = SumMetadata(method="DNormex", seed=1, n=52, count=10, y_floor=1e-8)
        assert meta.y_floor_hits == 0
        assert meta.jitter_events == 0
        assert meta.factorization_resamples == 0
        assert meta.norming is None

    def test_rejects_negative_counter(self) -> None:
        """Counters should be nonnegative."""
        with pytest.raises(ValidationError):
            SumMetadata(method="DNormex", seed=1, n=52, count=10, y_floor=1e-8, y_floor_hits=-1)


class TestQQRow:
    """Tests for QQRow dataclass."""

    def test_is_frozen(self) -> None:
        """QQRow should be immutable."""
        row = QQRow(0, 0.0, False, 0, 1.0, 1.1)
        with pytest.raises(AttributeError):
            row.q_ref = 2.0  # type: ignore[misc]
