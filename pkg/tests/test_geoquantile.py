"""Tests for multinormex.geoquantile module."""

import math

import numpy as np
import pytest

from multinormex.geoquantile import (
    EXTREME_LENGTH,
    data_point_subgradient,
    extreme_quantile_ratio,
    gq_gradient,
    gq_objective,
    level_grid,
    min_norm_subgradient,
    solve_gq,
    solve_levels,
    spatial_rank,
)
from multinormex.types import Level, SolverOptions

from .conftest import square_sample


class TestSolveGQ:
    """Tests for the geometric quantile solver."""

    def test_symmetric_square_median(self) -> None:
        """The geometric median of a symmetric square is the origin."""
        result = solve_gq(square_sample(), np.zeros(2))
        assert result.converged
        np.testing.assert_allclose(result.q, [0.0, 0.0], atol=1e-8)
        assert result.gradient_norm <= 1e-8

    def test_univariate_median(self) -> None:
        """For d = 1 and u = 0 the solver returns the sample median."""
        result = solve_gq(np.array([1.0, 2.0, 3.0, 4.0, 100.0]), 0.0)
        assert result.q == pytest.approx([3.0])
        assert result.at_data_point

    @pytest.mark.parametrize("seed", range(20))
    def test_spatial_rank_is_a_fixed_point(self, seed: int) -> None:
        """Solving at the spatial rank of x_j should return x_j."""
        rng = np.random.default_rng(seed)
        sample = rng.standard_normal((50, 2))
        j = int(rng.integers(50))
        result = solve_gq(sample, spatial_rank(sample, j))
        np.testing.assert_allclose(result.q, sample[j], atol=1e-6)
        assert result.converged

    def test_history_is_non_increasing(self) -> None:
        """Recorded objective values should never increase."""
        rng = np.random.default_rng(1)
        sample = rng.standard_normal((300, 3))
        result = solve_gq(sample, np.array([0.5, -0.2, 0.3]))
        history = np.array(result.history)
        assert len(history) >= 2
        assert np.all(np.diff(history) <= 1e-12 * (1.0 + np.abs(history[:-1])))

    def test_objective_not_above_neighbours(self) -> None:
        """The returned point should not be beaten by small perturbations."""
        rng = np.random.default_rng(2)
        sample = rng.standard_normal((200, 2))
        u = np.array([0.7, 0.1])
        result = solve_gq(sample, u)
        for step in (np.array([1e-3, 0.0]), np.array([0.0, -1e-3]), np.array([-1e-3, 1e-3])):
            assert result.objective_value <= gq_objective(sample, u, result.q + step) + 1e-12

    def test_extreme_level_moves_outward(self) -> None:
        """Longer levels along a direction give quantiles further out."""
        rng = np.random.default_rng(3)
        sample = rng.standard_normal((500, 2))
        moderate = solve_gq(sample, np.array([0.5, 0.0])).q[0]
        extreme = solve_gq(sample, np.array([0.95, 0.0])).q[0]
        assert extreme > moderate > 0

    def test_user_start(self) -> None:
        """init='user' should start from q0 and reach the same quantile."""
        opts = SolverOptions(init="user", q0=[5.0, 5.0])
        result = solve_gq(square_sample(), np.zeros(2), opts)
        np.testing.assert_allclose(result.q, [0.0, 0.0], atol=1e-7)

    def test_rejects_wrong_level_length(self) -> None:
        """u must match the sample dimension."""
        with pytest.raises(ValueError, match="length 2"):
            solve_gq(square_sample(), np.zeros(3))

    def test_rejects_unit_level(self) -> None:
        """||u|| >= 1 has no quantile."""
        with pytest.raises(ValueError, match="< 1"):
            solve_gq(square_sample(), np.array([1.0, 0.0]))

    def test_rejects_empty_sample(self) -> None:
        """An empty sample has no quantile."""
        with pytest.raises(ValueError, match="nonempty"):
            solve_gq(np.empty((0, 2)), np.zeros(2))

    def test_solve_levels_independent_of_threads(self) -> None:
        """Parallel solving should return the same quantiles in level order."""
        rng = np.random.default_rng(4)
        sample = rng.standard_normal((200, 2))
        levels = level_grid(2)[::10]
        one = solve_levels(sample, levels, threads=1)
        four = solve_levels(sample, levels, threads=4)
        for a, b in zip(one, four, strict=True):
            np.testing.assert_array_equal(a.q, b.q)
            assert a.level is b.level


class TestEquivariance:
    """Tests for rotation, shift and the univariate reduction."""

    @pytest.mark.parametrize("seed", range(3))
    def test_rotation_and_shift(self, seed: int) -> None:
        """q(A x + a, A u) should equal A q(x, u) + a for orthogonal A."""
        rng = np.random.default_rng(seed)
        sample = rng.standard_normal((60, 3))
        rotation, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        shift = rng.normal(scale=5.0, size=3)
        moved = sample @ rotation.T + shift
        for u in ([0.0, 0.0, 0.0], [0.3, -0.2, 0.1], [-0.5, 0.4, 0.2], [0.0, 0.0, 0.8]):
            level = np.array(u)
            base = solve_gq(sample, level)
            result = solve_gq(moved, rotation @ level)
            assert base.converged and result.converged
            np.testing.assert_allclose(result.q, rotation @ base.q + shift, atol=1e-6)

    @pytest.mark.parametrize("beta", [0.1, 0.3, 0.75, 0.95])
    def test_univariate_level_gives_order_statistic(self, beta: float) -> None:
        """For d = 1, u = 2 beta - 1 gives the order statistic of rank ceil(beta n)."""
        sample = np.random.default_rng(7).standard_normal(101)
        result = solve_gq(sample, np.array([2.0 * beta - 1.0]))
        expected = np.sort(sample)[math.ceil(beta * 101) - 1]
        assert result.q == pytest.approx([expected], abs=1e-6)


class TestGradient:
    """Tests for the objective gradient and subgradient helpers."""

    def test_matches_finite_differences(self) -> None:
        """The analytic gradient should match central differences at 100 random points."""
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(100):
            sample = rng.standard_normal((30, 3))
            u = rng.standard_normal(3)
            u *= rng.uniform(0.0, 0.99) / np.linalg.norm(u)
            q = rng.standard_normal(3)
            numeric = np.array(
                [
                    (gq_objective(sample, u, q + h * e) - gq_objective(sample, u, q - h * e)) / (2 * h)
                    for e in np.eye(3)
                ]
            )
            np.testing.assert_allclose(gq_gradient(sample, u, q), numeric, atol=1e-5)

    def test_epsilon_caps_short_distances(self) -> None:
        """With epsilon, terms closer than epsilon are scaled by 1/epsilon."""
        sample = np.array([[0.0, 0.0], [2.0, 0.0]])
        grad = gq_gradient(sample, np.zeros(2), np.array([0.001, 0.0]), epsilon=0.01)
        assert grad[0] == pytest.approx((0.1 - 1.0) / 2)

    def test_data_point_condition(self) -> None:
        """The median of the square is not a data point; its corner fails the test."""
        smooth_part, radius = data_point_subgradient(square_sample(), np.zeros(2), 0)
        assert radius == pytest.approx(0.25)
        assert smooth_part > radius

    def test_min_norm_subgradient_zero_at_optimum(self) -> None:
        """The subdifferential at the optimum contains zero."""
        assert min_norm_subgradient(square_sample(), np.zeros(2), np.zeros(2)) == pytest.approx(0.0, abs=1e-15)
        assert min_norm_subgradient(square_sample(), np.zeros(2), np.array([0.5, 0.5])) > 0


class TestSpatialRank:
    """Tests for spatial_rank."""

    def test_norm_below_one(self) -> None:
        """Spatial ranks are valid levels."""
        rng = np.random.default_rng(6)
        sample = rng.standard_normal((40, 3))
        for j in range(40):
            assert spatial_rank(sample, j).norm < 1

    def test_center_of_symmetric_set(self) -> None:
        """An added center point of a symmetric set has rank zero."""
        sample = np.vstack([square_sample(), np.zeros((1, 2))])
        np.testing.assert_allclose(spatial_rank(sample, 4).u, [0.0, 0.0], atol=1e-15)

    def test_rejects_single_row(self) -> None:
        """n < 2 has no rank."""
        with pytest.raises(ValueError, match="at least 2 rows"):
            spatial_rank(np.zeros((1, 2)), 0)

    def test_rejects_all_duplicates(self) -> None:
        """Every row equal to x_j leaves nothing to rank against."""
        with pytest.raises(ValueError, match="all rows equal"):
            spatial_rank(np.ones((3, 2)), 1)


class TestLevelGrid:
    """Tests for the standard level grid."""

    @pytest.mark.parametrize(("d", "size", "extreme"), [(3, 235, 104), (2, 145, 64)])
    def test_counts(self, d: int, size: int, extreme: int) -> None:
        """The grid has 1 + 9 x directions levels, 4 lengths of them extreme."""
        grid = level_grid(d)
        assert len(grid) == size
        assert sum(level.is_extreme for level in grid) == extreme
        assert all(level.norm < 1 for level in grid)

    def test_starts_at_zero(self) -> None:
        """The first level is the median."""
        grid = level_grid(3)
        np.testing.assert_array_equal(grid[0].u, np.zeros(3))
        assert not grid[0].is_extreme

    def test_extreme_tag_follows_length(self) -> None:
        """is_extreme is set exactly for lengths above the threshold."""
        for level in level_grid(2):
            assert level.is_extreme == (level.norm > EXTREME_LENGTH + 1e-12)

    def test_d3_directions_are_distinct(self) -> None:
        """The poles should not be repeated in the d = 3 direction set."""
        units = np.array([level.u / level.norm for level in level_grid(3)[1:27]])
        assert len(np.unique(np.round(units, 12), axis=0)) == 26

    def test_rejects_other_dimensions(self) -> None:
        """Only d in {2, 3} has a standard grid."""
        with pytest.raises(ValueError, match="d in"):
            level_grid(4)


class TestExtremeQuantileRatio:
    """Tests for the extreme-quantile diagnostic."""

    def test_limit_for_standard_gaussian(self) -> None:
        """For identity covariance in d = 2 the limit is 1/2."""
        rng = np.random.default_rng(7)
        sample = rng.standard_normal((2000, 2))
        scaled, limit = extreme_quantile_ratio(sample, np.array([1.0, 0.0]), [0.5, 0.8])
        assert scaled.shape == (2,)
        assert np.all(scaled > 0)
        assert limit == pytest.approx(0.5, abs=0.1)

    def test_level_object_accepted(self) -> None:
        """solve_gq accepts Level instances directly."""
        level = Level(np.array([0.2, 0.0]), is_extreme=False)
        assert solve_gq(square_sample(), level).level is level
