"""Shared fixtures and helpers for multinormex tests."""

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from multinormex.types import FamilyParams

ALPHA = 2.3


def make_params(variant: str, *, alpha: float = ALPHA, d: int = 3, theta: float | None = None) -> FamilyParams:
    """Build FamilyParams, defaulting Clayton to d = 2 and alpha * theta = 1."""
    if variant == "ClaytonParetoLomax":
        return FamilyParams(
            variant=variant, alpha=alpha, d=2, theta=theta if theta is not None else 1.0 / alpha
        )
    return FamilyParams(variant=variant, alpha=alpha, d=d)  # type: ignore[arg-type]


@pytest.fixture
def mv3() -> FamilyParams:
    """MvParetoLomax, alpha = 2.3, d = 3."""
    return make_params("MvParetoLomax")


@pytest.fixture
def indep3() -> FamilyParams:
    """IndepParetoLomax, alpha = 2.3, d = 3."""
    return make_params("IndepParetoLomax")


@pytest.fixture
def clayton() -> FamilyParams:
    """ClaytonParetoLomax, alpha = 2.3, alpha * theta = 1."""
    return make_params("ClaytonParetoLomax")


@pytest.fixture
def radial3() -> FamilyParams:
    """RadialParetoLomax, alpha = 2.3, d = 3."""
    return make_params("RadialParetoLomax")


def base_config(tmp_path: Path, **overrides: Any) -> dict[str, Any]:
    """Small, fast experiment config dict writing into tmp_path/out."""
    config: dict[str, Any] = {
        "family": {"variant": "MvParetoLomax", "alpha": ALPHA, "d": 2},
        "norm": "L1",
        "n": 8,
        "count": 400,
        "seed": 7,
        "methods": ["DirectSum", "DNormex"],
        "levels": [[0.0, 0.0], [0.3, 0.2], [-0.5, 0.1], [0.95, 0.0]],
        "output_dir": str(tmp_path / "out"),
        "plots": False,
        "anomaly_limits": {"solver_non_converged": 1000},
    }
    config.update(overrides)
    return config


def write_config(tmp_path: Path, name: str = "config.json", **overrides: Any) -> Path:
    """Write :func:`base_config` as JSON and return its path."""
    path = tmp_path / name
    path.write_text(json.dumps(base_config(tmp_path, **overrides)), encoding="utf-8")
    return path


def square_sample() -> np.ndarray:
    """Four points symmetric about the origin."""
    return np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
