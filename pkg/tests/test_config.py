"""Tests for multinormex.config module."""

from pathlib import Path

import pytest

from multinormex.config import DEFAULT_MOMENT_LEVELS, ExperimentConfig, load_config
from multinormex.exceptions import ConfigError

from .conftest import base_config, write_config


class TestExperimentConfig:
    """Tests for ExperimentConfig validation."""

    def test_defaults(self, tmp_path: Path) -> None:
        """Unset fields take the documented defaults."""
        raw = base_config(tmp_path)
        del raw["levels"], raw["plots"], raw["anomaly_limits"]
        config = ExperimentConfig.model_validate(raw)
        assert config.levels == "paper-grid"
        assert config.plots is True
        assert config.grid_per_dim == 99
        assert config.checks == []
        assert config.moment_levels == list(DEFAULT_MOMENT_LEVELS)
        assert config.anomaly_limits.y_floor_hits == 0

    def test_rejects_unknown_key(self, tmp_path: Path) -> None:
        """Typos in keys should be rejected."""
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate(base_config(tmp_path, cuont=10))

    @pytest.mark.parametrize(
        ("overrides", "message"),
        [
            ({"methods": ["DNormex", "DNormex"]}, "unique"),
            ({"methods": []}, "at least 1"),
            ({"n": 1}, "n >= 2"),
            ({"levels": [[0.0, 0.0, 0.0]]}, "norm < 1"),
            ({"levels": [[0.8, 0.8]]}, "norm < 1"),
            ({"rate_n_list": [10, 5, 100]}, "strictly increasing"),
            ({"rate_n_list": [1, 10]}, ">= 2"),
            ({"rate_n_list": [10, 50]}, "decade"),
            ({"checks": ["normex_beats_clt"]}, "needs CLT"),
            ({"moment_levels": [1.0, 0.0]}, "moment_levels"),
            ({"oracle_draws": 100}, "10000"),
            ({"seed": 2**64}, "seed"),
        ],
    )
    def test_rejects_invalid(self, tmp_path: Path, overrides: dict[str, object], message: str) -> None:
        """Each precondition should be enforced with a readable message."""
        with pytest.raises(ValueError, match=message):
            ExperimentConfig.model_validate(base_config(tmp_path, **overrides))

    def test_clt_requires_finite_variance(self, tmp_path: Path) -> None:
        """CLT with alpha <= 2 is refused before any sampling."""
        raw = base_config(
            tmp_path,
            family={"variant": "MvParetoLomax", "alpha": 1.5, "d": 2},
            methods=["DirectSum", "CLT"],
        )
        with pytest.raises(ValueError, match="finite variance"):
            ExperimentConfig.model_validate(raw)

    def test_unsupported_pair_needs_direct_sum_only(self, tmp_path: Path) -> None:
        """Pairs without truncated moments may only run DirectSum."""
        family = {"variant": "IndepParetoLomax", "alpha": 2.3, "d": 2}
        with pytest.raises(ValueError, match="not available"):
            ExperimentConfig.model_validate(base_config(tmp_path, family=family))
        config = ExperimentConfig.model_validate(base_config(tmp_path, family=family, methods=["DirectSum"]))
        assert config.methods == ["DirectSum"]

    def test_paper_grid_needs_two_or_three_dimensions(self, tmp_path: Path) -> None:
        """The standard grid exists only for d in {2, 3}."""
        raw = base_config(
            tmp_path,
            family={"variant": "MvParetoLomax", "alpha": 2.3, "d": 4},
            levels="paper-grid",
        )
        with pytest.raises(ValueError, match="paper-grid"):
            ExperimentConfig.model_validate(raw)

    def test_accepts_full_check_setup(self, tmp_path: Path) -> None:
        """Both checks validate when CLT and a Normex method are present."""
        config = ExperimentConfig.model_validate(
            base_config(
                tmp_path,
                methods=["DirectSum", "CLT", "DNormex", "MRVNormex"],
                checks=["moments_oracle", "normex_beats_clt"],
                rate_n_list=[4, 40],
            )
        )
        assert config.checks == ["moments_oracle", "normex_beats_clt"]


class TestLoadConfig:
    """Tests for load_config."""

    def test_reads_json(self, tmp_path: Path) -> None:
        """A valid file loads into an ExperimentConfig."""
        config = load_config(write_config(tmp_path))
        assert config.family.alpha == 2.3
        assert config.methods == ["DirectSum", "DNormex"]
        assert config.levels == [[0.0, 0.0], [0.3, 0.2], [-0.5, 0.1], [0.95, 0.0]]

    def test_overrides_replace_file_values(self, tmp_path: Path) -> None:
        """Non-None overrides win; None overrides are ignored."""
        config = load_config(write_config(tmp_path), seed=99, count=None, output_dir="elsewhere")
        assert config.seed == 99
        assert config.count == 400
        assert config.output_dir == "elsewhere"

    def test_overrides_are_validated(self, tmp_path: Path) -> None:
        """An invalid override is reported like an invalid file."""
        with pytest.raises(ConfigError, match="threads"):
            load_config(write_config(tmp_path), threads=0)

    def test_missing_file(self, tmp_path: Path) -> None:
        """A missing file raises ConfigError carrying the path."""
        with pytest.raises(ConfigError, match="cannot read config") as info:
            load_config(tmp_path / "absent.json")
        assert info.value.path == str(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path: Path) -> None:
        """Malformed JSON raises ConfigError."""
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_non_object(self, tmp_path: Path) -> None:
        """A JSON array is not a config."""
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(path)

    def test_validation_details(self, tmp_path: Path) -> None:
        """Validation failures list one detail per failing field."""
        path = write_config(
            tmp_path,
            family={"variant": "MvParetoLomax", "alpha": 1.5, "d": 2},
            methods=["CLT"],
        )
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert info.value.details
        assert any("CLT requires finite variance (alpha > 2)" in item for item in info.value.details)
