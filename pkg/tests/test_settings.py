import json
import os
from pathlib import Path

import pytest
from pydantic import ValidationError

from pir_lidar_watch.settings import CONFIG_ENV_VAR, PipelineConfig, default_config_path, load_pipeline_config


def test_defaults_without_a_config_file(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test that the defaults are used when no config file exists anywhere."""
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))

    assert load_pipeline_config() == PipelineConfig()


def test_partial_config_keeps_other_defaults(tmp_path: Path) -> None:
    """Test that omitted fields take their defaults."""
    path: Path = tmp_path / "config.json"
    path.write_text(json.dumps({"detector": {"warning_ms": 120_000}}), encoding="utf-8")

    config = load_pipeline_config(path)

    assert config.detector.warning_ms == 120_000  # noqa: PLR2004
    assert config.detector.alert_ms == 600_000  # noqa: PLR2004
    assert config.conditioning.median_window_samples == 5  # noqa: PLR2004


def test_invalid_config_names_the_field(tmp_path: Path) -> None:
    """Test that a config breaking the band ordering is refused."""
    path: Path = tmp_path / "config.json"
    path.write_text(json.dumps({"detector": {"seated_max_cm": 140}}), encoding="utf-8")

    with pytest.raises(ValidationError, match="seated_max_cm"):
        load_pipeline_config(path)


def test_unknown_field_is_refused(tmp_path: Path) -> None:
    """Test that a typo in a field name is an error, not silently ignored."""
    path: Path = tmp_path / "config.json"
    path.write_text(json.dumps({"detector": {"warnng_ms": 1}}), encoding="utf-8")

    with pytest.raises(ValidationError, match="warnng_ms"):
        load_pipeline_config(path)


def test_missing_config_file(tmp_path: Path) -> None:
    """Test that an explicitly given config file must exist."""
    with pytest.raises(FileNotFoundError):
        load_pipeline_config(tmp_path / "nope.json")


@pytest.mark.skipif(os.name != "posix", reason="XDG config location")
def test_config_location(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test that the environment variable wins over the config directory."""
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
    assert default_config_path() is None

    in_config_dir: Path = tmp_path / "pir_lidar_watch" / "config.json"
    in_config_dir.parent.mkdir()
    in_config_dir.write_text("{}", encoding="utf-8")
    assert default_config_path() == in_config_dir

    monkeypatch.setenv(CONFIG_ENV_VAR, str(tmp_path / "other.json"))
    assert default_config_path() == tmp_path / "other.json"
