import os
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from pir_lidar_watch.conditioning import ConditioningConfig
from pir_lidar_watch.detector import DetectorConfig

CONFIG_ENV_VAR: str = "PIR_LIDAR_WATCH_CONFIG"
CONFIG_FILE_NAME: str = "config.json"


class PipelineConfig(BaseModel):
    """Everything that decides which events a trace produces.

    JSON field names mirror the models exactly, omitted fields take their defaults.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    conditioning: ConditioningConfig = Field(default_factory=ConditioningConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)


def get_config_location() -> Path:
    """Get the directory where the default config file is looked for.

    Raises:
        NotImplementedError: The OS is not supported.

    Returns:
        Path: The config directory. It is not created.
    """
    if os.name == "nt":
        # C:\Users\username\AppData\Roaming
        default_config_dir: Path = Path.home() / "AppData" / "Roaming"
        return Path(os.environ.get("APPDATA", default_config_dir)) / "pir_lidar_watch"
    if os.name == "posix":
        # /home/username/.config
        default_config_dir = Path.home() / ".config"
        return Path(os.environ.get("XDG_CONFIG_HOME", default_config_dir)) / "pir_lidar_watch"

    msg: str = f"Unsupported OS: {os.name}, pass the config file with --config instead"
    raise NotImplementedError(msg)


def default_config_path() -> Path | None:
    """Get the config file to use when none was given on the command line.

    The environment variable wins, then config.json in the config directory if it exists.
    """
    if env_path := os.environ.get(CONFIG_ENV_VAR):
        return Path(env_path)

    candidate: Path = get_config_location() / CONFIG_FILE_NAME
    return candidate if candidate.is_file() else None


def load_pipeline_config(path: Path | None = None) -> PipelineConfig:
    """Load the pipeline config.

    Args:
        path: Config file to read. Falls back to default_config_path(), then to the defaults.

    Raises:
        FileNotFoundError: The config file doesn't exist.
        pydantic.ValidationError: The file is not valid, the error names the field.

    Returns:
        The validated config.
    """
    path = path or default_config_path()
    if path is None:
        logger.debug("No config file, using defaults")
        return PipelineConfig()

    if not path.is_file():
        msg: str = f"Config file {path} does not exist"
        raise FileNotFoundError(msg)

    logger.info("Using config {}", path)
    return PipelineConfig.model_validate_json(path.read_text(encoding="utf-8"))
