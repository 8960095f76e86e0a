# msmbayes/settings.py
"""
Ambient settings and flat key-value run configuration files.

Only logging reads the environment (LOG_LEVEL, ENVIRONMENT, optionally from a
.env file). Model behaviour is configured through run configuration files and
command-line flags.
"""
import os
from functools import lru_cache
from pathlib import Path
from typing import Dict, Union

from dotenv import dotenv_values, load_dotenv

from msmbayes.errors import ConfigError

ARTIFACT_VERSION = "0.1.0"


class Settings:
    """Process-wide ambient settings."""

    def __init__(self):
        load_dotenv()
        self.environment = os.getenv("ENVIRONMENT", "development")
        self.log_level = os.getenv("LOG_LEVEL", "INFO")

    @property
    def is_production(self) -> bool:
        return self.environment.lower() == "production"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def load_run_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat ``key=value`` run configuration file.

    Keys are the long CLI flag names with underscores (``age_center``,
    ``chains``...). Blank lines and ``#`` comments are ignored.

    Raises:
        ConfigError: if the file is missing or a key has no value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    values = dotenv_values(path)
    missing = sorted(key for key, value in values.items() if value is None or value == "")
    if missing:
        raise ConfigError(f"Config keys without a value in {path}: {', '.join(missing)}")

    return {key.strip().lower().replace("-", "_"): value.strip() for key, value in values.items()}
