"""
Configuration loading: config.yaml + .env overrides -> validated PlannerSettings.
"""

import os
from pathlib import Path
from typing import Optional, Union

import dotenv
import yaml
from pydantic import ValidationError

from .errors import InvalidInputError
from .schemas import PlannerSettings, create_settings_from_dict

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config.yaml"


def load_config(path: Optional[Union[str, Path]] = None) -> PlannerSettings:
    """Load configuration from YAML.

    Resolution order for the file: explicit ``path``, then ``GOVMP_CONFIG``,
    then the repository ``config.yaml``. A missing default file yields defaults.
    ``GOVMP_LOG_LEVEL`` overrides ``logging.level``.
    """
    dotenv.load_dotenv()

    explicit = path or os.getenv("GOVMP_CONFIG")
    config_path = Path(explicit) if explicit else DEFAULT_CONFIG_PATH

    raw = {}
    if config_path.exists():
        with open(config_path, 'r', encoding='utf-8') as f:
            try:
                raw = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise InvalidInputError(f"{config_path}: not valid YAML ({e})") from e
    elif explicit:
        raise InvalidInputError(f"config file not found: {config_path}")

    if not isinstance(raw, dict):
        raise InvalidInputError(f"{config_path}: top level must be a mapping")

    level = os.getenv("GOVMP_LOG_LEVEL")
    if level:
        raw.setdefault('logging', {})['level'] = level

    try:
        return create_settings_from_dict(raw)
    except ValidationError as e:
        raise InvalidInputError(f"{config_path}: {e}") from e
