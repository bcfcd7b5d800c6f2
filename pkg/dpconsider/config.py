# dpconsider/config.py
"""
Flat key=value run configuration.

Keys carry their section as a prefix (HYPER_, MCMC_, MODEL_, SIM_). Values come
from the config file, then from environment variables with the same name, then
from explicit overrides (CLI flags).
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from dpconsider.errors import ConfigError
from dpconsider.models.hyper import Hyperparams, McmcSettings, RunConfig, SimulationSettings

logger = logging.getLogger(__name__)

SECTIONS = {
    "HYPER_": ("hyper", Hyperparams),
    "MCMC_": ("mcmc", McmcSettings),
    "SIM_": ("sim", SimulationSettings),
}
MODEL_KEYS = {"MODEL_VARIANT": "variant"}


def _known_keys() -> Dict[str, tuple]:
    keys = {}
    for prefix, (section, model) in SECTIONS.items():
        for field in model.model_fields:
            keys[prefix + field.upper()] = (section, field)
    for key, field in MODEL_KEYS.items():
        keys[key] = (None, field)
    return keys


def _coerce(value: Any) -> Any:
    if isinstance(value, str):
        text = value.strip()
        if text == "":
            return None
        if text.lower() in ("true", "yes", "on"):
            return True
        if text.lower() in ("false", "no", "off"):
            return False
        return text
    return value


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    use_environment: bool = True,
) -> RunConfig:
    """Resolve a RunConfig; raises ConfigError on any unreadable or invalid value."""
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        raw.update(dotenv_values(path))

    known = _known_keys()
    for key in list(raw):
        if key not in known:
            if any(key.startswith(p) for p in (*SECTIONS, "MODEL_")):
                raise ConfigError(f"Unknown config key: {key}")
            logger.debug("Ignoring non-dpconsider key %s", key)
            raw.pop(key)

    if use_environment:
        for key in known:
            if key in os.environ:
                raw[key] = os.environ[key]

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"Unknown config key: {key}")
        raw[key] = value

    grouped: Dict[str, Dict[str, Any]] = {"hyper": {}, "mcmc": {}, "sim": {}}
    top: Dict[str, Any] = {}
    for key, value in raw.items():
        section, field = known[key]
        value = _coerce(value)
        if value is None:
            continue
        if section is None:
            top[field] = value
        else:
            grouped[section][field] = value

    try:
        return RunConfig(**grouped, **top)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def dump_config(config: RunConfig) -> str:
    """Render the resolved config as sorted key=value lines (readable by load_config)."""
    lines = []
    for prefix, (section, _model) in SECTIONS.items():
        values = getattr(config, section).model_dump(mode="json")
        for field, value in values.items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{prefix}{field.upper()}={value}")
    lines.append(f"MODEL_VARIANT={config.variant.value}")
    return "\n".join(sorted(lines)) + "\n"
