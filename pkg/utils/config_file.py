"""
Flat key = value simulation config files
"""

from pathlib import Path
from typing import Dict, Union

from pydantic import ValidationError

from models.errors import ConfigurationError
from models.schemas import SimConfig
from utils.logger import get_logger

logger = get_logger(__name__)

_LIST_KEYS = {"snapshot_times"}
_NONE_WORDS = {"none", "null", ""}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, object]:
    """
    Raw key/value pairs of a config file.

    One `key = value` per line; `#` starts a comment; blank lines are skipped.
    Keys must be SimConfig field names and may appear once.
    """
    known = set(SimConfig.model_fields)
    raw: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"{source}:{lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key '{key}'")
        if key in _LIST_KEYS:
            raw[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif value.lower() in _NONE_WORDS:
            raw[key] = None
        else:
            raw[key] = value
    return raw


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    """Read and validate a SimConfig; validation errors propagate as pydantic.ValidationError"""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    raw = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
    try:
        config = SimConfig.model_validate(raw)
    except ValidationError:
        logger.warning(f"Invalid simulation config in {path}")
        raise
    logger.debug(f"Loaded simulation config from {path}: {config.model_dump()}")
    return config
