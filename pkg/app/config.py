import logging
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.schemas import SimConfig, dbm_to_watts


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="ORS_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    solver: str = "CLARABEL"
    max_workers: int = 1
    trace_dir: Optional[str] = None


settings = Settings()


class ConfigurationError(ValueError):
    """Raised for unreadable, malformed or out-of-range experiment configuration."""


# file keys given in dBm and the SimConfig field (watts) they populate
POWER_KEYS = {
    "P_Tr_dBm": "P_Tr",
    "sigma_v2_dBm": "sigma_v2",
    "sigma_z2_dBm": "sigma_z2",
    "P_UL_dBm": "P_UL",
}
LIST_KEYS = {"N_list", "schemes"}


def configure_logging(level: Optional[str] = None) -> None:
    """Install the process-wide log format at the configured level."""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def parse_config(path: Union[str, Path]) -> SimConfig:
    """
    Read a flat ``key = value`` experiment file into a SimConfig.

    Args:
        path (Union[str, Path]): Configuration file; ``#`` starts a comment

    Returns:
        SimConfig: Validated configuration, defaults for every key not given

    Raises:
        ConfigurationError: If the file is missing, a line is malformed, a key is
            unknown or repeated, or a value is out of range
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Configuration file not found: {path}")

    values = {}
    origin = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key or not value:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")

        if key in POWER_KEYS:
            field = POWER_KEYS[key]
            try:
                parsed = dbm_to_watts(float(value))
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: {key} must be a number, got {value!r}")
        elif key in SimConfig.model_fields:
            field = key
            parsed = [item.strip() for item in value.split(",") if item.strip()] if key in LIST_KEYS else value
        else:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")

        if field in values:
            raise ConfigurationError(f"{path}:{lineno}: {field} set twice (first on line {origin[field]})")
        values[field] = parsed
        origin[field] = lineno

    try:
        return SimConfig(**values)
    except ValidationError as e:
        messages = []
        for error in e.errors():
            loc = error["loc"][0] if error["loc"] else None
            where = f"{path}:{origin[loc]}" if loc in origin else str(path)
            label = f"{loc}: " if loc else ""
            messages.append(f"{where}: {label}{error['msg']}")
        raise ConfigurationError("; ".join(messages))
