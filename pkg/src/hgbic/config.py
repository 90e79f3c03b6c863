"""Configuration loading.

Simulation configs are flat key-value files (``key = value`` lines, or a flat JSON object
when the file ends in ``.json``). Keys map one-to-one to SimulationConfig fields; Lasso path
settings take a ``path.`` prefix, e.g. ``path.max_support = 50``. Lists are comma-separated.

Defaults for the worker count and seed come from ``~/.config/hgbic/config.json`` and are
overridden by the ``HGBIC_WORKERS`` / ``HGBIC_SEED`` environment variables; command-line flags
override both.
"""

import json
import os
from pathlib import Path

from pydantic import ValidationError

from hgbic.errors import ConfigError
from hgbic.models import SimulationConfig

PATH_PREFIX = "path."

ENV_MAPPING = {
    "HGBIC_WORKERS": "workers",
    "HGBIC_SEED": "seed",
}


def default_config_path() -> Path:
    return Path.home() / ".config" / "hgbic" / "config.json"


def load_defaults(config_path: Path | None = None) -> dict:
    config = {}
    config_path = config_path or default_config_path()
    if config_path.exists():
        try:
            with open(config_path) as f:
                config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Could not read {config_path}: {e}") from e

    # Environment variables override config file
    for env_var, config_key in ENV_MAPPING.items():
        if value := os.environ.get(env_var):
            try:
                config[config_key] = int(value)
            except ValueError:
                raise ConfigError(f"{env_var} must be an integer, got '{value}'") from None

    return config


def parse_key_values(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key = key.strip()
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        entries[key] = value.strip()
    return entries


def read_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Could not read config file {path}: {e}") from e
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a JSON object")
        return data
    return parse_key_values(text)


def simulation_config_from_mapping(data: dict) -> SimulationConfig:
    fields = {}
    path_fields = dict(data.get("path_config") or {})
    for key, value in data.items():
        if key == "path_config":
            continue
        if key.startswith(PATH_PREFIX):
            path_fields[key.removeprefix(PATH_PREFIX)] = value
        else:
            fields[key] = value
    if path_fields:
        fields["path_config"] = {key: (None if value in ("", "none", "None") else value) for key, value in path_fields.items()}
    try:
        return SimulationConfig(**fields)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid simulation config: {problems}") from e


def load_simulation_config(path: Path, seed: int | None = None) -> SimulationConfig:
    data = read_config_file(path)
    if seed is not None:
        data = {**data, "base_seed": seed}
    return simulation_config_from_mapping(data)
