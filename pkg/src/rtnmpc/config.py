"""Loading of the TOML configuration files shipped with the package."""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigurationError

CONFIG_NAMES = ("quad", "ocp_quad", "ocp_double_integrator", "sim", "bench", "train", "collect")


def default_config_path(name):
    if name not in CONFIG_NAMES:
        raise ConfigurationError(f"unknown config {name!r}; expected one of {CONFIG_NAMES}")
    return Path(str(resources.files("rtnmpc") / "configs" / f"{name}.toml"))


def load_toml(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    with path.open("rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc


def load_default(name):
    return load_toml(default_config_path(name))


def merge(base, overrides):
    """Recursively merge ``overrides`` into a copy of ``base``; overrides win."""
    out = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def section(cfg, name):
    try:
        return cfg[name]
    except KeyError:
        raise ConfigurationError(f"config is missing the [{name}] table") from None
