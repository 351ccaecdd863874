"""
Configuration management.

Application defaults come from ``conf.yml``; experiment run files are read with
:func:`load_exact_yaml` so that decimal literals survive a load/dump cycle unchanged.
"""

import copy
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, Optional, Union
from functools import lru_cache

import yaml

from core.exceptions import ConfigurationError

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "conf.yml"


class ConfigSection:
    """Read-only attribute view of one mapping in ``conf.yml``.

    Nested mappings come back as sections; missing keys raise ``AttributeError`` so
    ``getattr(section, key, default)`` works for optional knobs.
    """

    __slots__ = ("_data",)

    def __init__(self, data: Optional[Dict[str, Any]] = None):
        object.__setattr__(self, "_data", dict(data or {}))

    def __getattr__(self, key: str) -> Any:
        if key.startswith("__") or key == "_data":
            raise AttributeError(key)
        try:
            value = self._data[key]
        except KeyError:
            raise AttributeError(key) from None
        return ConfigSection(value) if isinstance(value, dict) else value

    def __setattr__(self, key: str, value: Any):
        raise AttributeError("Configuration sections are read-only; use Settings.with_overrides")

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def __repr__(self):
        return f"ConfigSection({self._data!r})"

    def get(self, key: str, default: Any = None) -> Any:
        return getattr(self, key, default)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._data)


class _ExactLoader(yaml.SafeLoader):
    """Safe loader that keeps float literals as Decimal."""


def _construct_decimal(loader: yaml.SafeLoader, node: yaml.ScalarNode) -> Decimal:
    text = loader.construct_scalar(node).replace("_", "")
    lowered = text.lower()
    if lowered in (".inf", "+.inf"):
        return Decimal("Infinity")
    if lowered == "-.inf":
        return Decimal("-Infinity")
    if lowered == ".nan":
        return Decimal("NaN")
    return Decimal(text)


_ExactLoader.add_constructor("tag:yaml.org,2002:float", _construct_decimal)


class _ExactDumper(yaml.SafeDumper):
    """Safe dumper that writes Decimal values back as plain numeric literals."""


def _represent_decimal(dumper: yaml.SafeDumper, value: Decimal) -> yaml.ScalarNode:
    if value.is_nan():
        text = ".nan"
    elif value.is_infinite():
        text = ".inf" if value > 0 else "-.inf"
    else:
        # literals the implicit resolver reads as int or str get an explicit !!float tag
        text = str(value)
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_ExactDumper.add_representer(Decimal, _represent_decimal)


def load_exact_yaml(source: Union[str, Path]) -> Any:
    """Load a YAML document from a path or a string, keeping decimals exact."""
    try:
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
            with open(source, "r", encoding="utf-8") as f:
                return yaml.load(f, Loader=_ExactLoader)
        return yaml.load(source, Loader=_ExactLoader)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid YAML: {str(e)}", error_code="yaml_error")


def dump_exact_yaml(data: Any) -> str:
    """Dump data to YAML, writing Decimal values as their exact literals."""
    return yaml.dump(data, Dumper=_ExactDumper, sort_keys=False, allow_unicode=True)


class Settings:
    """Application settings loaded from ``conf.yml``."""

    def __init__(self, config_data: Optional[Dict[str, Any]] = None):
        self._config_data: Dict[str, Any] = dict(config_data or {})

    @classmethod
    def load_from_yaml(cls, config_path: Union[str, Path] = DEFAULT_CONFIG) -> "Settings":
        """Load configuration from a YAML file."""
        config_file = Path(config_path)
        if not config_file.is_file():
            raise ConfigurationError(
                f"Configuration file not found: {config_path}",
                error_code="config_missing",
            )

        try:
            config_data = yaml.safe_load(config_file.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {config_path}: {e}", error_code="yaml_error")

        if config_data is not None and not isinstance(config_data, dict):
            raise ConfigurationError(f"Configuration root must be a mapping: {config_path}")

        return cls(config_data)

    def section(self, name: str) -> ConfigSection:
        """Return a named section, empty when absent."""
        data = self._config_data.get(name)
        return ConfigSection(data if isinstance(data, dict) else None)

    def with_overrides(self, overrides: Dict[str, Dict[str, Any]]) -> "Settings":
        """Return a copy with selected section keys replaced."""
        return Settings(_deep_merge(self._config_data, overrides))

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._config_data)


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    result = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result


@lru_cache()
def get_settings(config_path: Optional[str] = None) -> Settings:
    """Cached settings; defaults to the ``conf.yml`` shipped next to the packages."""
    return Settings.load_from_yaml(config_path or DEFAULT_CONFIG)
