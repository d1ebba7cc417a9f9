"""Service configuration with defaults, a JSON config file, and
environment overrides.

Precedence is defaults < file < environment < explicit overrides (CLI
flags). The label map is the ordered list of wire labels, one per
classifier output index; in checkpoint mode its length must match the
model head dimension, which is verified after the checkpoint loads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from typing import Mapping, Optional

MODES = ("toy", "checkpoint")

ENV_PREFIX = "MODEL_SERVICE_"


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the service needs to run.

    Toy mode classifies by watched-identifier presence; checkpoint mode
    wraps a sequence-classification checkpoint (hub id or local path)
    with a fixed truncation length and deterministic eval-mode inference.
    """

    mode: str = "toy"
    checkpoint: Optional[str] = None
    device: str = "cpu"
    max_batch: int = 32
    max_length: int = 512
    host: str = "127.0.0.1"
    port: int = 8100
    label_map: tuple[int, ...] = (0, 1)
    watch: frozenset[str] = frozenset()
    hit_label: int = 1
    miss_label: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "checkpoint" and not self.checkpoint:
            raise ConfigError("checkpoint mode requires a checkpoint id or path")
        if not isinstance(self.max_batch, int) or self.max_batch < 1:
            raise ConfigError("max_batch must be a positive integer")
        if not isinstance(self.max_length, int) or self.max_length < 1:
            raise ConfigError("max_length must be a positive integer")
        if not isinstance(self.port, int) or not 1 <= self.port <= 65535:
            raise ConfigError("port must be an integer in [1, 65535]")
        object.__setattr__(self, "label_map", tuple(self.label_map))
        if not self.label_map:
            raise ConfigError("label_map must be nonempty")
        for label in self.label_map:
            if isinstance(label, bool) or not isinstance(label, int):
                raise ConfigError("label_map entries must be integers")
        if len(set(self.label_map)) != len(self.label_map):
            raise ConfigError("label_map entries must be distinct")
        object.__setattr__(self, "watch", frozenset(self.watch))
        for name in self.watch:
            if not isinstance(name, str) or not name:
                raise ConfigError("watch entries must be nonempty strings")
        for key in ("hit_label", "miss_label"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer")


_FIELD_NAMES = tuple(f.name for f in fields(ServiceConfig))

# Per-field parsers for string-valued sources (env vars, CLI flags).
_STRING_FIELDS = ("mode", "checkpoint", "device", "host")
_INT_FIELDS = ("max_batch", "max_length", "port", "hit_label", "miss_label")


def _parse_env_value(key: str, raw: str):
    if key in _STRING_FIELDS:
        return raw
    if key in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key == "label_map":
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            raise ConfigError(f"label_map must be a JSON list, got {raw!r}") from None
        if not isinstance(value, list):
            raise ConfigError("label_map must be a JSON list")
        return value
    if key == "watch":
        return frozenset(name for name in raw.split("|") if name)
    raise ConfigError(f"unknown configuration key {key!r}")


def _file_values(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(_FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    if "watch" in data:
        if not isinstance(data["watch"], list):
            raise ConfigError("watch in a config file must be a list of names")
        data["watch"] = frozenset(data["watch"])
    if "label_map" in data:
        if not isinstance(data["label_map"], list):
            raise ConfigError("label_map in a config file must be a list")
        data["label_map"] = tuple(data["label_map"])
    return data


def load_config(
    path: Optional[str] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, object]] = None,
) -> ServiceConfig:
    """Build a ServiceConfig from a file, the environment, and overrides.

    Environment variables are MODEL_SERVICE_<FIELD> (upper case), e.g.
    MODEL_SERVICE_PORT=9000 or MODEL_SERVICE_WATCH="getenv|strcpy".
    Overrides (CLI flags) win over everything and take typed values.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        values.update(_file_values(path))
    for key in _FIELD_NAMES:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _parse_env_value(key, raw)
    for key, value in (overrides or {}).items():
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown configuration key {key!r}")
        if value is not None:
            values[key] = value
    try:
        return ServiceConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: ServiceConfig) -> dict:
    """JSON-ready view of the effective configuration."""
    return {
        "mode": config.mode,
        "checkpoint": config.checkpoint,
        "device": config.device,
        "max_batch": config.max_batch,
        "max_length": config.max_length,
        "host": config.host,
        "port": config.port,
        "label_map": list(config.label_map),
        "watch": sorted(config.watch),
        "hit_label": config.hit_label,
        "miss_label": config.miss_label,
    }
