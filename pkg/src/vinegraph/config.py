"""Pipeline configuration: YAML/JSON file, validated, with dotted overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .graph_builder import ConnectionParams
from .render import RenderOptions
from .synthetic import DegradationSpec, GenerationError, VineSpec

ENV_VAR = "VINEGRAPH_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PruningOptions:
    final_selection: bool = True


@dataclass(frozen=True)
class EvalOptions:
    match_threshold: float = 3.0
    strict_min_precision: float = 1.0
    strict_min_recall: float = 1.0


@dataclass(frozen=True)
class IOOptions:
    image: str | None = None
    output: str | None = None


@dataclass
class PipelineConfig:
    connection: ConnectionParams = field(default_factory=ConnectionParams)
    pruning: PruningOptions = field(default_factory=PruningOptions)
    render: RenderOptions = field(default_factory=RenderOptions)
    generator: VineSpec = field(default_factory=VineSpec)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    evaluation: EvalOptions = field(default_factory=EvalOptions)
    io: IOOptions = field(default_factory=IOOptions)


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(PipelineConfig)}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(config: PipelineConfig) -> dict:
    return {name: _plain(dataclasses.asdict(getattr(config, name))) for name in SECTIONS}


def _coerce(cls, values: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in values.items():
        default = getattr(defaults, name)
        if isinstance(default, tuple) and isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{section}.{name} must be true or false, got {value!r}")
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{name} must be an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{name} must be a number, got {value!r}")
            value = float(value)
        kwargs[name] = value
    try:
        return dataclasses.replace(defaults, **kwargs)
    except (TypeError, ValueError, GenerationError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def config_from_dict(data: dict | None) -> PipelineConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {}
    for name, factory in SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be a mapping")
        parts[name] = _coerce(type(factory()), section, name)
    return PipelineConfig(**parts)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as YAML scalars."""
    data = {k: dict(v or {}) for k, v in data.items()}
    for item in overrides:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad override value {raw!r}: {exc}") from None
        data.setdefault(section, {})[name] = value
    return data


def load_config(path: str | os.PathLike | None = None, overrides: list[str] = ()) -> PipelineConfig:
    """Load a config file (or $VINEGRAPH_CONFIG, or defaults) and apply overrides."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    data: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: configuration must be a mapping")
    return config_from_dict(apply_overrides(data, list(overrides)))


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=True, default_flow_style=None)
