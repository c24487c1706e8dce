"""Run configuration: defaults, TOML loading and flat-key overrides.

Every tunable lives in one flat namespace.  ``gamma`` and ``wind_max`` are
both top-level keys even though they belong to different sections; a TOML
file may also group them under ``[agent]``, ``[env]`` and ``[reward]``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Mapping

from .agents import AGENT_KINDS, AgentConfig
from .env import EnvConfig, RewardConfig
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SECTIONS = {"env": EnvConfig, "reward": RewardConfig, "agent": AgentConfig}
RUN_KEYS = ("agent_kind", "seed", "episodes", "out_dir")


@dataclass
class RunConfig:
    agent_kind: str = "qrl"
    seed: int = 0
    episodes: int = 10_000
    out_dir: str = "runs/latest"
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        kind = str(self.agent_kind).lower()
        kind = {"actor_critic": "ac", "actorcritic": "ac", "actor-critic": "ac"}.get(kind, kind)
        if kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.agent_kind!r}; choose from {', '.join(AGENT_KINDS)}")
        self.agent_kind = kind
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        self.seed = int(self.seed)
        if int(self.episodes) < 1:
            raise ConfigError("episodes must be >= 1")
        self.episodes = int(self.episodes)


def _section_of() -> Dict[str, str]:
    owner = {}
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            if f.name in owner or f.name in RUN_KEYS:
                raise AssertionError(f"duplicate config key {f.name}")
            owner[f.name] = section
    return owner


KEY_SECTION = _section_of()


def defaults() -> Dict[str, Any]:
    """Flat ``{key: default}`` for every configurable value."""
    out = {f.name: f.default for f in fields(RunConfig) if f.name in RUN_KEYS}
    for section, cls in SECTIONS.items():
        inst = cls()
        out.update({f.name: getattr(inst, f.name) for f in fields(cls)})
    return out


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} expects a {type(default).__name__}, got {value!r}") from None
    return str(value)


def flatten(mapping: Mapping[str, Any]) -> Dict[str, Any]:
    """Lift ``[env]``/``[reward]``/``[agent]`` tables into the flat namespace."""
    flat: Dict[str, Any] = {}
    for key, value in mapping.items():
        if key in SECTIONS and isinstance(value, Mapping):
            for sub, v in value.items():
                if KEY_SECTION.get(sub) != key:
                    raise ConfigError(f"unknown key {key}.{sub}")
                flat[sub] = v
        else:
            flat[key] = value
    return flat


def build(overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults updated with ``overrides`` (flat or sectioned)."""
    flat = flatten(overrides or {})
    base = defaults()
    unknown = sorted(set(flat) - set(base))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, flat[k], base[k]) for k in flat}
    parts = {s: {} for s in SECTIONS}
    run = {}
    for k, v in values.items():
        if k in RUN_KEYS:
            run[k] = v
        else:
            parts[KEY_SECTION[k]][k] = v
    try:
        return RunConfig(
            **run,
            env=EnvConfig(**parts["env"]),
            reward=RewardConfig(**parts["reward"]),
            agent=AgentConfig(**parts["agent"]),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_toml(path) -> Dict[str, Any]:
    """Parse a TOML file; I/O failures propagate as ``OSError``."""
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def to_dict(cfg: RunConfig) -> Dict[str, Any]:
    """Sectioned plain-data echo of a config, suitable for JSON."""
    out: Dict[str, Any] = {k: getattr(cfg, k) for k in RUN_KEYS}
    for section in SECTIONS:
        part = getattr(cfg, section)
        out[section] = {f.name: getattr(part, f.name) for f in fields(part)}
    return out


def from_dict(doc: Mapping[str, Any]) -> RunConfig:
    return build(doc)


def with_updates(cfg: RunConfig, **updates) -> RunConfig:
    """Copy of ``cfg`` with flat-key changes applied."""
    doc = flatten(to_dict(cfg))
    doc.update(updates)
    return build(doc)


__all__ = ["RunConfig", "build", "defaults", "flatten", "load_toml", "to_dict", "from_dict", "with_updates"]
