"""Layered run configuration: defaults < config file < command-line flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .collaboration import CollabConfig
from .errors import ConfigError
from .evaluation import RANDOM_MODES
from .recruitment import RecruitmentConfig


@dataclass(frozen=True)
class RunConfig:
    pool: str | None = None
    table: str | None = None
    corpus: str | None = None
    schema: str = "canonical"
    labeler: str | None = None
    recruitment: RecruitmentConfig = field(default_factory=RecruitmentConfig)
    collaboration: CollabConfig = field(default_factory=CollabConfig)
    max_concurrency: int = 8
    out: str | None = None
    seed: int = 0
    random_mode: str = "per_query"

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.random_mode not in RANDOM_MODES:
            raise ConfigError(f"random_mode must be one of {RANDOM_MODES}")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def default_dict() -> dict[str, Any]:
    return RunConfig().to_json()


def _merge(base: dict[str, Any], over: Mapping[str, Any], where: str) -> None:
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, Mapping):
                raise ConfigError(f"config key {where}{k!r} must be an object")
            _merge(base[k], v, f"{where}{k}.")
        else:
            base[k] = v


def from_dict(obj: Mapping[str, Any]) -> RunConfig:
    merged = default_dict()
    _merge(merged, obj, "")
    try:
        return RunConfig(
            **{k: v for k, v in merged.items() if k not in ("recruitment", "collaboration")},
            recruitment=RecruitmentConfig(**merged["recruitment"]),
            collaboration=CollabConfig(**merged["collaboration"]),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from None


def load_config_file(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    try:
        obj = json.loads(p.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return obj


def resolve(file_values: Mapping[str, Any] | None, overrides: Mapping[str, Any]) -> RunConfig:
    """Apply a config file and then dotted-key flag overrides (``None`` = unset)."""
    merged = default_dict()
    if file_values:
        _merge(merged, file_values, "")
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = merged
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = value
    return from_dict(merged)
