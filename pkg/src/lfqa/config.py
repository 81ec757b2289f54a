"""Run configuration: defaults < YAML file < environment < command-line flags."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError

ENV_URL = "THINKER_LLM_URL"
ENV_KEY = "THINKER_LLM_KEY"

JUDGE_MODES = ("string", "llm")
FOCUS_MODES = ("inline", "explicit")


@dataclass(frozen=True)
class Paths:
    corpus: str | None = None
    index: str | None = None
    dataset: str | None = None
    fixtures: str | None = None
    output: str | None = None


@dataclass(frozen=True)
class RunConfig:
    llm_url: str | None = None
    llm_model: str = "default"
    # name of the env var holding the key; the key itself never lands in traces
    llm_key_env: str = ENV_KEY
    temperature: float = 0.0
    seed: int | None = 0
    tau: float = 0.8
    max_turns: int = 3
    top_k: int = 3
    parallelism: int = 4
    focus_mode: str = "inline"
    judge_mode: str = "string"
    decompose_retries: int = 2
    max_tokens: int = 1024
    record_timings: bool = False
    paths: Paths = field(default_factory=Paths)

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.max_turns < 1:
            raise ConfigError("max_turns must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.decompose_retries < 0:
            raise ConfigError("decompose_retries must be >= 0")
        if self.focus_mode not in FOCUS_MODES:
            raise ConfigError(f"focus_mode must be one of {FOCUS_MODES}")
        if self.judge_mode not in JUDGE_MODES:
            raise ConfigError(f"judge_mode must be one of {JUDGE_MODES}")

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def snapshot(self) -> dict[str, Any]:
        """Settings that influence answers. Excludes paths, secrets and parallelism."""
        return {
            "llm_model": self.llm_model,
            "temperature": self.temperature,
            "seed": self.seed,
            "tau": self.tau,
            "max_turns": self.max_turns,
            "top_k": self.top_k,
            "focus_mode": self.focus_mode,
            "decompose_retries": self.decompose_retries,
            "max_tokens": self.max_tokens,
        }

    def api_key(self) -> str | None:
        return os.environ.get(self.llm_key_env)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)} - {"paths"}
_PATH_FIELDS = {f.name for f in dataclasses.fields(Paths)}


def _merge(base: RunConfig, values: Mapping[str, Any]) -> RunConfig:
    top = {}
    paths = dataclasses.asdict(base.paths)
    for key, value in values.items():
        if value is None:
            continue
        if key == "paths":
            if not isinstance(value, Mapping):
                raise ConfigError("paths must be a mapping")
            unknown = set(value) - _PATH_FIELDS
            if unknown:
                raise ConfigError(f"unknown path keys: {sorted(unknown)}")
            paths.update({k: v for k, v in value.items() if v is not None})
        elif key in _PATH_FIELDS:
            paths[key] = value
        elif key in _FIELDS:
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return dataclasses.replace(base, paths=Paths(**paths), **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None,
                env: Mapping[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, data)
    env = os.environ if env is None else env
    if env.get(ENV_URL):
        cfg = _merge(cfg, {"llm_url": env[ENV_URL]})
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg
