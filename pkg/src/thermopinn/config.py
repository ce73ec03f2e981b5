"""Experiment configuration: TOML in, validated frozen dataclasses out.

Every section maps onto a dataclass; anything left out takes that
dataclass's default, and unknown keys are errors. Validation failures
name the offending field in dotted form (``thermal.H``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ageing import AgeingConfig
from .bayes import BayesConfig, LikelihoodScales
from .pinn import TrainConfig
from .scenario import LOAD_SHAPES, ProfileParams
from .thermal import ThermalConfig


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic profiles used when ``paths.profiles_csv`` is empty."""

    hours: float = 24.0
    dt: float = 300.0
    load_shape: str = "sinusoidal"
    profile: ProfileParams = field(default_factory=ProfileParams)

    def __post_init__(self):
        if self.hours <= 0 or self.dt <= 0:
            raise ValueError("hours and dt must be > 0")
        if self.load_shape not in LOAD_SHAPES:
            raise ValueError(f"load_shape must be one of {LOAD_SHAPES}")


@dataclass(frozen=True)
class PathsConfig:
    profiles_csv: str = ""
    out_dir: str = "runs/default"


@dataclass(frozen=True)
class GridConfig:
    nx: int = 101
    nt: int = 289

    def __post_init__(self):
        if self.nx < 3 or self.nt < 3:
            raise ValueError("nx and nt must be >= 3")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bayes: BayesConfig = field(default_factory=BayesConfig)
    ageing: AgeingConfig = field(default_factory=AgeingConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def as_dict(self) -> dict:
        return to_dict(self)

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# The experiment seed drives training; a per-section seed would be ambiguous.
_HIDDEN = {TrainConfig: {"seed"}}


def _fields(cls):
    return [f for f in dataclasses.fields(cls) if f.name not in _HIDDEN.get(cls, ())]


def to_dict(obj) -> dict:
    out = {}
    for f in _fields(type(obj)):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of integers, got {value!r}")
        return tuple(value)
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a table")
    known = {f.name: f for f in _fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        names = ", ".join(f"{prefix}{k}" for k in unknown)
        raise ConfigError(f"unknown key(s): {names}")
    base = cls()
    kwargs = {}
    for name, value in data.items():
        where = prefix + name
        default = getattr(base, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where + ".")
        else:
            kwargs[name] = _coerce(value, default, where)
            try:  # check each field on its own first so the error names it
                dataclasses.replace(base, **{name: kwargs[name]})
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: {exc}") from None
    try:
        return dataclasses.replace(base, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None


def parse_config(text: str, base_dir=None, check_paths: bool = True) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    cfg = _build(ExperimentConfig, data, "")
    if cfg.thermal.t_end > cfg.scenario.hours * 3600.0 and not cfg.paths.profiles_csv:
        raise ConfigError("thermal.t_end: exceeds the synthetic scenario horizon scenario.hours")
    if check_paths:
        _check_paths(cfg, Path(base_dir) if base_dir else Path.cwd())
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read, default and validate a TOML experiment file.

    Relative paths inside the file are resolved against the file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        cfg = parse_config(text, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve_paths(cfg, path.parent)


def resolve_paths(cfg: ExperimentConfig, base_dir) -> ExperimentConfig:
    base = Path(base_dir)
    p = cfg.paths
    prof = str(base / p.profiles_csv) if p.profiles_csv and not os.path.isabs(p.profiles_csv) else p.profiles_csv
    out = p.out_dir if os.path.isabs(p.out_dir) else str(base / p.out_dir)
    return dataclasses.replace(cfg, paths=PathsConfig(prof, out))


def _check_paths(cfg: ExperimentConfig, base: Path) -> None:
    if cfg.paths.profiles_csv:
        prof = base / cfg.paths.profiles_csv
        if not prof.is_file():
            raise ConfigError(f"paths.profiles_csv: file not found: {prof}")
    out = base / cfg.paths.out_dir
    probe = out
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise ConfigError(f"paths.out_dir: cannot create {out} ({probe} is not a writable directory)")


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.as_dict())


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GridConfig",
    "LikelihoodScales",
    "PathsConfig",
    "ScenarioConfig",
    "dump_config",
    "load_config",
    "parse_config",
]
