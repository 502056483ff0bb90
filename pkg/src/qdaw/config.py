"""Workbench configuration, loaded from a YAML file.

Schema (every key optional)::

    seed: 0                       # global seed
    workers: 1                    # benchmark worker processes
    shots: 10000
    optimizer: {tolerance: 0.01, max_iters: 150}
    ws_epsilon: 0.25
    rqaoa_cutoff: 5
    classical_timing: measured    # or "off" to drop wall-clock time from runtimes
    retrain_threshold: 50         # new records per scope before a refit
    noise: {p1: 0.0003, p2: 0.01, t1q: 3.5e-8, t2q: 4.0e-7, T1: 1.0e-4,
            T2: 8.5e-5, t_meas: 4.0e-6, measurement_relaxation: true}
    registry: {variants: [QAOA, WSQAOA, WSInitQAOA, RQAOA], max_layers: 3, noise_level: 0.0}
    split: {baseline_sizes: [5, 6, 7], extrapolation_sizes: [8, 9], holdout_fraction: 0.2}
    store: {root: qdaw-store}

Unknown keys are rejected. The ``QDAW_CONFIG`` environment variable names the
file when no explicit path is given.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .algorithms import Variant
from .simulator import NoiseParams

ENV_VAR = "QDAW_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    tolerance: float = 0.01
    max_iters: int = 150


@dataclass(frozen=True)
class RegistryConfig:
    variants: tuple[str, ...] = tuple(v.value for v in Variant)
    max_layers: int = 3
    noise_level: float = 0.0


@dataclass(frozen=True)
class SplitConfig:
    baseline_sizes: tuple[int, ...] = (5, 6, 7)
    extrapolation_sizes: tuple[int, ...] = (8, 9)
    holdout_fraction: float = 0.2


@dataclass(frozen=True)
class StoreConfig:
    root: str = "qdaw-store"


@dataclass(frozen=True)
class Config:
    seed: int = 0
    workers: int = 1
    shots: int = 10_000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ws_epsilon: float = 0.25
    rqaoa_cutoff: int = 5
    classical_timing: str = "measured"
    retrain_threshold: int = 50
    noise: NoiseParams = field(default_factory=NoiseParams)
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    store: StoreConfig = field(default_factory=StoreConfig)

    def __post_init__(self):
        if self.classical_timing not in ("measured", "off"):
            raise ConfigError("classical_timing must be 'measured' or 'off'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.retrain_threshold < 1:
            raise ConfigError("retrain_threshold must be >= 1")
        for v in self.registry.variants:
            Variant.parse(v)

    @property
    def measure_classical(self) -> bool:
        return self.classical_timing == "measured"

    def spec_kwargs(self) -> dict:
        return {
            "shots": self.shots,
            "tolerance": self.optimizer.tolerance,
            "max_iters": self.optimizer.max_iters,
            "ws_epsilon": self.ws_epsilon,
            "rqaoa_cutoff": self.rqaoa_cutoff,
        }

    def with_store(self, root) -> "Config":
        return replace(self, store=StoreConfig(str(root)))


_NESTED = {
    "optimizer": OptimizerConfig,
    "registry": RegistryConfig,
    "split": SplitConfig,
    "store": StoreConfig,
    "noise": NoiseParams,
}
_TUPLES = {"variants", "baseline_sizes", "extrapolation_sizes"}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name for f in fields(cls)} - ({"level"} if cls is NoiseParams else set())
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kw = {}
    for k, v in data.items():
        if cls is Config and k in _NESTED:
            v = _build(_NESTED[k], v or {}, k)
        elif k in _TUPLES:
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where or 'config'}: {exc}") from exc


def config_from_dict(data: dict | None) -> Config:
    return _build(Config, data or {}, "")


def load_config(path=None) -> Config:
    """Load the config file at ``path``, ``$QDAW_CONFIG`` or defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Config()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return config_from_dict(data)
