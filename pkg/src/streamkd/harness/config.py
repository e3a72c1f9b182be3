"""Run configuration: defaults, file loading, and key=value overrides."""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass
from pathlib import Path

import yaml

METHODS = ("er", "derpp", "erace")
MKD_MODES = ("off", "on", "single_view")
SNAPSHOT_MODES = ("off", "low_quality", "high_quality")


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "synthetic"
    data_root: str | None = None
    arch: str = "small_cnn"
    n_tasks: int = 5
    memory_size: int = 500
    boundary_mode: str = "clear"
    blur_scale: int = 0
    method: str = "er"
    mkd: str = "off"
    snapshot_kd: str = "off"
    inference_mode: str = "averaged"
    alpha: float = 0.01
    lambda_override: float | None = None
    tau: float = 4.0
    derpp_alpha: float = 0.1
    derpp_beta: float = 0.5
    snapshot_lambda: float = 0.01
    snapshot_epochs: int = 5
    snapshot_batch: int = 32
    snapshot_lr: float = 0.01
    min_gap: int = 100
    stream_batch: int = 10
    mem_retrieval_cap: int = 64
    optimizer: str = "sgd"
    lr: float = 0.05
    weight_decay: float = 0.0
    momentum: float = 0.0
    aug_strategy: str = "full"
    seed: int = 0
    eval_every: int = 0
    drift_every: int = 50
    drift_probe_size: int = 256
    log_every: int = 1

    def __post_init__(self):
        checks = [
            ("method", METHODS), ("mkd", MKD_MODES), ("snapshot_kd", SNAPSHOT_MODES),
            ("boundary_mode", ("clear", "blurry")), ("aug_strategy", ("full", "partial")),
            ("inference_mode", ("student", "teacher", "averaged")),
            ("optimizer", ("sgd", "adam")),
        ]
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.snapshot_kd != "off" and (self.method != "er" or self.mkd != "off"):
            raise ValueError("snapshot_kd runs require method=er and mkd=off")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.tau <= 0 or self.lr <= 0 or self.snapshot_lr <= 0:
            raise ValueError("tau, lr and snapshot_lr must be > 0")
        for name in ("n_tasks", "memory_size", "stream_batch", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("blur_scale", "mem_retrieval_cap", "eval_every", "weight_decay",
                     "momentum", "min_gap", "drift_every", "drift_probe_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.lambda_override is not None and self.lambda_override < 0:
            raise ValueError("lambda_override must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    """Coerce a raw string/scalar to the declared field type."""
    if name not in _FIELD_TYPES:
        raise KeyError(f"unknown config key {name!r}")
    tp = typing.get_type_hints(RunConfig)[name]
    optional = False
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        tp = args[0]
        optional = True
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
        if optional:
            return None
        raise ValueError(f"{name} cannot be null")
    if tp is bool:
        if isinstance(value, bool):
            return value
        return {"true": True, "false": False}[str(value).lower()]
    if tp is str and isinstance(value, bool):
        # YAML 1.1 reads bare on/off as booleans; the mode vocabulary wants
        # the words back
        return "on" if value else "off"
    return tp(value)


def from_dict(data: dict) -> RunConfig:
    return RunConfig(**{k: _coerce(k, v) for k, v in data.items()})


def load_config(path: str | Path) -> RunConfig:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a key: value mapping")
    return from_dict(data)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply CLI-style `key=value` strings on top of a config."""
    updates = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not key=value")
        updates[key.strip()] = _coerce(key.strip(), raw.strip())
    return cfg.replace(**updates)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
