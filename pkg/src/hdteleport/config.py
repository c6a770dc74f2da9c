"""Run configuration: TOML file values, overridden by command-line flags."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .noise import DEFAULT_PARAMS, DEFAULT_SEED, NoiseParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_ENV = "HDTELEPORT_OUT"
DEFAULT_OUT = "hdteleport-out"
KINDS = (
    "teleport", "mub-suite", "sweep-landscape", "sweep-splitting",
    "hom", "decompose", "bounds", "witness", "verify",
)  # fmt: skip
UNITARIES = ("qft3", "qft4", "u31", "u51", "hybrid")
FORMATS = ("json", "csv", "both")
# keys that change how a run is executed or stored, not what it computes
EXECUTION_KEYS = ("threads", "format", "out", "files")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kind: str
    input: str = "1,0,0"
    n: int = 3
    variant: str = "main"
    elements: str = "ideal"
    p: float = DEFAULT_PARAMS.p
    P_d: float = DEFAULT_PARAMS.P_d
    v_same: float = DEFAULT_PARAMS.v_same
    v_cross: float = DEFAULT_PARAMS.v_cross
    rH_deviation: float = DEFAULT_PARAMS.rH_deviation
    phase_noise: float = DEFAULT_PARAMS.phase_noise
    pd_grid: tuple = (0.05, 0.1, 0.16, 0.3, 0.6, 1.0)
    p_grid: tuple = (1e-4, 1e-3, 5e-3, 0.013, 0.02, 0.05)
    deviations: tuple = (0.0, 0.01, 0.02, 0.03, 0.05, 0.1)
    trials: int = 1000
    delays: tuple = tuple(float(x) for x in np.linspace(-1500.0, 1500.0, 61))
    bandwidth: float = 3.0
    v_max: float = 0.82
    unitary: str = "qft3"
    noisy: bool = False
    pulses: float = 1e11
    resolving: bool = False
    replicas: int = 10_000
    seed: int = DEFAULT_SEED
    threads: int = 1
    format: str = "both"
    out: str = field(default_factory=lambda: os.environ.get(OUT_ENV, DEFAULT_OUT))
    files: tuple = ()

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(self.p, self.P_d, self.v_same, self.v_cross, self.rH_deviation, self.phase_noise)

    def semantic(self) -> dict:
        d = dataclasses.asdict(self)
        for k in EXECUTION_KEYS:
            d.pop(k)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def digest(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
TUPLE_KEYS = {"pd_grid", "p_grid", "deviations", "delays", "files"}
BOOL_KEYS = {"noisy", "resolving"}
INT_KEYS = {"n", "trials", "replicas", "seed", "threads"}
STR_KEYS = {"kind", "input", "variant", "elements", "unitary", "format", "out"}


def _coerce(key: str, value):
    if key in TUPLE_KEYS:
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        if key == "files":
            return tuple(str(v) for v in value)
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected numbers, got {value!r}") from None
    if key in BOOL_KEYS:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key}: expected true or false, got {value!r}")
    if key in INT_KEYS:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if key in STR_KEYS:
        if isinstance(value, (list, tuple)) and key == "input":
            return ",".join(str(v) for v in value)
        return str(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _validate(cfg: RunConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError(f"kind: unknown experiment {cfg.kind!r}")
    if cfg.n not in (2, 3, 4):
        raise ConfigError(f"n: unsupported dimension {cfg.n}; use 2, 3 or 4")
    if cfg.variant not in ("main", "feedforward"):
        raise ConfigError(f"variant: {cfg.variant!r} is not main or feedforward")
    if cfg.elements not in ("ideal", "experimental"):
        raise ConfigError(f"elements: {cfg.elements!r} is not ideal or experimental")
    if cfg.elements == "experimental" and cfg.n != 3:
        raise ConfigError("elements: the experimental multiport exists for n = 3 only")
    if cfg.variant == "feedforward" and cfg.n == 4:
        raise ConfigError("variant: feed-forward is implemented for n = 2 and 3")
    checks = {
        "p": 0.0 <= cfg.p < 0.1,
        "P_d": 0.0 <= cfg.P_d <= 1.0,
        "v_same": 0.0 <= cfg.v_same <= 1.0,
        "v_cross": 0.0 <= cfg.v_cross <= 1.0,
        "rH_deviation": 0.0 <= cfg.rH_deviation <= 1 / 3,
        "phase_noise": cfg.phase_noise >= 0.0,
        "pd_grid": bool(cfg.pd_grid) and all(0.0 < v <= 1.0 for v in cfg.pd_grid),
        "p_grid": bool(cfg.p_grid) and all(0.0 < v < 0.1 for v in cfg.p_grid),
        "deviations": bool(cfg.deviations) and all(0.0 <= v < 1 / 3 for v in cfg.deviations),
        "trials": cfg.trials >= 1,
        "delays": bool(cfg.delays),
        "bandwidth": cfg.bandwidth > 0.0,
        "v_max": 0.0 <= cfg.v_max <= 1.0,
        "pulses": cfg.pulses > 0.0,
        "replicas": cfg.replicas >= 2,
        "seed": 0 <= cfg.seed < 2**64,
        "threads": cfg.threads >= 1,
    }
    for key, ok in checks.items():
        if not ok:
            raise ConfigError(f"{key}: value {getattr(cfg, key)!r} out of range")
    if cfg.unitary not in UNITARIES and not cfg.unitary.startswith("random:"):
        raise ConfigError(f"unitary: {cfg.unitary!r} is not one of {', '.join(UNITARIES)} or random:<size>")
    if cfg.format not in FORMATS:
        raise ConfigError(f"format: {cfg.format!r} is not json, csv or both")


def load_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):  # [noise], [grid] ... tables are flattened
            for sub, v in value.items():
                if sub in flat:
                    raise ConfigError(f"duplicate key {sub!r} in {path}")
                flat[sub] = v
        else:
            if key in flat:
                raise ConfigError(f"duplicate key {key!r} in {path}")
            flat[key] = value
    return flat


def parse_config(kind: str, file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge defaults, file values and flags (flags win), rejecting unknown keys."""
    merged: dict = {}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in FIELDS:
                raise ConfigError(f"unknown key {key!r}")
            if value is not None:
                merged[key] = _coerce(key, value)
    file_kind = merged.pop("kind", kind)
    if file_kind != kind:
        raise ConfigError(f"kind: config is for {file_kind!r} but the command is {kind!r}")
    cfg = RunConfig(kind=kind, **merged)
    _validate(cfg)
    return cfg
