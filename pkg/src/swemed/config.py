"""JSON run configuration with presets and strict validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from typing import Any

from .params import Parameters
from .solver import Boundary, Grid, NewtonSettings, Splitting


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.key = key


@dataclass(frozen=True)
class GridSpec:
    x_left: float
    x_right: float
    n_cells: int

    def build(self, boundary: Boundary) -> Grid:
        return Grid(self.x_left, self.x_right, self.n_cells, boundary)


@dataclass(frozen=True)
class SimulationConfig:
    parameters: Parameters
    grid: GridSpec
    boundary: Boundary
    splitting: Splitting
    cfl: float
    newton: NewtonSettings
    snapshot_times: tuple[float, ...]
    t_end: float
    timeseries_interval: float
    output_dir: str | None = None
    preset: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "preset": self.preset,
            "parameters": self.parameters.to_dict(),
            "grid": {"x_left": self.grid.x_left, "x_right": self.grid.x_right, "n_cells": self.grid.n_cells},
            "boundary": self.boundary.value,
            "splitting": self.splitting.value,
            "cfl": self.cfl,
            "newton": {"tol": self.newton.tol, "max_iter": self.newton.max_iter},
            "snapshot_times": list(self.snapshot_times),
            "t_end": self.t_end,
            "timeseries_interval": self.timeseries_interval,
            "output_dir": self.output_dir,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_RELAXATION = {
    "parameters": {"epsilon": 15.0, "nu": 10.0},
    "grid": {"x_left": -1.0, "x_right": 2.0, "n_cells": 300},
    "boundary": "Open",
    "splitting": "Lie",
    "cfl": 0.45,
    "newton": {"tol": 1e-12, "max_iter": 50},
    "snapshot_times": [0.0, 1.0, 5.0, 10.0, 30.0, 60.0, 100.0],
    "timeseries_interval": 0.5,
}

PRESETS: dict[str, dict[str, Any]] = {"relaxation": _RELAXATION}
# older configuration files name the same preset differently
PRESET_ALIASES = {"paper-relaxation": "relaxation"}

_TOP_KEYS = {
    "preset", "parameters", "grid", "boundary", "splitting", "cfl", "newton",
    "snapshot_times", "t_end", "timeseries_interval", "output_dir",
}
_REQUIRED_WITHOUT_PRESET = ("grid", "snapshot_times")
_PARAM_KEYS = {f.name for f in fields(Parameters)}
_OPTIONAL_PARAMS = {"mu", "omega_0"}


def _number(key: str, v: Any, *, integer: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"must be a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(key, f"must be an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(key, f"must be finite, got {v!r}")
    return float(v)


def _object(key: str, v: Any, allowed: set[str]) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(key, f"must be an object, got {type(v).__name__}")
    for name in sorted(v):
        if name not in allowed:
            raise ConfigError(f"{key}.{name}" if key else name, "unknown key")
    return v


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parameters(raw: dict) -> Parameters:
    raw = _object("parameters", raw, _PARAM_KEYS)
    kwargs = {}
    for name, v in raw.items():
        if v is None and name in _OPTIONAL_PARAMS:
            kwargs[name] = None
        else:
            kwargs[name] = _number(f"parameters.{name}", v)
    try:
        return Parameters(**kwargs)
    except ValueError as exc:
        name = str(exc).split(":", 1)[0]
        raise ConfigError(f"parameters.{name}", str(exc).split(": ", 1)[-1]) from None


def _enum(key: str, cls, v: Any):
    try:
        return cls(v)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ConfigError(key, f"must be one of {choices}, got {v!r}") from None


def from_dict(data: Any) -> SimulationConfig:
    """Validate a decoded JSON object, merging preset defaults first."""
    data = _object("", data, _TOP_KEYS)
    preset = data.get("preset")
    if preset is not None:
        preset = PRESET_ALIASES.get(preset, preset)
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        data = _merge(PRESETS[preset], data)
    else:
        missing = [k for k in _REQUIRED_WITHOUT_PRESET if k not in data]
        if missing:
            raise ConfigError("", f"preset or full spec required (missing: {', '.join(missing)})")

    params = _parameters(data.get("parameters", {}))

    g = _object("grid", data["grid"], {"x_left", "x_right", "n_cells"})
    for name in ("x_left", "x_right", "n_cells"):
        if name not in g:
            raise ConfigError(f"grid.{name}", "missing")
    grid = GridSpec(
        _number("grid.x_left", g["x_left"]),
        _number("grid.x_right", g["x_right"]),
        _number("grid.n_cells", g["n_cells"], integer=True),
    )
    if grid.n_cells < 4:
        raise ConfigError("grid.n_cells", f"must be >= 4, got {grid.n_cells}")
    if not grid.x_right > grid.x_left:
        raise ConfigError("grid.x_right", f"must exceed grid.x_left, got {grid.x_right}")

    boundary = _enum("boundary", Boundary, data.get("boundary", "Open"))
    splitting = _enum("splitting", Splitting, data.get("splitting", "Lie"))

    cfl = _number("cfl", data.get("cfl", 0.45))
    if not 0 < cfl <= 0.5:
        raise ConfigError("cfl", f"must lie in (0, 0.5], got {cfl}")

    nw = _object("newton", data.get("newton", {}), {"tol", "max_iter"})
    tol = _number("newton.tol", nw.get("tol", 1e-12))
    if not tol > 0:
        raise ConfigError("newton.tol", f"must be > 0, got {tol}")
    max_iter = _number("newton.max_iter", nw.get("max_iter", 50), integer=True)
    if max_iter < 1:
        raise ConfigError("newton.max_iter", f"must be >= 1, got {max_iter}")
    newton = NewtonSettings(tol, max_iter)

    snaps = data["snapshot_times"]
    if not isinstance(snaps, list) or not snaps:
        raise ConfigError("snapshot_times", "must be a non-empty list")
    times = tuple(_number(f"snapshot_times[{i}]", t) for i, t in enumerate(snaps))
    if any(t < 0 for t in times):
        raise ConfigError("snapshot_times", "must be >= 0")
    if list(times) != sorted(set(times)):
        raise ConfigError("snapshot_times", "must be strictly increasing")

    t_end = _number("t_end", data["t_end"]) if data.get("t_end") is not None else times[-1]
    if t_end < times[-1]:
        raise ConfigError("t_end", f"must be >= the last snapshot time {times[-1]}, got {t_end}")

    interval = _number("timeseries_interval", data.get("timeseries_interval", 0.5))
    if not interval > 0:
        raise ConfigError("timeseries_interval", f"must be > 0, got {interval}")

    out = data.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir", f"must be a string, got {out!r}")

    return SimulationConfig(params, grid, boundary, splitting, cfl, newton, times, t_end, interval, out, preset)


def parse_config(text: str) -> SimulationConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON: {exc}") from None
    return from_dict(data)


def load_config(path: str) -> SimulationConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def preset(name: str, **overrides) -> SimulationConfig:
    cfg = from_dict({"preset": name})
    return replace(cfg, **overrides) if overrides else cfg
