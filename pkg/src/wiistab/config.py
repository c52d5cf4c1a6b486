"""JSON system configurations and the bundled example set.

Schema::

    {
      "name": "example-5.2",
      "kind": "constant" | "interval",
      "n": 2,
      "matrices": {"A0": [[...]], "A1": [[...]], "A2": [[...]]}   # constant
                  {"A": [[...]], "Ad": [[...]]}                     # interval
      "quarter_car": {"K": 1.0, "ms": 973.0, ...},   # interval, replaces "matrices"
      "h": 1.0,                     # constant
      "h1": 1.0, "h2": 2.0,         # interval
      "delay_profile": {"c0": 1.0, "c1": 5.0},      # optional, h(t) = c0 + c1 |sin t|
      "analysis": {...},            # optional defaults for the CLI (alpha, h_range, ...)
      "simulation": {...}           # optional: phi, T, step, sigma
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .systems import (
    QUARTER_CAR_PARAMETERS,
    ConstantDelaySystem,
    DelaySpec,
    IntervalDelaySystem,
    quarter_car_closed_loop,
)

__all__ = ["Config", "ConfigError", "load_config", "save_config", "parse_config", "bundled", "BUNDLED"]

BUNDLED = ("example-5.1", "example-5.2", "example-5.3", "example-5.4")

_MATRIX_FIELDS = {"constant": ("A0", "A1", "A2"), "interval": ("A", "Ad")}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field or line."""


@dataclass
class Config:
    system: ConstantDelaySystem | IntervalDelaySystem
    name: str = ""
    quarter_car: dict | None = None
    analysis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.system.kind

    def to_dict(self) -> dict:
        sysm = self.system
        out: dict = {"name": self.name, "kind": sysm.kind, "n": sysm.n}
        if self.quarter_car is not None:
            out["quarter_car"] = dict(self.quarter_car)
        else:
            out["matrices"] = {
                k: np.asarray(getattr(sysm, k)).tolist() for k in _MATRIX_FIELDS[sysm.kind]
            }
        if sysm.kind == "constant":
            out["h"] = sysm.h
        else:
            out["h1"], out["h2"] = sysm.h1, sysm.h2
            if sysm.profile is not None:
                out["delay_profile"] = {"c0": sysm.profile.c0, "c1": sysm.profile.c1}
        if self.analysis:
            out["analysis"] = self.analysis
        if self.simulation:
            out["simulation"] = self.simulation
        return out


def _require(d: dict, key: str, where: str = ""):
    if key not in d:
        raise ConfigError(f"missing field {where}{key!r}")
    return d[key]


def _matrix(value, name: str, n: int) -> np.ndarray:
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"matrices.{name}: not a numeric array ({exc})") from None
    if M.shape != (n, n):
        raise ConfigError(f"matrices.{name}: expected {n}x{n}, got shape {M.shape}")
    return M


def parse_config(data: dict) -> Config:
    """Build a :class:`Config` from decoded JSON, validating every field."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    kind = _require(data, "kind")
    if kind not in _MATRIX_FIELDS:
        raise ConfigError(f"kind must be 'constant' or 'interval', got {kind!r}")
    n = _require(data, "n")
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    profile = None
    if "delay_profile" in data:
        p = data["delay_profile"]
        try:
            profile = DelaySpec(float(_require(p, "c0", "delay_profile.")), float(p.get("c1", 0.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"delay_profile: {exc}") from None

    qc = data.get("quarter_car")
    try:
        if kind == "constant":
            mats = _require(data, "matrices")
            A0, A1, A2 = (_matrix(_require(mats, k, "matrices."), k, n) for k in _MATRIX_FIELDS[kind])
            system = ConstantDelaySystem(A0, A1, A2, float(_require(data, "h")))
        else:
            h1, h2 = float(_require(data, "h1")), float(_require(data, "h2"))
            if qc is not None:
                unknown = set(qc) - set(QUARTER_CAR_PARAMETERS) - {"K"}
                if unknown:
                    raise ConfigError(f"quarter_car: unknown parameters {sorted(unknown)}")
                params = {k: float(v) for k, v in qc.items() if k != "K"}
                base = quarter_car_closed_loop(float(qc.get("K", 1.0)), h1, h2, params)
                if n != base.n:
                    raise ConfigError(f"n={n} but the quarter-car model has {base.n} states")
                system = IntervalDelaySystem(base.A, base.Ad, h1, h2, profile)
            else:
                mats = _require(data, "matrices")
                A, Ad = (_matrix(_require(mats, k, "matrices."), k, n) for k in _MATRIX_FIELDS[kind])
                system = IntervalDelaySystem(A, Ad, h1, h2, profile)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return Config(
        system=system,
        name=str(data.get("name", "")),
        quarter_car=dict(qc) if qc is not None else None,
        analysis=dict(data.get("analysis", {})),
        simulation=dict(data.get("simulation", {})),
    )


def _decode(text: str, source: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_config(path) -> Config:
    """Read a configuration file, or a bundled example by name (``example-5.2``)."""
    path = str(path)
    if path in BUNDLED:
        return bundled(path)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_config(_decode(text, path))
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(path) else f"{path}: {msg}") from None


def save_config(config: Config, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def bundled(name: str) -> Config:
    if name not in BUNDLED:
        raise ConfigError(f"unknown bundled config {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("wiistab").joinpath("data", f"{name}.json").read_text()
    return parse_config(_decode(text, name))
