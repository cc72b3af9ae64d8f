"""Scenario configuration: sectioned ``key = value`` text with ``#`` comments.

::

    [sim]
    protocol = aodv_ext
    node_count = 30
    [ext]
    d = 5
    ext.c_f = 0.8      # dotted keys work in any section

Every key has a default; an empty document yields the reference scenario.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .mac import MacParams
from .radio import EnergyParams, RadioParams
from .routing import AodvParams, ExtParams
from .traffic import TrafficParams

PROTOCOLS = ("aodv", "aodv_ext")


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        self.message = message
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


@dataclass(frozen=True)
class SimParams:
    protocol: str = "aodv"
    node_count: int = 50
    width: float = 800.0
    height: float = 800.0
    v_min: float = 1.0
    v_max: float = 40.0
    pause: float = 0.0
    duration: float = 200.0
    seed: int = 1

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"sim.protocol must be one of {PROTOCOLS}")
        if self.node_count < 2:
            raise ValueError("sim.node_count must be >= 2")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("sim.width and sim.height must be positive")
        if self.v_min < 0 or self.v_max < self.v_min or (self.v_max > 0 and self.v_min == 0):
            raise ValueError("sim.v_min/v_max must satisfy 0 < v_min <= v_max (or both 0)")
        if self.pause < 0:
            raise ValueError("sim.pause must be >= 0")
        if not self.duration > 0:
            raise ValueError("sim.duration must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("sim.seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ScenarioConfig:
    sim: SimParams = field(default_factory=SimParams)
    radio: RadioParams = field(default_factory=RadioParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    mac: MacParams = field(default_factory=MacParams)
    ext: ExtParams = field(default_factory=ExtParams)
    aodv: AodvParams = field(default_factory=AodvParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)

    def with_(self, **dotted: Any) -> "ScenarioConfig":
        """Copy with overrides given as ``section__key=value``."""
        groups: dict[str, dict] = {}
        for k, v in dotted.items():
            sec, _, key = k.partition("__")
            if sec not in SECTIONS or key not in _keys(sec):
                raise ConfigError(f"unknown key {sec}.{key}")
            groups.setdefault(sec, {})[key] = v
        out = self
        for sec, kw in groups.items():
            out = dataclasses.replace(out, **{sec: dataclasses.replace(getattr(out, sec), **kw)})
        return out

    @property
    def protocol(self) -> str:
        return self.sim.protocol

    def ext_params(self) -> ExtParams:
        """Gate settings with ``enabled`` following the protocol choice."""
        return dataclasses.replace(self.ext, enabled=self.sim.protocol == "aodv_ext")


SECTIONS = ("sim", "radio", "energy", "mac", "ext", "aodv", "traffic")
_HIDDEN = {("ext", "enabled")}


def _keys(section: str) -> dict[str, Any]:
    cls = type(getattr(ScenarioConfig(), section))
    return {f.name: f.default for f in dataclasses.fields(cls) if (section, f.name) not in _HIDDEN}


def _convert(raw: str, default: Any, where: str):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw, 0) if raw.lower().startswith("0x") else int(raw)
        except ValueError:
            raise ValueError(f"{where}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            v = float(raw)
        except ValueError:
            raise ValueError(f"{where}: expected a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"{where}: value must be finite")
        return v
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def parse_scenario(text: str) -> ScenarioConfig:
    values: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    lines: dict[tuple[str, str], int] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            section = name
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, val = key.strip(), val.strip()
        if "." in key:
            sec, _, key = key.partition(".")
        elif section is None:
            raise ConfigError(f"key {key!r} appears before any section", lineno)
        else:
            sec = section
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r} in key {sec}.{key}", lineno)
        known = _keys(sec)
        if key not in known:
            raise ConfigError(f"unknown key {sec}.{key}", lineno)
        if (sec, key) in lines:
            raise ConfigError(f"duplicate key {sec}.{key} (first set on line {lines[sec, key]})", lineno)
        if not val:
            raise ConfigError(f"missing value for {sec}.{key}", lineno)
        try:
            values[sec][key] = _convert(val, known[key], f"{sec}.{key}")
        except ValueError as exc:
            raise ConfigError(str(exc), lineno) from None
        lines[sec, key] = lineno

    parts = {}
    for sec in SECTIONS:
        cls = type(getattr(ScenarioConfig(), sec))
        try:
            parts[sec] = cls(**values[sec])
        except ValueError as exc:
            msg = str(exc)
            lineno = next((ln for (s, k), ln in lines.items() if s == sec and f"{s}.{k}" in msg), None)
            raise ConfigError(msg, lineno) from None
    return ScenarioConfig(**parts)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_scenario(config: ScenarioConfig) -> str:
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        part = getattr(config, sec)
        for key in _keys(sec):
            out.append(f"{key} = {_fmt(getattr(part, key))}")
    return "\n".join(out) + "\n"


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
