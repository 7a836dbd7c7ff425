"""Scenario configuration files.

INI-style text with sections ``[lattice]``, ``[experiment]``, ``[angles]``,
``[trials]`` and ``[seed]``::

    [experiment]
    kind = chsh
    switching = random

    [angles]
    a = 0, pi/4
    b = pi/8, 3pi/8

    [trials]
    pairs = 250000

    [seed]
    seed = 7

Angles are radians; ``pi`` fractions such as ``3pi/8`` are accepted.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

KINDS = ("epr", "furry", "chsh", "lhv", "clock", "doubleslit")
WEIGHTINGS = ("amplitude", "uniform")
SWITCHING = ("static", "random")

_PI_FORM = re.compile(r"^\s*([+-]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


class ConfigError(ValueError):
    """Validation failure; ``field`` names the offending setting."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def parse_angle(text: str) -> float:
    text = str(text).strip()
    m = _PI_FORM.match(text)
    if m:
        coef = m.group(1)
        if coef in ("", "+"):
            c = 1.0
        elif coef == "-":
            c = -1.0
        else:
            c = float(coef)
        div = float(m.group(2)) if m.group(2) else 1.0
        return c * math.pi / div
    return float(text)


def parse_list(text: str, conv=float) -> list:
    return [conv(p) for p in str(text).replace(";", ",").split(",") if p.strip()]


@dataclass
class ScenarioConfig:
    kind: str
    seed: Optional[int] = None
    lattice_file: Optional[str] = None
    arm_length: int = 20
    width: int = 25
    slit_offset: int = 5
    extra_hops: Optional[int] = None
    laser_period: int = 1
    relay_distance: int = 0
    qa: list = field(default_factory=lambda: [0.0])
    qb: list = field(default_factory=lambda: [0.0])
    pairs: int = 200_000
    lengths: list = field(default_factory=lambda: [5, 10, 20, 40, 80])
    weighting: str = "amplitude"
    wavenumber: Optional[float] = None
    switching: str = "static"
    switch_period: int = 10
    marking: bool = False
    full_protocol: bool = False
    out: Optional[str] = None
    summary: Optional[str] = None
    trace: Optional[str] = None

    def resolve(self) -> "ScenarioConfig":
        """Fill kind-dependent defaults and validate; returns self."""
        from .experiments import CHSH_ANGLES_A, CHSH_ANGLES_B, DOUBLE_SLIT_EXTRA_HOPS, DOUBLE_SLIT_WAVENUMBER

        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if self.wavenumber is None:
            self.wavenumber = DOUBLE_SLIT_WAVENUMBER if self.kind == "doubleslit" else 0.0
        if self.extra_hops is None:
            self.extra_hops = DOUBLE_SLIT_EXTRA_HOPS if self.kind == "doubleslit" else 0
        if self.kind in ("chsh", "lhv") and self._default_angles():
            self.qa, self.qb = list(CHSH_ANGLES_A), list(CHSH_ANGLES_B)
        self.validate()
        return self

    def _default_angles(self) -> bool:
        return self.qa == [0.0] and self.qb == [0.0]

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed", "a seed is required")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError("weighting", f"must be one of {', '.join(WEIGHTINGS)}")
        if self.switching not in SWITCHING:
            raise ConfigError("switching", f"must be one of {', '.join(SWITCHING)}")
        for name in ("pairs", "arm_length", "laser_period", "switch_period", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        for name in ("relay_distance", "extra_hops", "slit_offset"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.kind in ("chsh", "lhv"):
            if len(self.qa) != 2 or len(self.qb) != 2:
                raise ConfigError("angles", "CHSH needs two angles per side (2+2)")
        elif self.kind in ("epr", "furry"):
            if len(self.qa) != 1 or len(self.qb) != 1:
                raise ConfigError("angles", "epr/furry take one angle per side")
        if self.kind == "clock":
            if not self.lengths:
                raise ConfigError("lengths", "at least one distance is required")
            if any(d < 1 for d in self.lengths):
                raise ConfigError("lengths", "distances must be >= 1")
        for name in ("qa", "qb"):
            if not all(math.isfinite(a) for a in getattr(self, name)):
                raise ConfigError("angles", "angles must be finite")
        if not math.isfinite(self.wavenumber):
            raise ConfigError("wavenumber", "must be finite")
        if self.lattice_file is not None and not Path(self.lattice_file).is_file():
            raise ConfigError("lattice_file", f"no such file {self.lattice_file}")

    def to_ini(self) -> str:
        """Fully resolved config in the file format; loading it reproduces the run."""
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, list):
                return ", ".join(repr(x) for x in v)
            return repr(v) if isinstance(v, float) else str(v)

        sections = {
            "experiment": ["kind", "weighting", "wavenumber", "switching", "switch_period", "marking",
                           "full_protocol", "out", "summary", "trace"],
            "lattice": ["lattice_file", "arm_length", "width", "slit_offset", "extra_hops",
                        "laser_period", "relay_distance"],
            "angles": ["qa", "qb"],
            "trials": ["pairs", "lengths"],
            "seed": ["seed"],
        }
        lines = []
        for section, names in sections.items():
            lines.append(f"[{section}]")
            for name in names:
                value = getattr(self, name)
                if value is None:
                    continue
                key = {"qa": "a", "qb": "b"}.get(name, name)
                lines.append(f"{key} = {fmt(value)}")
            lines.append("")
        return "\n".join(lines)


# file key -> (attribute, converter)
_KEYS = {
    "experiment": {
        "kind": ("kind", str), "weighting": ("weighting", str), "wavenumber": ("wavenumber", parse_angle),
        "switching": ("switching", str), "switch_period": ("switch_period", int),
        "marking": ("marking", "bool"), "full_protocol": ("full_protocol", "bool"),
        "out": ("out", str), "summary": ("summary", str), "trace": ("trace", str),
    },
    "lattice": {
        "file": ("lattice_file", str), "lattice_file": ("lattice_file", str),
        "arm_length": ("arm_length", int), "width": ("width", int), "slit_offset": ("slit_offset", int),
        "extra_hops": ("extra_hops", int), "laser_period": ("laser_period", int),
        "relay_distance": ("relay_distance", int),
    },
    "angles": {
        "a": ("qa", lambda s: parse_list(s, parse_angle)), "qa": ("qa", lambda s: parse_list(s, parse_angle)),
        "b": ("qb", lambda s: parse_list(s, parse_angle)), "qb": ("qb", lambda s: parse_list(s, parse_angle)),
    },
    "trials": {"pairs": ("pairs", int), "trials": ("pairs", int), "lengths": ("lengths", lambda s: parse_list(s, int))},
    "seed": {"seed": ("seed", int)},
}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse config text into attribute overrides (no validation)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("file", f"line {exc.lineno}: expected a [section] header") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(exc.option, f"line {exc.lineno}: duplicate option") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(exc.section, f"line {exc.lineno}: duplicate section") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError("file", f"line {lineno}: cannot parse") from None
    values: dict = {}
    for section in cp.sections():
        keys = _KEYS.get(section)
        if keys is None:
            raise ConfigError(section, f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(key, f"unknown option in [{section}]")
            attr, conv = keys[key]
            try:
                if conv == "bool":
                    value = cp.getboolean(section, key)
                else:
                    value = conv(raw)
            except ValueError as exc:
                raise ConfigError(attr, f"bad value {raw!r}: {exc}") from None
            values[attr] = value
    return values


def build_config(values: dict) -> ScenarioConfig:
    if "kind" not in values:
        raise ConfigError("kind", "experiment kind is required")
    known = {f.name for f in fields(ScenarioConfig)}
    return ScenarioConfig(**{k: v for k, v in values.items() if k in known}).resolve()


def load_config(path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
    """Read, merge ``overrides`` (flags win) and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    values = parse_config(text, str(path))
    values.update(overrides or {})
    return build_config(values)
