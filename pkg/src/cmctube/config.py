"""Run configuration: flat ``section.key = value`` text files.

Blank lines and ``#`` comments are ignored. Every key has a typed default;
unknown keys and malformed values are rejected before any computation.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError


_PI_FORM = re.compile(r"^([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+-]+))?$")


def _float(text: str) -> float:
    """A float, or a multiple of pi such as ``pi/3``, ``2pi`` or ``2*pi/3``."""
    value = text.strip().lower()
    match = _PI_FORM.match(value)
    if match:
        coef = float(match.group(1)) if match.group(1) not in ("", "+") else 1.0
        if match.group(1) == "-":
            coef = -1.0
        den = float(match.group(2)) if match.group(2) else 1.0
        return coef * math.pi / den
    return float(value)


def _int(text: str) -> int:
    return int(text.strip())


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return text.strip()


def _params(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValueError(f"parameter {part!r} is not key=value")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _grid(text: str) -> tuple[float, float, int]:
    parts = [p.strip() for p in text.split(":")]
    if len(parts) != 3:
        raise ValueError("expected lo:hi:points")
    lo, hi, n = _float(parts[0]), _float(parts[1]), int(parts[2])
    if not 0 < lo < hi or n < 2:
        raise ValueError("need 0 < lo < hi and at least 2 points")
    return lo, hi, n


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "domain.kind": (_str, "ellipsoid"),
    "domain.params": (_params, {}),
    "curve.kind": (_str, "ellipse"),
    "curve.nodes": (_int, 64),
    "curve.length": (_float, 2 * math.pi),
    "curve.latitude": (_float, 0.0),
    "curve.a": (_float, 1.0),
    "curve.b": (_float, 1.2),
    "curve.path": (_str, ""),
    "curve.find": (_bool, True),
    "cap.n": (_int, 1),
    "cap.gamma": (_float, math.pi / 2),
    "cap.resolution": (_int, 40),
    "tube.n_y": (_int, 64),
    "tube.n_zeta": (_int, 24),
    "tube.eps_max": (_float, 0.2),
    "run.eps": (_float, 0.1),
    "run.order": (_int, 2),
    "run.threads": (_int, 0),
    "spectral.s": (_float, 0.25),
    "spectral.q": (_int, 2),
    "spectral.tau0": (_float, 0.5),
    "spectral.eps_grid": (_grid, (0.02, 0.2, 64)),
    "spectral.modes": (_int, 6),
    "spectral.n_y": (_int, 128),
    "spectral.cap_resolution": (_int, 12),
    "spectral.blocks": (_str, "all"),
    "solve.tol_h": (_float, 1e-8),
    "solve.tol_angle": (_float, 1e-8),
    "solve.max_iter": (_int, 30),
    "solve.mode": (_str, "newton"),
    "solve.check_gap": (_bool, True),
    "output.dir": (_str, "cmctube-out"),
}

_CHOICES = {
    "domain.kind": ("plane", "sphere", "ellipsoid", "implicit"),
    "curve.kind": ("line", "latitude", "ellipse", "csv"),
    "solve.mode": ("newton", "chord"),
    "spectral.blocks": ("all", "w"),
}


@dataclass
class RunConfig:
    """Resolved settings; ``raw`` keeps the text form of every explicitly set key."""

    values: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str) -> Any:
        return self.values[key]

    def resolved(self) -> dict[str, Any]:
        """Every key with its effective value, JSON-friendly."""
        out = {}
        for key in sorted(self.values):
            v = self.values[key]
            out[key] = list(v) if isinstance(v, tuple) else v
        return out


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def build_config(entries: dict[str, str], overrides: dict[str, str] | None = None) -> RunConfig:
    """Validate ``entries`` (file) updated by ``overrides`` (flags) into a ``RunConfig``."""
    merged = dict(entries)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(merged) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values: dict[str, Any] = {}
    for key, (parser, default) in SCHEMA.items():
        if key in merged:
            try:
                values[key] = parser(str(merged[key]))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
        else:
            values[key] = dict(default) if isinstance(default, dict) else default
    for key, allowed in _CHOICES.items():
        if values[key] not in allowed:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}")
    _check_ranges(values)
    return RunConfig(values, {k: str(v) for k, v in merged.items()})


def _check_ranges(v: dict[str, Any]) -> None:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ConfigError(msg)

    need(0 < v["cap.gamma"] < math.pi, "cap.gamma must lie in (0, pi)")
    need(v["cap.n"] in (1, 2, 3), "cap.n must be 1, 2 or 3")
    need(v["cap.resolution"] >= 8, "cap.resolution must be at least 8")
    need(v["curve.nodes"] >= 8, "curve.nodes must be at least 8")
    need(v["tube.n_y"] >= 8 and v["spectral.n_y"] >= 8, "K grids need at least 8 nodes")
    need(v["run.eps"] > 0, "run.eps must be positive")
    need(0 < v["tube.eps_max"] <= 1, "tube.eps_max must lie in (0, 1]")
    need(v["run.order"] in (0, 1, 2, 3), "run.order must be 0, 1, 2 or 3")
    need(v["run.threads"] >= 0, "run.threads must be non-negative")
    need(0 < v["spectral.s"] < 0.5, "spectral.s must lie in (0, 1/2)")
    need(v["spectral.q"] >= 1, "spectral.q must be at least 1")
    need(v["spectral.tau0"] > 0, "spectral.tau0 must be positive")
    need(v["spectral.modes"] >= 1, "spectral.modes must be at least 1")
    need(v["solve.tol_h"] > 0 and v["solve.tol_angle"] > 0, "tolerances must be positive")
    need(v["solve.max_iter"] >= 1, "solve.max_iter must be at least 1")
    if v["curve.kind"] == "csv":
        need(bool(v["curve.path"]), "curve.kind = csv needs curve.path")


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> RunConfig:
    entries: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        entries = parse_text(text, str(p))
    return build_config(entries, overrides)


def dump_config(cfg: RunConfig) -> str:
    """Text form that parses back to the same resolved values."""
    lines = []
    for key, value in cfg.resolved().items():
        if isinstance(value, dict):
            text = ", ".join(f"{k}={v}" for k, v in sorted(value.items()))
        elif key == "spectral.eps_grid":
            text = f"{value[0]!r}:{value[1]!r}:{value[2]}"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value).lower() if isinstance(value, bool) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
