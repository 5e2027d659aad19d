"""Flat ``key = value`` experiment configuration.

Lines are ``dotted.key = value``; ``#`` starts a comment.  Every key must
be one of :data:`SCHEMA`; keys not given keep their defaults.  List-valued
keys take comma-separated values.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigurationError
from .mesh import Mode
from .weights import Family, ProfileKind


def _pos_float(s: str) -> float:
    v = float(s)
    if not v > 0 or math.isinf(v):
        raise ValueError(f"expected a positive number, got {s!r}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {s!r}")
    return v


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return v


def _float_list(s: str) -> tuple:
    vals = tuple(_pos_float(x.strip()) for x in s.split(",") if x.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _grading(s: str):
    return "auto" if s.strip().lower() == "auto" else _pos_float(s)


def _choice(enum_cls) -> Callable[[str], str]:
    def parse(s: str) -> str:
        return enum_cls(s.strip().lower()).value
    return parse


def _text(s: str) -> str:
    return s.strip()


# key -> (parser, default as written in a config file)
SCHEMA: dict[str, tuple[Callable[[str], Any], str]] = {
    "profile.kind": (_choice(ProfileKind), "power"),
    "profile.alpha": (_pos_float, "1"),
    "weight.family": (_choice(Family), "two_quadrant"),
    "weight.cones": (_pos_int, "2"),
    "weight.cutoff": (_pos_float, "1"),
    "mesh.rings": (_pos_int, "32"),
    "mesh.sectors": (_pos_int, "32"),
    "mesh.r_min": (_pos_float, "1e-3"),
    "mesh.R": (_pos_float, "2"),
    "mesh.grading": (_grading, "auto"),
    "topology.mode": (_choice(Mode), "split"),
    "solver.tol": (_pos_float, "1e-12"),
    "solver.max_iter": (_pos_int, "20000"),
    "mc.paths": (_pos_int, "10000"),
    "mc.seed": (_seed, "12345"),
    "mc.max_steps": (_pos_int, "1000000"),
    "alpha": (_pos_float, "1"),
    "output.dir": (_text, "reports"),
    # refinement ladders
    "ladder.r_min": (_float_list, "1e-2, 1e-3, 1e-4, 1e-5"),
    "ladder.rings_per_decade": (_pos_int, "8"),
    "ladder.outer_rings": (_pos_int, "8"),
    # resolvent identities
    "identity.alphas": (_float_list, "0.5, 1, 4"),
    "identity.trials": (_pos_int, "20"),
    # cone capacities
    "cones.eps": (_float_list, "0.2, 0.1, 0.05, 0.025"),
    "cones.delta": (_pos_float, "0.39269908169872414"),
    "cones.r_min": (_pos_float, "1e-4"),
    # random walks
    "hitting.start_r": (_pos_float, "0.05"),
    "hitting.start_theta": (float, "0.7853981633974483"),
    "walk.start_r": (_pos_float, "0.5"),
    "walk.start_theta": (float, "2.356194490192345"),
    "walk.annulus_lo": (_pos_float, "0.005"),
    "walk.annulus_hi": (_pos_float, "0.1"),
    "walk.return_steps": (_pos_int, "20000"),
    "walk.return_paths": (_pos_int, "100"),
    # Bessel comparison
    "bessel.r0": (_pos_float, "0.5"),
    "bessel.a": (_pos_float, "0.01"),
    "bessel.b": (_pos_float, "1"),
    "bessel.dt": (_pos_float, "1e-5"),
    "bessel.paths": (_pos_int, "100000"),
}


def defaults() -> dict:
    return {k: parse(v) for k, (parse, v) in SCHEMA.items()}


def _apply(cfg: dict, key: str, value: str, where: str) -> None:
    key = key.strip()
    if key not in SCHEMA:
        raise ConfigurationError(f"unknown config key {key!r} ({where})")
    try:
        cfg[key] = SCHEMA[key][0](value)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key!r} ({where}): {exc}") from exc


def parse_lines(lines, source: str = "<config>", cfg: dict | None = None) -> dict:
    cfg = defaults() if cfg is None else cfg
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        _apply(cfg, key, value, f"{source}:{n}")
    return cfg


def load_config(path, overrides=()) -> dict:
    """Defaults, then the file, then ``key=value`` overrides in order."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    cfg = parse_lines(path.read_text().splitlines(), str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        _apply(cfg, key, value, "--set")
    return cfg


def format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
