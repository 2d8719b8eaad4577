"""Scenario configuration files: parsing, defaults, overrides and schema validation."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import tomli

from .errors import ConfigError

SCENARIOS = ("contraction", "rigidity", "stability-curve", "poincare", "certificate")
FAMILIES = ("gaussian-scaled", "gaussian-shifted", "quartic", "product", "rotated-product",
            "ridge-perturbation")

DEFAULTS = {
    "scenario": None,
    "measure": {"family": None, "dimension": 1, "params": {}, "radius": 8.0},
    "numerics": {
        "grid_nodes": None,  # None: per-dimension transport default
        "grid_radius": None,
        "reg": None,
        "richardson": True,
        "sinkhorn_tol": 1e-9,
        "max_iter": 50000,
        "quadrature_order": None,
        "degree": None,
        "k": None,
        "c_cert": 10.0,
        "tolerance": None,  # None: the method tolerance of the map
        "cloud_order": None,
    },
    "sweep": {"parameter": "t", "values": []},
    "output": {"dir": "results", "prefix": ""},
}

# expected type of every leaf; "num" accepts int or float, tuples list the alternatives
SCHEMA = {
    "scenario": str,
    "measure": {"family": str, "dimension": int, "params": dict, "radius": "num"},
    "numerics": {
        "grid_nodes": int,
        "grid_radius": "num",
        "reg": "num",
        "richardson": bool,
        "sinkhorn_tol": "num",
        "max_iter": int,
        "quadrature_order": int,
        "degree": int,
        "k": int,
        "c_cert": "num",
        "tolerance": "num",
        "cloud_order": int,
    },
    "sweep": {"parameter": str, "values": list},
    "output": {"dir": str, "prefix": str},
}

POSITIVE = ("measure.radius", "numerics.grid_radius", "numerics.reg", "numerics.sinkhorn_tol",
            "numerics.c_cert", "numerics.tolerance", "numerics.max_iter", "numerics.grid_nodes",
            "numerics.quadrature_order", "numerics.degree", "numerics.cloud_order")


@dataclass(frozen=True)
class ScenarioConfig:
    data: dict
    source: str = "<memory>"

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def measure(self) -> dict:
        return self.data["measure"]

    @property
    def numerics(self) -> dict:
        return self.data["numerics"]

    @property
    def sweep(self) -> dict:
        return self.data["sweep"]

    @property
    def output(self) -> dict:
        return self.data["output"]

    def measure_spec(self, **param_updates) -> dict:
        spec = copy.deepcopy(self.measure)
        spec["params"].update(param_updates)
        return spec


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_value(text: str):
    """Read an override value as TOML, falling back to a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, text = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path!r} descends into a non-table")
        node[keys[-1]] = parse_value(text.strip())
    return data


def _type_ok(value, expected) -> bool:
    if expected == "num":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _check_keys(data: dict, schema: dict, prefix: str, out: list) -> None:
    for key, val in data.items():
        name = f"{prefix}{key}"
        if key not in schema:
            out.append(f"unknown key {name!r}")
            continue
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(val, dict):
                out.append(f"{name} must be a table")
            else:
                _check_keys(val, expected, name + ".", out)
        elif val is not None and not _type_ok(val, expected):
            tname = "number" if expected == "num" else expected.__name__
            out.append(f"{name} must be of type {tname}, got {type(val).__name__}")


def _get(data: dict, dotted: str):
    node = data
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            return None
        node = node[key]
    return node


def diagnostics(raw: dict) -> list:
    """Every schema violation of a raw (not yet defaulted) config, as readable strings."""
    out: list = []
    _check_keys(raw, SCHEMA, "", out)
    data = _merge(DEFAULTS, {k: v for k, v in raw.items() if k in SCHEMA})
    if data["scenario"] is None:
        out.append("scenario is required")
    elif data["scenario"] not in SCENARIOS:
        out.append(f"scenario {data['scenario']!r} not one of {', '.join(SCENARIOS)}")
    m = data["measure"] if isinstance(data["measure"], dict) else {}
    fam = m.get("family")
    if fam is None:
        out.append("measure.family is required")
    elif isinstance(fam, str) and fam not in FAMILIES:
        out.append(f"measure.family {fam!r} not one of {', '.join(FAMILIES)}")
    dim = m.get("dimension")
    if _type_ok(dim, int) and not 1 <= dim <= 4:
        out.append("dimension out of range [1,4]")
    for name in POSITIVE:
        val = _get(data, name)
        if _type_ok(val, "num") and val <= 0:
            out.append(f"{name} must be positive, got {val}")
    k = _get(data, "numerics.k")
    if _type_ok(k, int) and _type_ok(dim, int) and not 1 <= k <= dim:
        out.append(f"numerics.k={k} outside 1..{dim}")
    if data["scenario"] == "certificate" and k is None:
        out.append("numerics.k is required by the certificate scenario")
    if data["scenario"] == "stability-curve":
        vals = _get(data, "sweep.values")
        if not vals:
            out.append("sweep.values must list at least one parameter value")
        elif isinstance(vals, list) and not all(_type_ok(v, "num") for v in vals):
            out.append("sweep.values must be numbers")
        if k is None:
            out.append("numerics.k is required by the stability-curve scenario")
    return out


def load_text(text: str, source: str = "<memory>", overrides=None) -> ScenarioConfig:
    """Parse, override, validate and fill defaults.

    Raises
    ------
    ConfigError
        On a TOML syntax error (the message carries line and column) or any
        schema violation (all diagnostics joined).
    """
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw = apply_overrides(raw, overrides)
    problems = diagnostics(raw)
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))
    return ScenarioConfig(_merge(DEFAULTS, raw), source)


def load(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    return load_text(path.read_text(encoding="utf-8"), str(path), overrides)


def validate(path, overrides=None) -> list:
    """Diagnostics for a config file; an empty list means it is valid. I/O errors propagate."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        return [f"{path}: {exc}"]
    try:
        raw = apply_overrides(raw, overrides)
    except ConfigError as exc:
        return [str(exc)]
    return diagnostics(raw)
