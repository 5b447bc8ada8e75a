"""Experiment configuration: a TOML file checked against a fixed schema.

Top-level keys are ``seed``, ``threads`` and ``potential`` plus the tables
``[domain]``, ``[target]``, ``[grid]``, ``[pde]``, ``[flow]``, ``[chain]``
and ``[diagnostics]``. ``pde.tol`` and ``pde.max_iter`` take precedence over
the same keys under ``[grid]``. Unknown keys are rejected with their dotted name.
"""

from __future__ import annotations

import copy
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, InputError

__all__ = ["SCHEMA", "DEFAULTS", "load_config", "parse_config", "validate"]

_NUM = (int, float)

SCHEMA = {
    "seed": int,
    "threads": int,
    "potential": str,
    "domain": dict,
    "target": dict,
    "grid": {"h": _NUM, "pad": _NUM, "tol": _NUM, "max_iter": int, "node_budget": int},
    "pde": {"tol": _NUM, "max_iter": int},
    "flow": {"T": int, "seed_spacing": _NUM, "dilation": int},
    "chain": {
        "r": _NUM,
        "steps": int,
        "lazy": bool,
        "seed": int,
        "chains": int,
        "start": list,
        "warm_start": dict,
    },
    "diagnostics": {
        "bins": int,
        "checkpoints": list,
        "s": _NUM,
        "n": int,
        "partitions": int,
        "set": dict,
        "family": dict,
        "both_lazy": bool,
        "oracle": dict,
        "volume_samples": int,
        "diameter_factor": _NUM,
    },
}

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "potential": "0",
    "grid": {"h": 0.02, "tol": 1e-8, "max_iter": 100_000},
    "flow": {"T": 50, "seed_spacing": 0.05, "dilation": 3},
    "chain": {"r": 0.2, "steps": 1000, "lazy": False, "chains": 1},
    "diagnostics": {
        "s": 0.1,
        "n": 10_000,
        "partitions": 100,
        "both_lazy": True,
        "diameter_factor": 1.1,
    },
}

_WARM_KEYS = {"region", "M"}
_SET_KEYS = {"normal", "offset"}
_FAMILY_KEYS = {"normal", "offsets"}
_ORACLE_KEYS = {"kind", "states", "r_steps", "lazy", "shape", "t_max"}


def _check_type(name, value, kind):
    if kind is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        want = "number" if kind is _NUM else getattr(kind, "__name__", str(kind))
        raise ConfigError(f"config key '{name}' must be a {want}, got {type(value).__name__}")


def _check_keys(prefix, table, allowed):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        names = ", ".join(f"'{prefix}{k}'" for k in unknown)
        raise ConfigError(f"unknown config key {names}")


def validate(raw):
    """Check ``raw`` against the schema and return it merged with defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    _check_keys("", raw, SCHEMA)
    for key, value in raw.items():
        kind = SCHEMA[key]
        if isinstance(kind, dict):
            _check_type(key, value, dict)
            _check_keys(f"{key}.", value, kind)
            for sub, v in value.items():
                _check_type(f"{key}.{sub}", v, kind[sub])
        else:
            _check_type(key, value, kind)
    chain = raw.get("chain", {})
    if "warm_start" in chain:
        _check_keys("chain.warm_start.", chain["warm_start"], _WARM_KEYS)
    diag = raw.get("diagnostics", {})
    for name, keys in (("set", _SET_KEYS), ("family", _FAMILY_KEYS), ("oracle", _ORACLE_KEYS)):
        if name in diag:
            _check_keys(f"diagnostics.{name}.", diag[name], keys)
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(copy.deepcopy(value))
        else:
            cfg[key] = copy.deepcopy(value)
    return cfg


def parse_config(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return raw


def load_config(path):
    """Read and validate ``path``; returns ``(config, raw)``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    raw = parse_config(text)
    return validate(raw), raw
