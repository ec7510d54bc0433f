"""Shared configuration: built-in defaults, TOML loading and section access.

One file carries every subcommand's section; values given in a file are
deep-merged over the defaults below.  Entries tagged "calibration" in the
README are model inputs chosen to reproduce the measured error scale, not
measured quantities.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .atom import AtomSpec, BranchingTable, SplittingTable, Term, TERM_NAMES
from .dynamics import LaserField

CONFIG_ENV = "IONSPAM_CONFIG"


class ConfigError(ValueError):
    """Missing or malformed configuration entry."""


DEFAULTS: dict[str, Any] = {
    "seed": 133,
    "workers": 1,
    "atom": {
        "lifetimes": {"P1/2": 7.9e-9, "D3/2": 80.0, "P3/2": 10e-9, "D5/2": 30.0},
        "splittings": {
            "S1_2": 9925.0,
            "P1_2": 1840.0,
            "D3_2": 937.0,
            "P3_2": 623.0,
            "D5_2": 83.0,
            "isotope_455": 358.0,
            "isotope_614": 216.0,
            "inverted": True,
        },
        "branching": {
            "P3/2": {"S1/2": 0.74, "D5/2": 0.23, "D3/2": 0.03},
            "P1/2": {"S1/2": 0.73, "D3/2": 0.27},
        },
    },
    "lasers": {
        "493c": {"lower": ["S1/2", 1], "upper": ["P1/2", 0], "saturation": 1.0},
        "493op": {"lower": ["S1/2", 1], "upper": ["P1/2", 1], "saturation": 0.3},
        "650c": {"lower": ["D3/2", 1], "upper": ["P1/2", 0], "saturation": 1.0},
        "650sb": {"lower": ["D3/2", 2], "upper": ["P1/2", 1], "saturation": 1.0},
        "455": {"lower": ["S1/2", 1], "upper": ["P3/2", 2], "saturation": 0.1, "linewidth": 32.0},
        "585": {"lower": ["D3/2", 2], "upper": ["P3/2", 2], "saturation": 1.0},
        "614": {"lower": ["D5/2", 3], "upper": ["P3/2", 2], "saturation": 1.0},
    },
    "pumping": {
        "duration": 20e-6,
        "lasers": ["493c", "493op", "650c", "650sb"],
        "start": "S1/2:F=1",
    },
    "shelving": {
        "duration": 50e-6,
        "scheme": "with-repumps-pi-pol",
        "start": "qubit1",
        "trials": 1_000_000,
        "mode": "jump",
    },
    "cycling": {
        "duration": 3.0e-3,
        "lasers": ["493c", "650c"],
        "bright_counts": 10.0,
        "background_counts": 0.5,
        "threshold": -1,
        "trials": 200_000,
    },
    "readout": {
        "bright_mean": 39.0,
        "dark_mean": 1.0,
        "window": 4.5e-3,
        "lifetime": 30.0,
        "threshold": 12,
    },
    "pulse": {
        "rabi_khz": 57.0,
        "detuning_khz": 0.0,
        "area_scale": 1.0,
        "scan": "detuning",
        "points": 201,
        "span_khz": 200.0,
        "scan_rabi_khz": 35.0,
    },
    "spam": {
        "trials_0": 156_581,
        "trials_1": 157_211,
        "block": 200,
        "eps_cp": 1e-4,
        "background_flip": 3e-5,
        "mode": "jump",
    },
    "spectroscopy": {
        "kind": "shelve-455",
        "trials": 200,
        "duration": 50e-6,
        "noise": True,
        "shelve-455": {"start_mhz": 2350.0, "stop_mhz": 3500.0, "step_mhz": 5.0, "saturation": 0.002, "half_window_mhz": 150.0},
        "deshelve-614": {"start_mhz": -200.0, "stop_mhz": 150.0, "step_mhz": 2.0, "saturation": 0.01, "half_window_mhz": 50.0},
    },
}


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) and k not in ("branching",):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | os.PathLike | None = None) -> dict:
    """Defaults merged with ``path`` (or ``$IONSPAM_CONFIG`` when path is None)."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return deep_merge(DEFAULTS, data)


def section(cfg: Mapping, name: str) -> Mapping:
    try:
        return cfg[name]
    except KeyError:
        raise ConfigError(f"missing config section [{name}]") from None


def get(sec: Mapping, key: str, name: str = "?"):
    try:
        return sec[key]
    except KeyError:
        raise ConfigError(f"missing config key {name}.{key}") from None


def config_hash(cfg: Mapping) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def atom_from_config(cfg: Mapping) -> AtomSpec:
    sec = section(cfg, "atom")
    lifetimes = get(sec, "lifetimes", "atom")
    terms = tuple(Term(n, None if n == "S1/2" else float(lifetimes[n])) for n in TERM_NAMES)
    spl = SplittingTable(**get(sec, "splittings", "atom"))
    br = BranchingTable({k: dict(v) for k, v in get(sec, "branching", "atom").items()})
    return AtomSpec(terms, spl, br)


def laser_from_config(cfg: Mapping, label: str, **overrides) -> LaserField:
    lasers = section(cfg, "lasers")
    if label not in lasers:
        raise ConfigError(f"missing config key lasers.{label}")
    entry = dict(lasers[label])
    entry.update(overrides)
    try:
        return LaserField(
            label=label,
            lower=(entry["lower"][0], int(entry["lower"][1])),
            upper=(entry["upper"][0], int(entry["upper"][1])),
            detuning=float(entry.get("detuning", 0.0)),
            saturation=float(entry.get("saturation", 1.0)),
            polarization=entry.get("polarization", "iso"),
            window=tuple(entry.get("window", (0.0, float("inf")))),
            linewidth=float(entry.get("linewidth", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key lasers.{label}.{exc.args[0]}") from None


def write_example(path: str | os.PathLike) -> None:
    """Write the defaults as an editable TOML file."""
    Path(path).write_text(to_toml(DEFAULTS))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v) if v == v and abs(v) != float("inf") else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))


def _toml_key(k: str) -> str:
    return k if k.replace("_", "").isalnum() else json.dumps(k)


def to_toml(cfg: Mapping, prefix: str = "") -> str:
    lines = []
    tables = []
    for k, v in cfg.items():
        if isinstance(v, Mapping):
            tables.append((k, v))
        else:
            lines.append(f"{_toml_key(k)} = {_toml_value(v)}")
    out = "\n".join(lines)
    for k, v in tables:
        name = f"{prefix}.{_toml_key(k)}" if prefix else _toml_key(k)
        body = to_toml(v, name)
        out += f"\n\n[{name}]\n" + body if any(not isinstance(x, Mapping) for x in v.values()) else "\n" + body
    return out.strip() + "\n"
