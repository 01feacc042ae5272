"""Experiment configuration files (YAML), strict parsing with line-numbered errors.

Physical inputs in the file use ordinary frequencies in Hz (``*_hz`` keys);
they are converted to angular frequencies when building :class:`PhysicalConfig`.
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass
from typing import Any, Optional

import yaml
from scipy.constants import atomic_mass

from .ion_model import ELECTRON_MASS_U, PhysicalConfig

TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.line = line

    def report(self) -> dict:
        return {"error": "config", "message": str(self), "key": self.key, "line": self.line}


# default values double as the schema: every accepted key appears here
PHYSICS_DEFAULTS = {
    "ion_mass_u": 173.9388664,
    "wavelength_m": 369.5e-9,
    "detuning_hz": 15e12,
    "linewidth_per_s": 1.23e8,
    "trap_freq_hz": 1.0e6,
    "waist_m": 0.5e-6,
    "power_w": 156e-6,
    "depth_hz": 1.6e6,
    "n_ions": 2,
    "qubit_splitting_hz": 12.6e9,
    "mode_shift_correction": True,
}

SIMULATION_DEFAULTS = {
    "n_c_cut": 18,
    "n_s_cut": 10,
    "steps": 10_000,
    "delta_hz": None,            # None: calibrate
    "calibration_window": [0.5, 2.0],
    "eps_m": 0.0,
    "timing_mode": "total",
    "allow_large_cutoff": False,
}

SWEEP_DEFAULTS = {
    "eps_m": [0.0, 7.5e-9, 15e-9, 22.5e-9, 30e-9],
    "lambda": [0.0025, 0.005, 0.01],
    "n_real": 20,
    "dtau_s": [-5e-6, -2.5e-6, 2.5e-6, 5e-6],
    "tau_s": [120e-6, 180e-6, 240e-6, 320e-6, 400e-6],
    "nbar_c": 0.62,
    "nbar_s": 0.23,
    "thermal": True,
    "spin_labels": ["00", "01", "10", "11"],
    "record_every": 10,
}

FOCAL_DEFAULTS = {
    "kinds": ["gaussian", "laguerre_gaussian_l1"],
    "angular_waist": 0.6,
    "extent_m": 1.5e-6,
    "resolution": 121,
    "n_theta": 128,
    "n_phi": 256,
}

TOP_DEFAULTS = {
    "experiment": None,
    "seed": 0,
    "output": None,
    "format": "csv",
    "physics": PHYSICS_DEFAULTS,
    "simulation": SIMULATION_DEFAULTS,
    "sweep": SWEEP_DEFAULTS,
    "focal": FOCAL_DEFAULTS,
}

FORMATS = ("csv", "json")


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e6``-style scientific notation as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    output: str
    format: str
    physics: dict
    simulation: dict
    sweep: dict
    focal: dict

    def resolved(self) -> dict:
        return {
            "experiment": self.experiment, "seed": self.seed, "output": self.output,
            "format": self.format, "physics": dict(self.physics),
            "simulation": dict(self.simulation), "sweep": dict(self.sweep),
            "focal": dict(self.focal),
        }

    def physical_config(self) -> PhysicalConfig:
        p = self.physics
        depth = p["depth_hz"]
        delta = self.simulation["delta_hz"]
        return PhysicalConfig(
            ion_mass=(p["ion_mass_u"] - ELECTRON_MASS_U) * atomic_mass,
            wavelength=p["wavelength_m"],
            detuning=TWO_PI * p["detuning_hz"],
            linewidth=p["linewidth_per_s"],
            trap_freq=TWO_PI * p["trap_freq_hz"],
            waist=p["waist_m"],
            power=p["power_w"],
            depth_override=None if depth is None else TWO_PI * depth,
            n_ions=p["n_ions"],
            qubit_splitting=TWO_PI * p["qubit_splitting_hz"],
            delta=None if delta is None else TWO_PI * delta,
            mode_shift_correction=bool(p["mode_shift_correction"]),
        )


def _key_lines(node, prefix="") -> dict:
    """Map dotted key paths to 1-based line numbers from a composed YAML node."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for knode, vnode in node.value:
            path = f"{prefix}.{knode.value}" if prefix else str(knode.value)
            out[path] = knode.start_mark.line + 1
            out.update(_key_lines(vnode, path))
    return out


def _check_type(path, value, default, lines):
    if default is None or value is None:
        return value
    line = lines.get(path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}", path, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}", path, line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}", path, line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}", path, line)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}", path, line)
        if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"{path}: expected a list of numbers", path, line)
            return [float(v) for v in value]
        return list(value)
    return value


def _merge(defaults: dict, given: dict, prefix: str, lines: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            raise ConfigError(f"unknown key {path!r}", path, lines.get(path))
        d = defaults[key]
        if isinstance(d, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a mapping", path, lines.get(path))
            out[key] = _merge(d, value, path, lines)
        else:
            out[key] = _check_type(path, value, d, lines)
    return out


def parse_config(text: str, experiment_defaults: Optional[dict] = None) -> ExperimentConfig:
    """Parse YAML text. ``experiment_defaults`` (per experiment name) are applied
    beneath the file contents."""
    try:
        node = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}", None,
                          mark.line + 1 if mark else None) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping", None, 1)
    lines = _key_lines(node) if node is not None else {}
    name = data.get("experiment")
    if not isinstance(name, str):
        raise ConfigError("missing required key 'experiment'", "experiment",
                          lines.get("experiment"))
    base = copy.deepcopy(TOP_DEFAULTS)
    if experiment_defaults and name in experiment_defaults:
        for section, vals in experiment_defaults[name].items():
            if isinstance(base.get(section), dict):
                base[section].update(vals)
            else:
                base[section] = vals
    merged = _merge(base, data, "", lines)
    if merged["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}", "format", lines.get("format"))
    if merged["output"] is None:
        merged["output"] = f"results/{name}"
    if not isinstance(merged["seed"], int):
        raise ConfigError("seed must be an integer", "seed", lines.get("seed"))
    if merged["simulation"]["timing_mode"] not in ("total", "midpoint"):
        raise ConfigError("simulation.timing_mode must be 'total' or 'midpoint'",
                          "simulation.timing_mode", lines.get("simulation.timing_mode"))
    return ExperimentConfig(**merged)


def load_config(path, experiment_defaults: Optional[dict] = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, experiment_defaults)
