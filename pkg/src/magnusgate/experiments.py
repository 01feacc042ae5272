"""Named experiments: each turns an :class:`ExperimentConfig` into one table.

Every run writes a primary file (CSV or JSON) and a ``<stem>.config.json``
sidecar with the code version, the resolved configuration and a summary.
Nothing time-dependent is written, so identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .characterize import (
    calibrate_delta, ground_fidelity, phase_space_trajectory, thermal_fidelity,
)
from .config import ExperimentConfig
from .focal_field import (
    BeamProfile, MultimodalProfileError, component_offset, focal_field, pi_suppression,
)
from .gate import SPIN_LABELS, Noise, build_scene
from .ion_model import TWO_PI, derive_params, error_budget, light_shift_depth, mode_structure
from .scans import (
    scan_gate_time, scan_intensity_noise, scan_misalignment, scan_timing,
)

SCHEMA_VERSION = 1


@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    reproduces: str
    run: Callable
    defaults: dict = field(default_factory=dict)


# --- shared set-up -----------------------------------------------------------

def _cutoffs(ec: ExperimentConfig):
    s = ec.simulation
    return s["n_c_cut"], s["n_s_cut"]


def _scene(ec, cfg, dp, noise=Noise()):
    s = ec.simulation
    return build_scene(cfg, dp, noise=noise, n_c_cut=s["n_c_cut"], n_s_cut=s["n_s_cut"],
                       steps=s["steps"], seed=ec.seed,
                       allow_large_cutoff=s["allow_large_cutoff"])


def operating_point(ec: ExperimentConfig):
    """Physical config and derived parameters with delta fixed or calibrated."""
    cfg = ec.physical_config()
    dp = derive_params(cfg)
    s = ec.simulation
    if s["delta_hz"] is not None:
        return cfg, dp, {"delta_source": "config"}
    nc, ns = _cutoffs(ec)
    if nc > 40 and not s["allow_large_cutoff"]:
        _scene(ec, cfg, dp)   # raises the resource guard before a long calibration
    cal = calibrate_delta(cfg, dp, n_c_cut=nc, n_s_cut=ns, steps=s["steps"],
                          window=tuple(s["calibration_window"]))
    dp = dp.with_delta(cal.delta, cfg.mode_shift_correction)
    return cfg, dp, {"delta_source": "calibrated", "calibration_F": cal.F,
                     "calibration_unimodal": cal.unimodal,
                     "calibration_converged": cal.converged}


def _point_summary(dp, info):
    out = {"delta_rad_s": dp.delta, "delta_hz": dp.delta / TWO_PI, "tau_s": dp.tau,
           "nu_rad_s": dp.nu}
    out.update(info)
    return out


# --- experiments -------------------------------------------------------------

_UNITS = {
    "lambdabar": "m", "U0": "rad/s", "U0_tilde": "rad/s", "g": "rad/s/m",
    "g_tilde": "rad/s", "eta_tilde": "1", "omega_tw": "rad/s", "omega_c": "rad/s",
    "omega_s": "rad/s", "l_c": "m", "l_s": "m", "delta": "rad/s", "nu": "rad/s",
    "tau": "s", "mode_shift": "rad/s", "waist": "m", "mass": "kg", "n_ions": "1",
}


def _quantity_rows(items):
    rows = []
    for name, value, unit in items:
        hz = value / TWO_PI if unit == "rad/s" else math.nan
        rows.append((name, float(value), unit, hz))
    return rows


def run_params(ec: ExperimentConfig, threads=None) -> Table:
    cfg = ec.physical_config()
    dp = derive_params(cfg)
    items = [(k, v, _UNITS[k]) for k, v in dp.to_dict().items()]
    ms = mode_structure(cfg)
    items += [("mode_freq_com", ms.frequencies[0], "rad/s"),
              ("mode_freq_stretch", ms.frequencies[1], "rad/s")]
    if cfg.power is not None:
        items.append(("U0_from_power", light_shift_depth(cfg), "rad/s"))
    eb = error_budget(cfg, dp)
    items += [("gamma_ph", eb.gamma_ph, "1/s"), ("delta_AC", eb.delta_AC, "rad/s"),
              ("omega_eff_slope", eb.omega_eff_slope, "rad/s/m")]
    return Table(["quantity", "value", "unit", "value_hz"], _quantity_rows(items),
                 {"depth_source": "override" if cfg.depth_override is not None else "power"})


def run_error_budget(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    cut, steps, sw = _cutoffs(ec), ec.simulation["steps"], ec.sweep
    eb = error_budget(cfg, dp)
    rows = [("gamma_ph", "gaussian", eb.scatter_probability, 0.0, 1, "closed_form")]
    for r in scan_misalignment(cfg, dp, sw["eps_m"], cut, steps, threads).rows:
        rows.append(("eps", repr(r[0]), r[2], 0.0, 1, "simulation"))
    noise = scan_intensity_noise(cfg, dp, sw["lambda"], sw["n_real"], ec.seed, cut, steps,
                                 threads)
    for lam, mean, std, n in noise.summary("lambda", "infidelity"):
        rows.append(("Lambda", repr(lam), mean, std, n, "simulation"))
    timing = scan_timing(cfg, dp, sw["dtau_s"], ec.simulation["timing_mode"], cut, steps,
                         threads)
    for r in timing.rows:
        rows.append(("dtau", repr(r[0]), r[2], 0.0, 1, "simulation"))
    summary = _point_summary(dp, info)
    summary.update({"gamma_ph": eb.gamma_ph, "delta_AC": eb.delta_AC,
                    "mode_shift": eb.mode_shift, "omega_eff_slope": eb.omega_eff_slope,
                    "timing_mode": ec.simulation["timing_mode"]})
    return Table(["source", "setting", "infidelity", "infidelity_std", "samples", "method"],
                 rows, summary)


def run_fidelity_ground(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    rep = ground_fidelity(_scene(ec, cfg, dp, Noise(eps=ec.simulation["eps_m"])))
    return Table(["delta_rad_s", "delta_hz", "tau_s", "F", "infidelity"],
                 [(dp.delta, dp.delta / TWO_PI, dp.tau, rep.F, 1.0 - rep.F)],
                 _point_summary(dp, info))


def run_fidelity_thermal(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    scene = _scene(ec, cfg, dp, Noise(eps=ec.simulation["eps_m"]))
    nc, ns = ec.sweep["nbar_c"], ec.sweep["nbar_s"]
    th = thermal_fidelity(scene, nc, ns)
    F0 = ground_fidelity(scene).F
    summary = _point_summary(dp, info)
    summary.update({k: th.metadata[k] for k in ("kept_mass", "sectors", "tail_c", "tail_s")
                    if k in th.metadata})
    return Table(["nbar_c", "nbar_s", "F_thermal", "F_ground", "difference"],
                 [(nc, ns, th.F, F0, th.F - F0)], summary)


def run_gate_time_scan(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    thermal = (ec.sweep["nbar_c"], ec.sweep["nbar_s"]) if ec.sweep["thermal"] else None
    res = scan_gate_time(cfg, dp, ec.sweep["tau_s"], thermal, _cutoffs(ec),
                         ec.simulation["steps"], threads)
    summary = _point_summary(dp, info)
    summary.update(res.metadata)
    summary["min_F_ground"] = float(np.min(res.column("F_ground")))
    return Table(res.columns, res.rows, summary)


def _scan_table(res, dp, info) -> Table:
    summary = _point_summary(dp, info)
    summary.update(res.metadata)
    return Table(res.columns, res.rows, summary)


def run_misalignment_scan(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    res = scan_misalignment(cfg, dp, ec.sweep["eps_m"], _cutoffs(ec),
                            ec.simulation["steps"], threads)
    return _scan_table(res, dp, info)


def run_intensity_noise_scan(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    res = scan_intensity_noise(cfg, dp, ec.sweep["lambda"], ec.sweep["n_real"], ec.seed,
                               _cutoffs(ec), ec.simulation["steps"], threads)
    t = _scan_table(res, dp, info)
    t.summary["seed"] = ec.seed
    t.summary["per_lambda"] = [
        {"lambda": lam, "mean_infidelity": m, "std_infidelity": s, "n": n}
        for lam, m, s, n in res.summary("lambda", "infidelity")]
    return t


def run_timing_scan(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    res = scan_timing(cfg, dp, ec.sweep["dtau_s"], ec.simulation["timing_mode"],
                      _cutoffs(ec), ec.simulation["steps"], threads)
    return _scan_table(res, dp, info)


def run_trajectories(ec: ExperimentConfig, threads=None) -> Table:
    cfg, dp, info = operating_point(ec)
    scene = _scene(ec, cfg, dp, Noise(eps=ec.simulation["eps_m"]))
    rows, per = [], {}
    for label in ec.sweep["spin_labels"]:
        if label not in SPIN_LABELS:
            raise ValueError(f"unknown spin label {label!r}")
        tr = phase_space_trajectory(scene, label, record_every=ec.sweep["record_every"])
        for t, x, p, a in zip(tr.times, tr.x_expect, tr.p_expect, tr.alpha):
            rows.append((label, float(t), float(x), float(p), float(a.real), float(a.imag)))
        per[label] = {"loop_radius": tr.loop_radius, "closure": tr.closure(),
                      "max_abs_x_m": float(np.max(np.abs(tr.x_expect)))}
    summary = _point_summary(dp, info)
    summary.update({"eps_m": ec.simulation["eps_m"], "per_spin": per,
                    "frame": "rotating at omega_c; alpha = <a_c> exp(i omega_c t)"})
    return Table(["spin_label", "t_s", "x_m", "p_kg_m_s", "alpha_re", "alpha_im"], rows,
                 summary)


def run_focal_field(ec: ExperimentConfig, threads=None) -> Table:
    f = ec.focal
    rows, per = [], {}
    for kind in f["kinds"]:
        prof = BeamProfile(kind=kind, angular_waist=f["angular_waist"],
                           wavelength=ec.physics["wavelength_m"])
        grid = focal_field(prof, extent=f["extent_m"], resolution=f["resolution"],
                           n_theta=f["n_theta"], n_phi=f["n_phi"])
        I = grid.intensities()
        for i, x in enumerate(grid.x):
            for j, z in enumerate(grid.z):
                rows.append((kind, float(x), float(z), float(I["sigma_plus"][i, j]),
                             float(I["sigma_minus"][i, j]), float(I["pi"][i, j]),
                             float(I["total"][i, j])))
        offsets = {}
        for which in ("sigma_plus", "sigma_minus"):
            try:
                offsets[which] = component_offset(grid, which)
                offsets["mode"] = "centroid"
            except MultimodalProfileError:
                offsets[which] = component_offset(grid, which, mode="peak")
                offsets["mode"] = "peak"
        per[kind] = {"offset_sigma_plus_m": offsets["sigma_plus"],
                     "offset_sigma_minus_m": offsets["sigma_minus"],
                     "offset_mode": offsets["mode"],
                     "pi_suppression": pi_suppression(grid),
                     "peak_total": float(I["total"].max())}
    lbar = ec.physics["wavelength_m"] / TWO_PI
    return Table(["kind", "x_m", "z_m", "I_sigma_plus", "I_sigma_minus", "I_pi", "I_total"],
                 rows, {"lambdabar_m": lbar, "per_kind": per,
                        "plane": "lab x-z, propagation along -y"})


def run_calibrate_delta(ec: ExperimentConfig, threads=None) -> Table:
    cfg = ec.physical_config()
    dp = derive_params(cfg)
    nc, ns = _cutoffs(ec)
    _scene(ec, cfg, dp)   # validates cutoffs and step size up front
    cal = calibrate_delta(cfg, dp, n_c_cut=nc, n_s_cut=ns, steps=ec.simulation["steps"],
                          window=tuple(ec.simulation["calibration_window"]))
    ref = ground_fidelity(_scene(ec, cfg, dp)).F
    rows = [(d, d / TWO_PI, F, 1.0 - F) for d, F in cal.samples]
    return Table(["delta_rad_s", "delta_hz", "F", "infidelity"], rows, {
        "delta_star_rad_s": cal.delta, "delta_star_hz": cal.delta / TWO_PI,
        "F_star": cal.F, "reference_delta_rad_s": dp.delta, "F_reference": ref,
        "ratio_to_reference": cal.delta / dp.delta, "unimodal": cal.unimodal,
        "converged": cal.converged})


REGISTRY = (
    Experiment("params", "closed-form derived parameters and rate estimates",
               "Table 1 / main-text numbers", run_params),
    Experiment("error-budget", "infidelity per error source (gamma_ph, eps, Lambda, dtau)",
               "Table 1", run_error_budget,
               {"sweep": {"eps_m": [30e-9], "lambda": [0.005], "dtau_s": [5e-6, -5e-6]}}),
    Experiment("fidelity-ground", "process fidelity with both modes in the ground state",
               "main-text F = 0.999988", run_fidelity_ground),
    Experiment("fidelity-thermal", "Bose-averaged process fidelity",
               "main-text F_th = 0.999989", run_fidelity_thermal),
    Experiment("gate-time-scan", "fidelity versus gate time at recalibrated delta",
               "Fig. 2(a)", run_gate_time_scan),
    Experiment("misalignment-scan", "fidelity versus tweezer misalignment eps",
               "Fig. 2(b)", run_misalignment_scan),
    Experiment("intensity-noise-scan", "fidelity under per-half intensity noise",
               "Fig. 2(b)", run_intensity_noise_scan),
    Experiment("timing-scan", "fidelity versus gate-duration error",
               "Table 1", run_timing_scan),
    Experiment("trajectories", "c.o.m. phase-space paths per spin state over tau/2",
               "Fig. S-2", run_trajectories),
    Experiment("focal-field", "focal-plane sigma+/sigma-/pi intensities",
               "Fig. 1 (bottom) / Fig. S-1", run_focal_field),
    Experiment("calibrate-delta", "ground-state fidelity versus delta and its maximum",
               "main-text delta = 2 pi 12.2 kHz / sqrt(N)", run_calibrate_delta),
)

EXPERIMENTS = {e.name: e for e in REGISTRY}
EXPERIMENT_DEFAULTS = {e.name: e.defaults for e in REGISTRY if e.defaults}


def listing() -> str:
    w = max(len(e.name) for e in REGISTRY)
    return "\n".join(f"{e.name:<{w}}  {e.description} [{e.reproduces}]" for e in REGISTRY)


# --- output ------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def render_csv(ec: ExperimentConfig, table: Table) -> str:
    cfg = json.dumps(_clean(ec.resolved()), sort_keys=True, separators=(",", ":"))
    lines = [f"# magnusgate {__version__}", f"# schema_version {SCHEMA_VERSION}",
             f"# experiment {ec.experiment}", f"# config {cfg}", ",".join(table.columns)]
    lines += [",".join(_cell(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def render_json(ec: ExperimentConfig, table: Table) -> str:
    return _dumps({
        "version": __version__, "schema_version": SCHEMA_VERSION,
        "experiment": ec.experiment, "config": ec.resolved(), "columns": table.columns,
        "rows": [dict(zip(table.columns, r)) for r in table.rows], "summary": table.summary,
    })


def output_paths(ec: ExperimentConfig):
    stem = Path(ec.output)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    return stem.with_name(stem.name + "." + ec.format), stem.with_name(stem.name + ".config.json")


def write_outputs(ec: ExperimentConfig, table: Table):
    """Write the primary file and sidecar; both appear only if both were written."""
    primary, sidecar = output_paths(ec)
    body = render_csv(ec, table) if ec.format == "csv" else render_json(ec, table)
    side = _dumps({"version": __version__, "schema_version": SCHEMA_VERSION,
                   "experiment": ec.experiment, "primary": primary.name,
                   "columns": table.columns, "rows": len(table.rows),
                   "config": ec.resolved(), "summary": table.summary})
    primary.parent.mkdir(parents=True, exist_ok=True)
    temps = []
    try:
        for text, target in ((body, primary), (side, sidecar)):
            fd, tmp = tempfile.mkstemp(dir=target.parent, prefix="." + target.name, suffix=".tmp")
            temps.append(tmp)
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        os.replace(temps[0], primary)
        try:
            os.replace(temps[1], sidecar)
        except BaseException:
            primary.unlink()
            raise
    finally:
        for tmp in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return primary, sidecar


def run_experiment(ec: ExperimentConfig, threads: Optional[int] = None) -> Table:
    if ec.experiment not in EXPERIMENTS:
        raise KeyError(ec.experiment)
    return EXPERIMENTS[ec.experiment].run(ec, threads)
