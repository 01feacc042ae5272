"""Gate characterization: fidelities, delta calibration, phase-space trajectories."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.constants import hbar
from scipy.optimize import minimize_scalar

from .fidelity import (
    FidelityReport, ideal_gate, joint_thermal_weights, process_fidelity,
)
from .gate import (
    SPIN_LABELS, GateScene, Noise, build_scene, kraus_for_fock, phase_space_observables,
    propagate_motion, spin_echo_channel,
)
from .ion_model import DELTA_REF, DerivedParams, PhysicalConfig

log = logging.getLogger(__name__)


def _metadata(scene: GateScene, **extra) -> dict:
    n = scene.noise
    md = {
        "n_c_cut": scene.n_c_cut, "n_s_cut": scene.n_s_cut,
        "delta": scene.dp.delta, "tau": scene.schedule.tau, "nu": scene.schedule.nu,
        "steps": scene.schedule.steps,
        "eps": n.eps, "intensity": list(n.intensity), "dtau": n.dtau,
        "timing_mode": n.timing_mode,
    }
    md.update(extra)
    return md


def fock_fidelity(scene: GateScene, fock_states, weights=None, U_id=None,
                  optimize_local_z=False, **meta) -> FidelityReport:
    fock_states = list(fock_states)
    echo = spin_echo_channel(scene, fock_states)
    channels = {tuple(k): kraus_for_fock(echo, i) for i, k in enumerate(fock_states)}
    return process_fidelity(channels, U_id if U_id is not None else ideal_gate(),
                            weights, optimize_local_z, _metadata(scene, **meta))


def ground_fidelity(scene: GateScene, **kw) -> FidelityReport:
    return fock_fidelity(scene, [(0, 0)], **kw)


def thermal_fidelity(scene: GateScene, nbar_c: float, nbar_s: float,
                     min_weight: float = 1e-9, **kw) -> FidelityReport:
    """Bose-weighted average over Fock sectors.

    Sectors lighter than ``min_weight`` are skipped; the kept weights are
    renormalized. With both occupations zero this is the ground-state result.
    """
    if nbar_c == 0 and nbar_s == 0:
        rep = ground_fidelity(scene, **kw)
        rep.metadata.update({"nbar_c": 0.0, "nbar_s": 0.0, "kept_mass": 1.0})
        return rep
    weights, info = joint_thermal_weights(nbar_c, nbar_s, scene.n_c_cut, scene.n_s_cut,
                                          min_weight=min_weight)
    keys = sorted(weights)
    return fock_fidelity(scene, keys, weights, nbar_c=nbar_c, nbar_s=nbar_s, **info, **kw)


@dataclass
class Calibration:
    delta: float
    F: float
    samples: list = field(default_factory=list)   # (delta, F) coarse grid
    unimodal: bool = True
    converged: bool = True


def maximize_1d(f: Callable[[float], float], lo: float, hi: float, n_grid: int = 17,
                xtol: float = 1e-6, ftol: float = 1e-6, fine_width: float = 0.0,
                n_fine: int = 13) -> Calibration:
    """Grid bracket, bounded Brent refinement, then an optional fine grid of
    half-width ``fine_width`` around the optimum (for rippled landscapes)."""
    xs = np.linspace(lo, hi, n_grid)
    fs = np.array([f(x) for x in xs])
    samples = list(zip(xs.tolist(), fs.tolist()))
    i = int(np.argmax(fs))
    peaks = [k for k in range(1, n_grid - 1) if fs[k] >= fs[k - 1] and fs[k] >= fs[k + 1]]
    unimodal = len(peaks) <= 1
    atol = xtol * (hi - lo)

    def brent(a, b):
        res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                              options={"xatol": atol})
        return float(res.x), float(-res.fun)

    best_x, best_f = xs[i], fs[i]
    x, fx = brent(xs[max(i - 1, 0)], xs[min(i + 1, n_grid - 1)])
    if fx > best_f:
        best_x, best_f = x, fx
    if fine_width > 0:
        fx_grid = np.linspace(best_x - fine_width, best_x + fine_width, n_fine)
        ff = np.array([f(x) for x in fx_grid])
        j = int(np.argmax(ff))
        x, fx = brent(fx_grid[max(j - 1, 0)], fx_grid[min(j + 1, n_fine - 1)])
        for cand_x, cand_f in ((fx_grid[j], ff[j]), (x, fx)):
            if cand_f > best_f:
                best_x, best_f = cand_x, cand_f
    # a probe two tolerances away must not change F by more than ftol
    probe = f(best_x + 2 * atol)
    converged = abs(probe - best_f) < ftol
    if not unimodal:
        log.warning("fidelity landscape has %d local maxima on the coarse grid; "
                    "returning the best found", len(peaks))
    return Calibration(float(best_x), float(best_f), samples, unimodal, converged)


def calibrate_delta(cfg: PhysicalConfig, dp: DerivedParams, n_c_cut: int = 18,
                    n_s_cut: int = 10, steps: int = 10_000, window=(0.5, 2.0),
                    center: Optional[float] = None, n_grid: int = 17) -> Calibration:
    """Maximize the ground-state fidelity over delta with ``tau = 4 pi / delta``.

    The search window is ``window`` times ``center`` (default: the reference
    operating point ``2 pi 12.2 kHz / sqrt(N)``). F(delta) carries ripples of
    period ~``delta**2 / omega_c`` from the drive phase at the echo flip and
    at the end of the gate, so the final stage scans a few periods finely.
    """
    center = DELTA_REF / math.sqrt(dp.n_ions) if center is None else center
    corr = not math.isclose(dp.nu, dp.omega_c + dp.delta)

    def F(delta):
        scene = build_scene(cfg, dp.with_delta(delta, corr), n_c_cut=n_c_cut,
                            n_s_cut=n_s_cut, steps=steps)
        return ground_fidelity(scene).F

    ripple = center ** 2 / dp.omega_c
    return maximize_1d(F, window[0] * center, window[1] * center, n_grid=n_grid,
                       xtol=2e-5, fine_width=1.5 * ripple, n_fine=25)


@dataclass
class Trajectory:
    """c.o.m. phase-space path in the frame rotating at the c.o.m. frequency.

    ``x_expect`` in metres; ``p_expect`` in kg m/s. ``alpha`` is the complex
    amplitude ``<a_c> exp(i omega_c t)``.
    """

    times: np.ndarray
    x_expect: np.ndarray
    p_expect: np.ndarray
    alpha: np.ndarray
    spin_label: str

    @property
    def loop_radius(self) -> float:
        return float(np.max(np.abs(self.alpha)) / 2)

    def closure(self) -> float:
        """Final distance from the origin relative to the loop radius."""
        r = self.loop_radius
        return float(abs(self.alpha[-1]) / r) if r > 0 else 0.0


def phase_space_trajectory(scene: GateScene, spin_label: str, t_end: Optional[float] = None,
                           record_every: int = 1) -> Trajectory:
    """Record <x>, <p> of the c.o.m. mode over the first echo half, starting in |0,0>."""
    b = SPIN_LABELS.index(spin_label)
    t_end = scene.schedule.tau / 2 if t_end is None else t_end
    n = int(round(t_end / scene.schedule.dt))
    xop, pop = phase_space_observables(scene)
    aop = (xop / scene.dp.l_c + 1j * pop) / 2
    psi = np.zeros((scene.motional_dim, 1), dtype=complex)
    psi[0] = 1.0
    chunk = max(1, record_every)
    times, alphas = [0.0], [0j]
    dt = t_end / n
    k = 0
    while k < n:
        m = min(chunk, n - k)
        psi = propagate_motion(scene, b, k * dt, (k + m) * dt, psi)
        k += m
        t = k * dt
        a = complex(np.vdot(psi[:, 0], aop @ psi[:, 0]))
        times.append(t)
        alphas.append(a * np.exp(1j * scene.omega_c * t))
    alpha = np.array(alphas)
    hbar_over_2l = hbar / (2 * scene.dp.l_c)
    return Trajectory(np.array(times), 2 * scene.dp.l_c * alpha.real,
                      2 * hbar_over_2l * alpha.imag, alpha, spin_label)
