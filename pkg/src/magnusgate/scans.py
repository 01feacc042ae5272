"""Parameter scans of the gate fidelity (misalignment, intensity noise, timing, gate time)."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .characterize import calibrate_delta, ground_fidelity, thermal_fidelity
from .gate import Noise, build_scene
from .ion_model import DerivedParams, PhysicalConfig, derive_params

THREADS_ENV = "MAGNUSGATE_THREADS"


@dataclass
class ScanResult:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    seed: Optional[int] = None
    wall_time: float = 0.0

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def summary(self, key: str, value: str) -> list:
        """Mean and standard deviation of ``value`` grouped by ``key``."""
        keys = self.column(key)
        vals = self.column(value)
        out = []
        for k in dict.fromkeys(keys.tolist()):
            sel = vals[keys == k]
            out.append((k, float(np.mean(sel)), float(np.std(sel)), int(sel.size)))
        return out


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _pmap(fn: Callable, items: Sequence, threads: Optional[int]) -> list:
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _ground(cfg, dp, noise, cutoffs, steps):
    scene = build_scene(cfg, dp, noise=noise, n_c_cut=cutoffs[0], n_s_cut=cutoffs[1],
                        steps=steps)
    return ground_fidelity(scene).F


def scan_misalignment(cfg: PhysicalConfig, dp: DerivedParams, eps_list: Iterable[float],
                      cutoffs=(18, 10), steps: int = 10_000,
                      threads: Optional[int] = None) -> ScanResult:
    t0 = time.perf_counter()
    eps_list = [float(e) for e in eps_list]
    Fs = _pmap(lambda e: _ground(cfg, dp, Noise(eps=e), cutoffs, steps), eps_list, threads)
    rows = [(e, F, 1.0 - F) for e, F in zip(eps_list, Fs)]
    return ScanResult("misalignment", ["eps_m", "F", "infidelity"], rows,
                      wall_time=time.perf_counter() - t0)


def noise_draws(seed: int, realization: int, lam: float) -> tuple:
    """Per-half amplitude factors for one realization; independent of scan order."""
    rng = np.random.default_rng([int(seed), int(realization)])
    xi = rng.standard_normal(2)
    return float(lam * xi[0]), float(lam * xi[1])


def scan_intensity_noise(cfg: PhysicalConfig, dp: DerivedParams, lambdas: Iterable[float],
                         n_real: int = 20, seed: int = 0, cutoffs=(18, 10),
                         steps: int = 10_000, threads: Optional[int] = None) -> ScanResult:
    """One Gaussian intensity factor ``1 + xi`` per echo half, ``xi ~ N(0, lambda)``."""
    t0 = time.perf_counter()
    jobs = [(float(lam), r) for lam in lambdas for r in range(n_real)]

    def run(job):
        lam, r = job
        xi = noise_draws(seed, r, lam)
        return lam, r, xi, _ground(cfg, dp, Noise(intensity=xi), cutoffs, steps)

    rows = [(lam, r, xi[0], xi[1], F, 1.0 - F) for lam, r, xi, F in _pmap(run, jobs, threads)]
    res = ScanResult("intensity_noise",
                     ["lambda", "realization", "xi_first", "xi_second", "F", "infidelity"],
                     rows, seed=seed, wall_time=time.perf_counter() - t0)
    res.metadata["n_real"] = n_real
    return res


def scan_timing(cfg: PhysicalConfig, dp: DerivedParams, dtau_list: Iterable[float],
                mode: str = "total", cutoffs=(18, 10), steps: int = 10_000,
                threads: Optional[int] = None) -> ScanResult:
    """Gate duration ``tau + dtau`` (``mode='total'``) or echo flip moved by ``dtau``
    (``mode='midpoint'``); drive frequency and detuning unchanged."""
    t0 = time.perf_counter()
    dtau_list = [float(d) for d in dtau_list]
    Fs = _pmap(lambda d: _ground(cfg, dp, Noise(dtau=d, timing_mode=mode), cutoffs, steps),
               dtau_list, threads)
    rows = [(d, F, 1.0 - F) for d, F in zip(dtau_list, Fs)]
    res = ScanResult("timing", ["dtau_s", "F", "infidelity"], rows,
                     wall_time=time.perf_counter() - t0)
    res.metadata["timing_mode"] = mode
    return res


def scan_gate_time(cfg: PhysicalConfig, dp: DerivedParams, tau_list: Iterable[float],
                   thermal: Optional[tuple] = (0.62, 0.23), cutoffs=(18, 10),
                   steps: int = 10_000, threads: Optional[int] = None,
                   calibration_window=(0.97, 1.03)) -> ScanResult:
    """Fidelity versus gate time.

    For each target ``tau`` the depth is rescaled from the reference ``dp`` so the
    entangling phase is kept (depth proportional to 1/tau), then delta is
    recalibrated in a narrow window around ``4 pi / tau_target``.
    """
    t0 = time.perf_counter()
    tau_list = [float(t) for t in tau_list]
    cal_ref = dp.delta

    def run(tau_target):
        scale = dp.tau / tau_target
        c = cfg.replace(depth_override=dp.U0_tilde * scale, power=None)
        d = derive_params(c)
        center = cal_ref * scale
        cal = calibrate_delta(c, d, n_c_cut=cutoffs[0], n_s_cut=cutoffs[1], steps=steps,
                              window=calibration_window, center=center, n_grid=7)
        d = d.with_delta(cal.delta, c.mode_shift_correction)
        F_th = math.nan
        if thermal is not None:
            scene = build_scene(c, d, n_c_cut=cutoffs[0], n_s_cut=cutoffs[1], steps=steps)
            F_th = thermal_fidelity(scene, *thermal).F
        return (tau_target, d.tau, cal.delta, d.U0_tilde, cal.F, 1.0 - cal.F, F_th)

    rows = _pmap(run, tau_list, threads)
    res = ScanResult("gate_time",
                     ["tau_target_s", "tau_s", "delta_rad_s", "U0_tilde_rad_s", "F_ground",
                      "infidelity_ground", "F_thermal"], rows,
                     wall_time=time.perf_counter() - t0)
    if thermal is not None:
        res.metadata.update({"nbar_c": thermal[0], "nbar_s": thermal[1]})
    return res
