"""Full-Hamiltonian simulation of the tweezer phase gate.

The simulated Hamiltonian is ``H(t) = H0 + A(t) V`` with ``H0`` the two
axial modes and ``V`` the fourth-order tweezer polynomial on both ions. ``V``
is diagonal in the qubit basis, so each of the four spin branches evolves
under its own motional operator ``V_b`` (dimension ``(n_c+1)(n_s+1)``).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .hilbert import (
    SIGMA_X, HilbertLayout, Operator, StateVector, is_hermitian, ladder_ops, kron,
)
from .ion_model import DerivedParams, PhysicalConfig, potential_polynomial

log = logging.getLogger(__name__)

SPIN_LABELS = ("00", "01", "10", "11")
# sigma_z eigenvalue per qubit state: |0> -> +1, |1> -> -1
SPIN_SIGNS = {"00": (1, 1), "01": (1, -1), "10": (-1, 1), "11": (-1, -1)}
FLIP = {0: 3, 1: 2, 2: 1, 3: 0}     # X(x)X on branch index
STEP_SANITY = 0.5


class StepSizeError(ArithmeticError):
    pass


class TruncationWarning(UserWarning):
    pass


def amplitude(t, nu: float, phi: float = 0.0):
    """Tweezer intensity envelope ``(1 - cos(nu t + phi)) / 2``."""
    return 0.5 * (1.0 - np.cos(nu * np.asarray(t) + phi))


@dataclass(frozen=True)
class Noise:
    eps: float = 0.0                 # misalignment, m (same on both ions)
    intensity: tuple = (0.0, 0.0)    # fractional amplitude error per echo half
    dtau: float = 0.0                # timing error, s
    timing_mode: str = "total"       # "total" or "midpoint"


@dataclass(frozen=True)
class Schedule:
    tau: float
    nu: float
    phi: float = 0.0
    steps: int = 10_000              # trotter steps over the nominal gate time

    @property
    def dt(self) -> float:
        return self.tau / self.steps


@dataclass
class GateScene:
    layout: HilbertLayout
    dp: DerivedParams
    schedule: Schedule
    noise: Noise
    omega_c: float
    omega_s: float
    V_branch: list                  # four motional matrices, order SPIN_LABELS
    seed: int = 0
    _eig: list = field(default=None, repr=False)
    _steps: dict = field(default_factory=dict, repr=False)

    @property
    def n_c_cut(self) -> int:
        return self.layout.dims[2] - 1

    @property
    def n_s_cut(self) -> int:
        return self.layout.dims[3] - 1

    @property
    def motional_dim(self) -> int:
        return self.layout.dims[2] * self.layout.dims[3]

    def motional_energies(self) -> np.ndarray:
        nc = np.arange(self.n_c_cut + 1)
        ns = np.arange(self.n_s_cut + 1)
        return (self.omega_c * nc[:, None] + self.omega_s * ns[None, :]).reshape(-1)

    def H0(self) -> Operator:
        e = self.motional_energies()
        return Operator(self.layout, np.diag(np.tile(e, 4)).astype(complex), hermitian=True)

    def V(self) -> Operator:
        return Operator(self.layout, scipy.linalg.block_diag(*self.V_branch), hermitian=True)

    def eig(self):
        """Cached eigendecompositions ``(D_b, W_b)`` of each branch operator."""
        if self._eig is None:
            self._eig = [scipy.linalg.eigh(v) for v in self.V_branch]
        return self._eig

    def replace(self, **changes) -> "GateScene":
        return replace(self, _eig=None, _steps={}, **changes)

    def step_matrix(self, branch: int, dt: float) -> np.ndarray:
        """Free evolution over ``dt`` expressed in the eigenbasis of ``V_b``."""
        key = (branch, round(dt * 1e18))      # attosecond resolution
        M = self._steps.get(key)
        if M is None:
            D, W = self.eig()[branch]
            full = np.exp(-1j * self.motional_energies() * dt)
            M = W.conj().T @ (full[:, None] * W)
            if len(self._steps) > 64:
                self._steps.clear()
            self._steps[key] = M
        return M


def position_operators(dp: DerivedParams, n_c_cut: int, n_s_cut: int, b=None):
    """Ion position operators on the motional space, ``x_i = sum_m l_m b_im (a_m + a_m^dag)``."""
    if b is None:
        r = 1 / math.sqrt(2)
        b = np.array([[r, -r], [r, r]])
    ac, _ = ladder_ops(n_c_cut)
    as_, _ = ladder_ops(n_s_cut)
    qc = np.kron(ac + ac.conj().T, np.eye(n_s_cut + 1))
    qs = np.kron(np.eye(n_c_cut + 1), as_ + as_.conj().T)
    return [dp.l_c * b[i, 0] * qc + dp.l_s * b[i, 1] * qs for i in range(2)]


def branch_operators(dp: DerivedParams, eps: float, n_c_cut: int, n_s_cut: int):
    """Tweezer polynomial (orders 1-4, constant dropped) for each spin branch."""
    poly = potential_polynomial(dp, eps)
    xs = position_operators(dp, n_c_cut, n_s_cut)
    powers = []
    for x in xs:
        p = [None, x]
        for _ in range(3):
            p.append(p[-1] @ x)
        powers.append(p)
    out = []
    for label in SPIN_LABELS:
        v = np.zeros_like(xs[0])
        for ion, s in enumerate(SPIN_SIGNS[label]):
            c = poly.coeffs(s)
            for k in range(1, 5):
                v = v + c[k] * powers[ion][k]
        out.append(0.5 * (v + v.conj().T))
    return out


def build_scene(cfg: PhysicalConfig, dp: DerivedParams, noise: Noise = Noise(),
                n_c_cut: int = 18, n_s_cut: int = 10, steps: int = 10_000,
                seed: int = 0, allow_large_cutoff: bool = False) -> GateScene:
    if n_c_cut > 40 and not allow_large_cutoff:
        raise ResourceWarning(
            f"Fock cutoff {n_c_cut} requires allow_large_cutoff=True (large dense propagation)")
    if n_c_cut > 40:
        warnings.warn(f"large Fock cutoff n_c={n_c_cut}: slow dense propagation", RuntimeWarning)
    layout = HilbertLayout.gate(n_c_cut, n_s_cut)
    V = branch_operators(dp, noise.eps, n_c_cut, n_s_cut)
    for v in V:
        if not is_hermitian(v):
            raise ArithmeticError("branch operator is not Hermitian")
    sched = Schedule(tau=dp.tau, nu=dp.nu, steps=steps)
    return GateScene(layout=layout, dp=dp, schedule=sched, noise=noise,
                     omega_c=dp.omega_c, omega_s=dp.omega_s, V_branch=V, seed=seed)


def check_step_size(scene: GateScene, scale: float = 1.0):
    """``dt * max|eig(A V)|`` must stay below 0.5; ``H0`` is applied exactly."""
    vmax = max(np.max(np.abs(d)) for d, _ in scene.eig()) * abs(scale)
    r = scene.schedule.dt * vmax
    if r >= STEP_SANITY:
        raise StepSizeError(f"dt*max|eig(V)| = {r:.3f} >= {STEP_SANITY}; use more steps")
    return r


def _branch_columns(states: np.ndarray, layout: HilbertLayout) -> np.ndarray:
    """(dim, k) -> (4, motional_dim, k)."""
    return states.reshape(4, -1, states.shape[-1])


def propagate_motion(scene: GateScene, branch: int, t0: float, t1: float,
                     psi: np.ndarray, scale: float = 1.0, method: str = "strang") -> np.ndarray:
    """Evolve motional columns ``psi`` (motional_dim, k) under branch ``branch``.

    ``strang``: exp(-i H0 dt/2) W exp(-i A D dt) W^dag exp(-i H0 dt/2) per step,
    worked in the eigenbasis of V so each step costs one dense product.
    ``strang4``: fourth-order triple-jump composition of the same step (3x cost).
    ``direct``: exact exponential of H0 + A(t_mid) V per step.
    """
    dt_nom = scene.schedule.dt
    n = max(1, int(round((t1 - t0) / dt_nom)))
    if abs(n * dt_nom - (t1 - t0)) > 1e-9 * scene.schedule.tau:
        n = max(1, int(math.ceil((t1 - t0) / dt_nom)))
    dt = (t1 - t0) / n
    nu, phi = scene.schedule.nu, scene.schedule.phi
    mids = t0 + (np.arange(n) + 0.5) * dt
    amps = amplitude(mids, nu, phi) * scale
    E = scene.motional_energies()
    D, W = scene.eig()[branch]
    if dt * np.max(np.abs(D)) * max(1.0, abs(scale)) >= STEP_SANITY:
        raise StepSizeError("step too large for the tweezer operator; increase steps")
    psi = np.asarray(psi, dtype=complex)
    if method == "direct":
        H0 = np.diag(E)
        V = scene.V_branch[branch]
        for a in amps:
            U = _hexpm(H0 + a * V, dt)
            psi = U @ psi
        return psi
    if method == "strang4":
        return _yoshida(scene, branch, t0, n, dt, psi, scale)
    if method != "strang":
        raise ValueError(f"unknown method {method!r}")
    half = np.exp(-0.5j * E * dt)[:, None]
    Wd = W.conj().T
    M = scene.step_matrix(branch, dt)
    phases = np.exp(-1j * np.outer(amps, D) * dt)
    phi_ = Wd @ (half * psi)
    phi_ = phases[0][:, None] * phi_
    for k in range(1, n):
        phi_ = phases[k][:, None] * (M @ phi_)
    return half * (W @ phi_)


_Y1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Y0 = 1.0 - 2.0 * _Y1


def _yoshida(scene, branch, t0, n, dt, psi, scale):
    """Fourth-order triple-jump composition of the Strang step.

    Each sub-step of length ``w dt`` samples A at its own midpoint (time runs
    backwards during the negative middle sub-step); adjacent free halves merge.
    """
    nu, phi = scene.schedule.nu, scene.schedule.phi
    E = scene.motional_energies()
    D, W = scene.eig()[branch]
    h = np.array([_Y1, _Y0, _Y1]) * dt
    starts = np.array([0.0, _Y1, _Y1 + _Y0]) * dt
    mids = t0 + (np.arange(n)[:, None] * dt + starts[None, :] + 0.5 * h[None, :])
    phases = np.exp(-1j * (amplitude(mids, nu, phi) * scale)[..., None] * D * h[None, :, None])
    M_in = scene.step_matrix(branch, 0.5 * (_Y1 + _Y0) * dt)
    M_out = scene.step_matrix(branch, _Y1 * dt)
    x = W.conj().T @ (np.exp(-0.5j * E * h[0])[:, None] * psi)
    for k in range(n):
        if k:
            x = M_out @ x
        p = phases[k]
        x = p[0][:, None] * x
        x = p[1][:, None] * (M_in @ x)
        x = p[2][:, None] * (M_in @ x)
    return np.exp(-0.5j * E * h[2])[:, None] * (W @ x)


def _hexpm(h, dt):
    w, v = scipy.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def propagate(scene: GateScene, t0: float, t1: float, states: Sequence[StateVector],
              scale: float = 1.0, method: str = "strang") -> list:
    """Propagate full-layout states from ``t0`` to ``t1``."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    cols = np.stack([s.data for s in states], axis=-1)
    blocks = _branch_columns(cols, scene.layout)
    out = np.empty_like(blocks)
    for b in range(4):
        if np.any(blocks[b]):
            out[b] = propagate_motion(scene, b, t0, t1, blocks[b], scale, method)
        else:
            out[b] = 0
    flat = out.reshape(scene.layout.dim, -1)
    return [StateVector(scene.layout, flat[:, k]) for k in range(flat.shape[1])]


def xx_operator(layout: HilbertLayout) -> Operator:
    return kron(layout, [SIGMA_X, SIGMA_X, None, None])


def echo_times(scene: GateScene):
    """(t_mid, t_end) of the spin-echo sequence with the configured timing error."""
    tau = scene.schedule.tau
    dtau = scene.noise.dtau
    if scene.noise.timing_mode == "total":
        return (tau + dtau) / 2, tau + dtau
    if scene.noise.timing_mode == "midpoint":
        return tau / 2 + dtau, tau
    raise ValueError(f"unknown timing mode {scene.noise.timing_mode!r}")


@dataclass
class EchoResult:
    """Motional unitaries of the echoed gate per spin branch.

    ``columns[b]`` has shape (motional_dim, k): the final motional state of
    branch ``b`` for each requested initial Fock index. The spin label is
    unchanged because X(x)X is applied twice.
    """

    columns: np.ndarray              # (4, motional_dim, k)
    fock_indices: list               # motional flat indices of the inputs


def spin_echo_channel(scene: GateScene, fock_states: Optional[Sequence] = None,
                      method: str = "strang") -> EchoResult:
    """Run ``X U(t_mid, t_end) X U(0, t_mid)`` for the four spin states and given Fock inputs.

    ``fock_states`` is a list of ``(n_c, n_s)``; ``None`` means all motional states.
    """
    dims = scene.layout.dims
    n_mot = scene.motional_dim
    if fock_states is None:
        idx = list(range(n_mot))
    else:
        idx = []
        for nc, ns in fock_states:
            if not (0 <= nc < dims[2] and 0 <= ns < dims[3]):
                raise ValueError(f"Fock state {(nc, ns)} outside cutoffs")
            idx.append(nc * dims[3] + ns)
    t_mid, t_end = echo_times(scene)
    xi1, xi2 = scene.noise.intensity
    cols = np.zeros((4, n_mot, len(idx)), dtype=complex)
    cols[:, idx, np.arange(len(idx))] = 1.0
    out = np.empty_like(cols)
    for b in range(4):
        first = propagate_motion(scene, b, 0.0, t_mid, cols[b], 1.0 + xi1, method)
        out[b] = propagate_motion(scene, FLIP[b], t_mid, t_end, first, 1.0 + xi2, method)
    return EchoResult(columns=out, fock_indices=idx)


def kraus_for_fock(echo: EchoResult, k: int) -> np.ndarray:
    """Kraus set ``K[m]`` (4x4, diagonal in spin) for input Fock column ``k``."""
    c = echo.columns[:, :, k]                 # (spin, m)
    K = np.zeros((c.shape[1], 4, 4), dtype=complex)
    K[:, np.arange(4), np.arange(4)] = c.T
    return K


def phase_space_observables(scene: GateScene):
    """c.o.m. quadratures ``x = l_c (a + a^dag)`` and ``p = i (a^dag - a) hbar / (2 l_c)``
    as motional matrices; ``p`` is returned in units of ``hbar / (2 l_c)``."""
    ac, adag = ladder_ops(scene.n_c_cut)
    I_s = np.eye(scene.n_s_cut + 1)
    x = scene.dp.l_c * np.kron(ac + adag, I_s)
    p = np.kron(1j * (adag - ac), I_s)
    return x, p
