"""Trap, tweezer and ion-crystal parameters.

All frequencies and energies are angular frequencies in rad/s (hbar = 1),
lengths in metres, times in seconds.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import constants as sc

TWO_PI = 2 * math.pi
ELECTRON_MASS_U = sc.m_e / sc.atomic_mass
YB174_MASS = (173.9388664 - ELECTRON_MASS_U) * sc.atomic_mass
YB171_MASS = (170.9363302 - ELECTRON_MASS_U) * sc.atomic_mass

# reference operating point for the detuning, before the 1/sqrt(N) scaling
DELTA_REF = TWO_PI * 12.2e3


class PhysicsRejection(ValueError):
    """Configuration is physically invalid (e.g. tweezer too tight to trap)."""


@dataclass(frozen=True)
class PhysicalConfig:
    ion_mass: float = YB174_MASS
    wavelength: float = 369.5e-9
    detuning: float = TWO_PI * 15e12
    linewidth: float = 1.23e8
    trap_freq: float = TWO_PI * 1e6
    waist: float = 0.5e-6
    power: Optional[float] = 156e-6
    depth_override: Optional[float] = None
    n_ions: int = 2
    qubit_splitting: float = TWO_PI * 12.6e9
    delta: Optional[float] = None
    mode_shift_correction: bool = True

    def validate(self):
        for name in ("ion_mass", "wavelength", "detuning", "linewidth", "trap_freq",
                     "waist", "qubit_splitting"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise PhysicsRejection(f"{name} must be positive and finite, got {v!r}")
        if self.n_ions < 1:
            raise PhysicsRejection("n_ions must be >= 1")
        if self.power is None and self.depth_override is None:
            raise PhysicsRejection("either power or depth_override is required")
        if self.depth_override is not None and not self.depth_override > 0:
            raise PhysicsRejection("depth_override must be a positive depth (rad/s)")
        if self.power is not None and self.depth_override is None and not self.power > 0:
            raise PhysicsRejection("power must be positive")
        if self.delta is not None and not self.delta > 0:
            raise PhysicsRejection("delta must be positive")
        lbar = self.wavelength / TWO_PI
        if self.waist <= 2 * lbar:
            raise PhysicsRejection(
                f"waist {self.waist:.3e} m <= 2*lambdabar = {2 * lbar:.3e} m: "
                "tweezer curvature is anti-trapping")
        if self.detuning < 100 * self.linewidth:
            raise PhysicsRejection("detuning must be far larger than the linewidth")

    def replace(self, **changes) -> "PhysicalConfig":
        d = asdict(self)
        d.update(changes)
        return PhysicalConfig(**d)


@dataclass(frozen=True)
class ModeStructure:
    frequencies: np.ndarray      # (com, stretch)
    vectors: np.ndarray          # b[ion, mode]
    lengths: np.ndarray          # sqrt(hbar / 2 m w)


@dataclass(frozen=True)
class DerivedParams:
    lambdabar: float
    U0: float            # peak depth, no Magnus offset
    U0_tilde: float
    g: float             # rad/s per m
    g_tilde: float
    eta_tilde: float     # g_tilde = eta_tilde * U0_tilde
    omega_tw: float
    omega_c: float
    omega_s: float
    l_c: float
    l_s: float
    delta: float
    nu: float
    tau: float
    mode_shift: float
    waist: float
    mass: float
    n_ions: int

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, int) else v) for k, v in asdict(self).items()}

    def with_delta(self, delta: float, mode_shift_correction: bool = True) -> "DerivedParams":
        """Same physics, new detuning; keeps ``tau = 4 pi / delta``."""
        d = asdict(self)
        d["delta"] = delta
        d["tau"] = 2 * TWO_PI / delta
        d["nu"] = self.omega_c + delta + (self.mode_shift if mode_shift_correction else 0.0)
        return DerivedParams(**d)


def oscillator_length(mass: float, omega: float) -> float:
    return math.sqrt(sc.hbar / (2 * mass * omega))


def light_shift_depth(cfg: PhysicalConfig) -> float:
    """Peak two-level far-detuned light shift in rad/s for the configured power."""
    omega0 = TWO_PI * sc.c / cfg.wavelength
    intensity = 2 * cfg.power / (math.pi * cfg.waist ** 2)
    energy = 3 * math.pi * sc.c ** 2 / (2 * omega0 ** 3) * (cfg.linewidth / cfg.detuning) * intensity
    return energy / sc.hbar


def derive_params(cfg: PhysicalConfig) -> DerivedParams:
    cfg.validate()
    lbar = cfg.wavelength / TWO_PI
    w = cfg.waist
    magnus = math.exp(-2 * lbar ** 2 / w ** 2)
    if cfg.depth_override is not None:
        U0t = float(cfg.depth_override)
        U0 = U0t / magnus
    else:
        U0 = light_shift_depth(cfg)
        U0t = U0 * magnus
    m = cfg.ion_mass
    N = cfg.n_ions
    omega_tw2 = 4 * U0t * sc.hbar * (w ** 2 - 4 * lbar ** 2) / (m * w ** 4)
    if omega_tw2 <= 0:
        raise PhysicsRejection("tweezer curvature is not confining")
    omega_tw = math.sqrt(omega_tw2)
    g = 4 * U0t * lbar / w ** 2
    omega_c = cfg.trap_freq
    # second axial mode sits at sqrt(3) * trap frequency for any ion number
    omega_s = math.sqrt(3) * cfg.trap_freq
    l_c = oscillator_length(m, omega_c)
    l_s = oscillator_length(m, omega_s)
    g_tilde = g * l_c / (4 * math.sqrt(N))
    eta_tilde = lbar * l_c / (math.sqrt(N) * w ** 2)
    mode_shift = com_mode_shift(omega_tw, omega_c, N)
    delta = cfg.delta if cfg.delta is not None else DELTA_REF / math.sqrt(N)
    nu = omega_c + delta + (mode_shift if cfg.mode_shift_correction else 0.0)
    return DerivedParams(
        lambdabar=lbar, U0=U0, U0_tilde=U0t, g=g, g_tilde=g_tilde, eta_tilde=eta_tilde,
        omega_tw=omega_tw, omega_c=omega_c, omega_s=omega_s, l_c=l_c, l_s=l_s,
        delta=delta, nu=nu, tau=2 * TWO_PI / delta, mode_shift=mode_shift,
        waist=w, mass=m, n_ions=N,
    )


def com_mode_shift(omega_tw: float, omega_c: float, n_ions: int) -> float:
    """First-order c.o.m. frequency shift from two modulated tweezers.

    Tweezers on two ions with com participation 1/N each, at mean intensity
    factor <A> = 1/2, add omega_tw**2 / N to omega_c**2.
    """
    return omega_tw ** 2 / (2 * n_ions * omega_c)


def mode_structure(cfg: PhysicalConfig) -> ModeStructure:
    """Axial normal modes of a two-ion crystal from the Coulomb + harmonic Hessian."""
    if cfg.n_ions != 2:
        raise NotImplementedError("mode structure is only implemented for two ions")
    m, w = cfg.ion_mass, cfg.trap_freq
    kc = sc.e ** 2 / (4 * math.pi * sc.epsilon_0)
    d = (2 * kc / (m * w ** 2)) ** (1 / 3)
    coul = 2 * kc / d ** 3
    hessian = np.array([[m * w ** 2 + coul, -coul],
                        [-coul, m * w ** 2 + coul]])
    evals, evecs = np.linalg.eigh(hessian / m)
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    # fix signs: com positive on both ions, stretch positive on ion j
    for k in range(2):
        if evecs[-1, k] < 0:
            evecs[:, k] *= -1
    freqs = np.sqrt(evals)
    lengths = np.array([oscillator_length(m, f) for f in freqs])
    return ModeStructure(frequencies=freqs, vectors=evecs, lengths=lengths)


@dataclass(frozen=True)
class PotentialPolynomial:
    """Taylor coefficients of the misaligned tweezer potential around x = 0.

    ``coefficients[b, k]`` multiplies ``x**k`` (rad/s per m**k) for spin branch
    ``b`` (0 -> sigma_z = +1, 1 -> sigma_z = -1).
    """

    coefficients: np.ndarray
    eps: float
    U0: float
    lambdabar: float
    waist: float

    SPINS = (1, -1)

    def coeffs(self, s: int) -> np.ndarray:
        return self.coefficients[0 if s > 0 else 1]

    def __call__(self, x, s: int):
        return np.polynomial.polynomial.polyval(x, self.coeffs(s))

    def exact(self, x, s: int):
        x = np.asarray(x, dtype=float)
        return -self.U0 * np.exp(-2 * ((x - self.eps) + s * self.lambdabar) ** 2 / self.waist ** 2)


def potential_polynomial(dp: DerivedParams, eps: float = 0.0, U0: Optional[float] = None) -> PotentialPolynomial:
    """Fourth-order expansion of ``-U0 exp(-2((x - eps) + s*lbar)**2 / w**2)``.

    With ``a = s*lbar - eps`` and ``Ut = U0 exp(-2 a**2 / w**2)`` the coefficients are
    ``-Ut``, ``4 Ut a / w**2``, ``Ut (2 w**2 - 8 a**2) / w**4``,
    ``-8 Ut a (3 w**2 - 4 a**2) / (3 w**6)`` and
    ``-2 Ut (3 w**4 - 24 a**2 w**2 + 16 a**4) / (3 w**8)``.
    """
    w = dp.waist
    if abs(eps) >= w / 4:
        raise PhysicsRejection(f"misalignment {eps:.3e} m outside expansion range |eps| < w0/4")
    U0 = dp.U0 if U0 is None else U0
    rows = []
    for s in PotentialPolynomial.SPINS:
        a = s * dp.lambdabar - eps
        Ut = U0 * math.exp(-2 * a ** 2 / w ** 2)
        rows.append([
            -Ut,
            4 * Ut * a / w ** 2,
            Ut * (2 * w ** 2 - 8 * a ** 2) / w ** 4,
            -8 * Ut * a * (3 * w ** 2 - 4 * a ** 2) / (3 * w ** 6),
            -2 * Ut * (3 * w ** 4 - 24 * a ** 2 * w ** 2 + 16 * a ** 4) / (3 * w ** 8),
        ])
    return PotentialPolynomial(np.array(rows), eps, U0, dp.lambdabar, w)


@dataclass(frozen=True)
class ErrorBudget:
    gamma_ph: float
    scatter_probability: float
    delta_AC: float
    mode_shift: float
    omega_eff_slope: float
    clock_tones: int = field(default=2)

    def to_dict(self) -> dict:
        return asdict(self)


def error_budget(cfg: PhysicalConfig, dp: DerivedParams, gate_time: Optional[float] = None,
                 clock_tones: int = 2) -> ErrorBudget:
    """Closed-form error estimates.

    ``gate_time`` defaults to ``dp.tau``. For the clock-state numbers the tweezer
    is bichromatic with ``clock_tones`` tones of equal power, each producing a
    depth ``U0_tilde``; the differential Stark shift scales with the summed depth.
    """
    tau = dp.tau if gate_time is None else gate_time
    gamma = dp.U0_tilde * cfg.linewidth / cfg.detuning
    # per-tone Raman strength Omega**2 / Delta equals the single-tone depth
    slope = dp.U0_tilde * 4 * dp.lambdabar / dp.waist ** 2
    return ErrorBudget(
        gamma_ph=gamma,
        scatter_probability=min(1.0, gamma * tau),
        delta_AC=cfg.qubit_splitting / cfg.detuning * clock_tones * dp.U0_tilde,
        mode_shift=dp.mode_shift,
        omega_eff_slope=slope,
        clock_tones=clock_tones,
    )
