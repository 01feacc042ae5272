"""Vector angular-spectrum field of a tightly focused tweezer in its focal plane.

The beam is first built propagating along +z with x polarization: a sum of
plane waves with wave vector k(theta, phi), amplitude a(theta, phi) and a
polarization vector obtained by rotating x-hat along the geodesic that takes
z-hat to k-hat. The result is then rotated so the beam propagates along -y
(lab frame); the focal plane becomes the lab x-z plane and the circular
components are taken about the lab z axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("gaussian", "laguerre_gaussian_l1")


class QuadratureError(ArithmeticError):
    pass


class MultimodalProfileError(ValueError):
    pass


@dataclass(frozen=True)
class BeamProfile:
    kind: str = "gaussian"
    angular_waist: float = 0.6
    wavelength: float = 369.5e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown beam kind {self.kind!r}; choose from {KINDS}")
        if not 0 < self.angular_waist < math.pi / 2:
            raise ValueError("angular waist must lie in (0, pi/2)")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    def amplitude(self, theta, phi):
        g = np.exp(-theta ** 2 / self.angular_waist ** 2)
        if self.kind == "gaussian":
            return g.astype(complex)
        return theta * np.exp(1j * phi) * g


def corotated_x(theta, phi) -> np.ndarray:
    """``R_z(phi) R_y(theta) R_z(-phi) x-hat``, shape ``theta.shape + (3,)``."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return np.stack([cp ** 2 * ct + sp ** 2, sp * cp * (ct - 1.0), -st * cp], axis=-1)


def wave_vectors(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


@dataclass(frozen=True)
class Quadrature:
    theta: np.ndarray       # flattened node coordinates
    phi: np.ndarray
    weight: np.ndarray      # includes sin(theta)

    @classmethod
    def build(cls, n_theta: int = 128, n_phi: int = 256, theta_max: float = math.pi):
        x, w = np.polynomial.legendre.leggauss(n_theta)
        th = 0.5 * theta_max * (x + 1.0)
        wt = 0.5 * theta_max * w
        ph = 2 * math.pi * np.arange(n_phi) / n_phi
        wp = np.full(n_phi, 2 * math.pi / n_phi)
        T, P = np.meshgrid(th, ph, indexing="ij")
        W = (wt[:, None] * wp[None, :]) * np.sin(T)
        return cls(T.ravel(), P.ravel(), W.ravel())


def _node_coefficients(profile: BeamProfile, quad: Quadrature) -> np.ndarray:
    """Complex weight per node and beam-frame component, shape (nodes, 3)."""
    u = corotated_x(quad.theta, quad.phi)
    a = profile.amplitude(quad.theta, quad.phi)
    return u * (quad.weight * a)[:, None]


def beam_frame_field(profile: BeamProfile, xb, yb, quad: Quadrature) -> np.ndarray:
    """Field at focal-plane points ``(xb[i], yb[j], 0)``, shape (len(xb), len(yb), 3)."""
    k = profile.k
    kv = wave_vectors(quad.theta, quad.phi)
    c = _node_coefficients(profile, quad)
    px = np.exp(1j * k * np.outer(np.asarray(xb), kv[:, 0]))
    py = np.exp(1j * k * np.outer(np.asarray(yb), kv[:, 1]))
    out = np.empty((px.shape[0], py.shape[0], 3), dtype=complex)
    for comp in range(3):
        out[:, :, comp] = (px * c[:, comp]) @ py.T
    return out


def to_lab(E_beam: np.ndarray) -> np.ndarray:
    """Rotate +z propagation to -y: (Ex, Ey, Ez)_lab = (Ex, -Ez, Ey)_beam."""
    return np.stack([E_beam[..., 0], -E_beam[..., 2], E_beam[..., 1]], axis=-1)


def circular_components(E_lab: np.ndarray):
    """Projections on ``(x +/- i y)/sqrt(2)`` and on z."""
    ex, ey, ez = E_lab[..., 0], E_lab[..., 1], E_lab[..., 2]
    s2 = math.sqrt(2)
    return (ex - 1j * ey) / s2, (ex + 1j * ey) / s2, ez


@dataclass(frozen=True)
class FieldGrid:
    profile: BeamProfile
    x: np.ndarray           # lab x, m
    z: np.ndarray           # lab z, m
    E: np.ndarray           # (nx, nz, 3) lab components
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    pi: np.ndarray

    def intensities(self) -> dict:
        return {
            "sigma_plus": np.abs(self.sigma_plus) ** 2,
            "sigma_minus": np.abs(self.sigma_minus) ** 2,
            "pi": np.abs(self.pi) ** 2,
            "total": np.sum(np.abs(self.E) ** 2, axis=-1),
        }

    def focal_line(self, which: str) -> np.ndarray:
        """Intensity of one component along x at z = 0."""
        j = int(np.argmin(np.abs(self.z)))
        if abs(self.z[j]) > 1e-6 * (self.z[-1] - self.z[0]):
            raise ValueError("grid has no z = 0 row; use an odd resolution")
        return self.intensities()[which][:, j]


def focal_field(profile: BeamProfile, extent: float = 1.5e-6, resolution: int = 121,
                n_theta: int = 128, n_phi: int = 256, check_convergence: bool = True,
                rtol: float = 1e-4) -> FieldGrid:
    """Evaluate the focal-plane field on a square window ``[-extent, extent]**2``.

    With ``check_convergence`` the focal line is recomputed with doubled node
    counts; a relative change above ``rtol`` raises :class:`QuadratureError`.
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    coords = np.linspace(-extent, extent, resolution)
    quad = Quadrature.build(n_theta, n_phi)
    Eb = beam_frame_field(profile, coords, coords, quad)
    if check_convergence:
        fine = Quadrature.build(2 * n_theta, 2 * n_phi)
        line = beam_frame_field(profile, coords, [0.0], fine)[:, 0, :]
        ref = Eb[:, resolution // 2, :] if resolution % 2 else \
            beam_frame_field(profile, coords, [0.0], quad)[:, 0, :]
        err = np.max(np.abs(line - ref)) / np.max(np.abs(line))
        if err > rtol:
            raise QuadratureError(
                f"quadrature not converged: doubling nodes changed the focal-line field by "
                f"{err:.2e} (> {rtol:.0e}); n_theta={n_theta}, n_phi={n_phi}")
    E = to_lab(Eb)
    sp, sm, pz = circular_components(E)
    return FieldGrid(profile, coords, coords.copy(), E, sp, sm, pz)


def _local_maxima(I: np.ndarray, floor: float) -> list:
    return [i for i in range(1, I.size - 1)
            if I[i] >= I[i - 1] and I[i] > I[i + 1] and I[i] > floor]


def component_offset(grid: FieldGrid, which: str = "sigma_plus", mode: str = "centroid",
                     floor: float = 0.01) -> float:
    """Displacement along x of a circular component on the focal line.

    ``centroid``: intensity-weighted mean position (requires a unimodal line
    profile; maxima below ``floor`` times the peak are ignored). ``peak``:
    parabolic interpolation of the intensity maximum.
    """
    if which not in ("sigma_plus", "sigma_minus"):
        raise ValueError("which must be 'sigma_plus' or 'sigma_minus'")
    I = grid.focal_line(which)
    x = grid.x
    if mode == "peak":
        i = int(np.clip(np.argmax(I), 1, I.size - 2))
        y0, y1, y2 = I[i - 1], I[i], I[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        return float(x[i] + shift * (x[1] - x[0]))
    if mode != "centroid":
        raise ValueError(f"unknown mode {mode!r}")
    if len(_local_maxima(I, floor * I.max())) > 1:
        raise MultimodalProfileError(
            f"{which} focal-line intensity is multimodal; use mode='peak'")
    return float(np.sum(x * I) / np.sum(I))


def pi_suppression(grid: FieldGrid) -> float:
    I = grid.intensities()
    return float(I["pi"].max() / max(I["sigma_plus"].max(), I["sigma_minus"].max()))
