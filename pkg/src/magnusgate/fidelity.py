"""Average process fidelity of the echoed gate against an ideal two-qubit unitary."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hilbert import SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z

D = 4
PAULIS_1Q = (SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z)
PAULIS_2Q = tuple(np.kron(a, b) for a, b in itertools.product(PAULIS_1Q, repeat=2))
ZZ = np.kron(SIGMA_Z, SIGMA_Z)


def ideal_gate(theta: float = math.pi / 4) -> np.ndarray:
    """``exp(-i theta sz(x)sz)``."""
    return np.diag(np.exp(-1j * theta * np.diag(ZZ).real))


@dataclass
class FidelityReport:
    F: float
    per_fock: dict = field(default_factory=dict)       # (n_c, n_s) -> F
    weights: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "F": self.F,
            "infidelity": 1.0 - self.F,
            "per_fock": [{"n_c": k[0], "n_s": k[1], "F": v, "weight": self.weights.get(k, 0.0)}
                         for k, v in sorted(self.per_fock.items())],
            "metadata": self.metadata,
        }


def apply_channel(kraus: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("mab,bc,mdc->ad", kraus, rho, kraus.conj())


def pauli_sum_fidelity(kraus: np.ndarray, U_id: np.ndarray) -> float:
    """Average fidelity from the 16-term Pauli sum
    ``(sum_j tr[U sj^dag U^dag E(sj)] + d^2) / (d^2 (d+1))``."""
    total = 0.0 + 0.0j
    for s in PAULIS_2Q:
        total += np.trace(U_id @ s.conj().T @ U_id.conj().T @ apply_channel(kraus, s))
    return float(((total + D ** 2) / (D ** 2 * (D + 1))).real)


def local_z_correction(kraus: np.ndarray, U_id: np.ndarray) -> np.ndarray:
    """Best single-qubit Z phases (optional post-processing, off by default)."""
    from scipy.optimize import minimize

    def rz2(a):
        return np.diag(np.exp(-1j * np.array([a[0] + a[1], a[0] - a[1], -a[0] + a[1], -a[0] - a[1]]) / 2))

    def cost(a):
        return -pauli_sum_fidelity(np.einsum("ab,mbc->mac", rz2(a), kraus), U_id)

    res = minimize(cost, np.zeros(2), method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-12})
    return rz2(res.x)


def process_fidelity(channel_per_fock: dict, U_id: Optional[np.ndarray] = None,
                     weights: Optional[dict] = None, optimize_local_z: bool = False,
                     metadata: Optional[dict] = None) -> FidelityReport:
    """Weighted average of the per-Fock-sector average fidelity.

    ``channel_per_fock`` maps ``(n_c, n_s)`` to a Kraus array ``(m, 4, 4)``.
    """
    if U_id is None:
        U_id = ideal_gate()
    if weights is None:
        if len(channel_per_fock) != 1:
            raise ValueError("weights required for more than one Fock sector")
        weights = {k: 1.0 for k in channel_per_fock}
    wsum = math.fsum(weights.values())
    if abs(wsum - 1.0) > 1e-9 or any(w < 0 for w in weights.values()):
        raise ValueError(f"weights must be non-negative and sum to 1 (got {wsum!r})")
    per = {}
    for key, K in channel_per_fock.items():
        if optimize_local_z:
            K = np.einsum("ab,mbc->mac", local_z_correction(K, U_id), K)
        per[key] = pauli_sum_fidelity(K, U_id)
    F = math.fsum(weights[k] * per[k] for k in per)
    return FidelityReport(F=min(1.0, max(0.0, F)), per_fock=per, weights=dict(weights),
                          metadata=dict(metadata or {}))


def thermal_weights(nbar: float, cutoff: int):
    """Bose-Einstein populations for ``0..cutoff`` and the truncated tail mass."""
    n = np.arange(cutoff + 1)
    if nbar == 0:
        p = np.zeros(cutoff + 1)
        p[0] = 1.0
        return p, 0.0
    p = nbar ** n / (nbar + 1.0) ** (n + 1)
    tail = (nbar / (nbar + 1.0)) ** (cutoff + 1)
    return p, float(tail)


def joint_thermal_weights(nbar_c: float, nbar_s: float, n_c_cut: int, n_s_cut: int,
                          min_weight: float = 0.0, min_mass: float = 0.99):
    """Product weights over both modes, renormalized over the kept sectors.

    Returns ``(weights, info)``; sectors below ``min_weight`` are dropped before
    renormalization. Warns when either mode keeps less than ``min_mass``.
    """
    pc, tail_c = thermal_weights(nbar_c, n_c_cut)
    ps, tail_s = thermal_weights(nbar_s, n_s_cut)
    for name, tail in (("c.o.m.", tail_c), ("stretch", tail_s)):
        if 1.0 - tail < min_mass:
            warnings.warn(f"{name} cutoff keeps only {1 - tail:.4f} of the thermal mass",
                          RuntimeWarning)
    raw = {(i, j): pc[i] * ps[j] for i in range(n_c_cut + 1) for j in range(n_s_cut + 1)
           if pc[i] * ps[j] > min_weight}
    kept = math.fsum(raw.values())
    weights = {k: v / kept for k, v in raw.items()}
    info = {"tail_c": tail_c, "tail_s": tail_s, "kept_mass": kept,
            "dropped_mass": 1.0 - kept, "sectors": len(weights)}
    return weights, info
