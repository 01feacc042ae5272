"""Dense operator algebra on truncated spin (x) motion Hilbert spaces.

Units follow the hbar = 1 convention: every Hamiltonian is an angular-frequency
matrix (rad/s), times are seconds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.linalg

HERMITIAN_RTOL = 1e-12
UNITARY_ATOL = 1e-10


class DimensionError(ValueError):
    """Raised when an operator does not fit the layout factor it is placed on."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class LayoutMismatchError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered tensor factors, e.g. ``(("spin_i", 2), ("spin_j", 2), ...)``."""

    factors: tuple

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        for label, dim in factors:
            if dim < 1:
                raise DimensionError(f"factor {label!r} has dimension {dim}", label)
        object.__setattr__(self, "factors", factors)

    @classmethod
    def gate(cls, n_c_cut: int = 18, n_s_cut: int = 10) -> "HilbertLayout":
        return cls((("spin_i", 2), ("spin_j", 2),
                    ("fock_c", n_c_cut + 1), ("fock_s", n_s_cut + 1)))

    @property
    def labels(self) -> tuple:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(dim for _, dim in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class Operator:
    layout: HilbertLayout
    data: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.shape != (self.layout.dim, self.layout.dim):
            raise DimensionError(
                f"operator shape {data.shape} does not match layout dim {self.layout.dim}")
        if not np.all(np.isfinite(data)):
            raise ValueError("operator contains non-finite entries")
        if self.hermitian and not is_hermitian(data):
            raise NotHermitianError("hermitian flag set on a non-Hermitian matrix")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_layouts(self.layout, other.layout)
            return Operator(self.layout, self.data @ other.data)
        if isinstance(other, StateVector):
            _check_layouts(self.layout, other.layout)
            return StateVector(self.layout, self.data @ other.data)
        return NotImplemented

    def __add__(self, other):
        _check_layouts(self.layout, other.layout)
        return Operator(self.layout, self.data + other.data,
                        hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other):
        _check_layouts(self.layout, other.layout)
        return Operator(self.layout, self.data - other.data,
                        hermitian=self.hermitian and other.hermitian)

    def __mul__(self, scalar):
        herm = self.hermitian and np.isreal(scalar)
        return Operator(self.layout, self.data * scalar, hermitian=bool(herm))

    __rmul__ = __mul__

    def dag(self) -> "Operator":
        return Operator(self.layout, self.data.conj().T, hermitian=self.hermitian)


@dataclass(frozen=True)
class StateVector:
    layout: HilbertLayout
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=complex).reshape(-1)
        if data.size != self.layout.dim:
            raise DimensionError(
                f"state length {data.size} does not match layout dim {self.layout.dim}")
        if not np.all(np.isfinite(data)):
            raise ValueError("state contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per layout factor."""
        return self.data.reshape(self.layout.dims)


def _check_layouts(a: HilbertLayout, b: HilbertLayout):
    if a != b:
        raise LayoutMismatchError(f"layout mismatch: {a.factors} vs {b.factors}")


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0:
        return True
    return bool(np.max(np.abs(m - m.conj().T)) < rtol * scale)


# single-factor building blocks

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def ladder_ops(n_max: int):
    """Annihilation and creation matrices on Fock states ``0..n_max``."""
    if n_max < 1:
        raise ValueError("cutoff must be >= 1")
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)
    return a, a.conj().T


def number_op(n_max: int) -> np.ndarray:
    return np.diag(np.arange(n_max + 1, dtype=float)).astype(complex)


def kron(layout: HilbertLayout, ops: Sequence) -> Operator:
    """Tensor product of one matrix per layout factor, in layout order.

    ``None`` entries stand for the identity on that factor.
    """
    if len(ops) != len(layout.factors):
        raise DimensionError(
            f"expected {len(layout.factors)} factor operators, got {len(ops)}")
    mats = []
    for (label, dim), op in zip(layout.factors, ops):
        if op is None:
            mats.append(np.eye(dim, dtype=complex))
            continue
        m = op.data if isinstance(op, Operator) else np.asarray(op, dtype=complex)
        if m.shape != (dim, dim):
            raise DimensionError(
                f"operator for factor {label!r} has shape {m.shape}, expected ({dim}, {dim})",
                label)
        mats.append(m)
    return Operator(layout, reduce(np.kron, mats))


def embed(layout: HilbertLayout, label: str, op) -> Operator:
    """Place ``op`` on factor ``label`` with identities elsewhere."""
    ops = [None] * len(layout.factors)
    ops[layout.index(label)] = op
    return kron(layout, ops)


def basis_state(layout: HilbertLayout, indices: Sequence[int]) -> StateVector:
    if len(indices) != len(layout.factors):
        raise DimensionError("one index per layout factor required")
    for (label, dim), i in zip(layout.factors, indices):
        if not 0 <= i < dim:
            raise DimensionError(f"index {i} out of range for factor {label!r}", label)
    psi = np.zeros(layout.dims, dtype=complex)
    psi[tuple(indices)] = 1.0
    return StateVector(layout, psi.reshape(-1))


def coherent_state(alpha: complex, n_max: int) -> np.ndarray:
    """Truncated coherent-state amplitudes, renormalized on the kept Fock states."""
    n = np.arange(n_max + 1)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    amps = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * log_fact) * np.power(complex(alpha), n)
    return amps / np.linalg.norm(amps)


def expm_propagator(H: Operator, dt: float) -> Operator:
    """Return ``exp(-i H dt)`` for Hermitian ``H`` via eigendecomposition."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not is_hermitian(H.data):
        raise NotHermitianError("propagator requires a Hermitian generator")
    U = hermitian_expm(H.data, dt)
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err >= UNITARY_ATOL:
        raise ArithmeticError(f"propagator unitarity error {err:.2e}")
    return Operator(H.layout, U)


def hermitian_expm(h: np.ndarray, dt: float) -> np.ndarray:
    h = 0.5 * (h + h.conj().T)
    w, v = scipy.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def expectation(psi: StateVector, M: Operator) -> complex:
    _check_layouts(psi.layout, M.layout)
    return complex(np.vdot(psi.data, M.data @ psi.data))
