"""Collective-spin states and gates in the (N+1)-dimensional symmetric subspace.

Basis index ``w`` is the Hamming weight (number of qubits in |1>), so the
J_z eigenvalue of basis vector ``w`` is ``(N - 2w)/2``.  All gates follow the
``exp(-i theta G)`` convention with ``G = n.J`` (rotation) or ``(n.J)^2``
(one-axis twist).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

AXIS_TOL = 1e-12


@dataclass(frozen=True)
class Axis:
    """Unit 3-vector fixing the direction of a rotation or twist."""

    nx: float
    ny: float
    nz: float

    def __post_init__(self):
        norm = np.sqrt(self.nx**2 + self.ny**2 + self.nz**2)
        if not np.isfinite(norm) or abs(norm - 1.0) > AXIS_TOL:
            raise ValueError(f"axis must be a unit vector, got norm {norm!r}")

    @classmethod
    def normalized(cls, vec) -> Axis:
        v = np.asarray(vec, dtype=float)
        v = v / np.linalg.norm(v)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz])

    @property
    def name(self) -> str | None:
        for label, ax in (("x", X), ("y", Y), ("z", Z)):
            if self == ax:
                return label
        return None


X = Axis(1.0, 0.0, 0.0)
Y = Axis(0.0, 1.0, 0.0)
Z = Axis(0.0, 0.0, 1.0)
_NAMED = {"x": X, "y": Y, "z": Z}


def as_axis(axis) -> Axis:
    """Accept an Axis, one of 'x'/'y'/'z', or a 3-vector that is already unit length."""
    if isinstance(axis, Axis):
        return axis
    if isinstance(axis, str):
        try:
            return _NAMED[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown axis label {axis!r}") from None
    v = np.asarray(axis, dtype=float)
    if v.shape != (3,):
        raise ValueError("axis must have three components")
    return Axis(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True, eq=False)
class DickeState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_qubits + 1,):
            raise ValueError(f"expected {self.n_qubits + 1} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class DickeOperator:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.n_qubits + 1
        if mat.shape != (dim, dim):
            raise ValueError(f"expected ({dim}, {dim}) matrix, got {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __matmul__(self, other):
        if isinstance(other, DickeOperator):
            _check_same_n(self.n_qubits, other.n_qubits)
            return DickeOperator(self.n_qubits, self.matrix @ other.matrix)
        if isinstance(other, DickeState):
            _check_same_n(self.n_qubits, other.n_qubits)
            return DickeState(self.n_qubits, self.matrix @ other.amplitudes)
        return NotImplemented

    def dagger(self) -> DickeOperator:
        return DickeOperator(self.n_qubits, self.matrix.conj().T)

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(len(m)))))


def _check_n(n: int):
    if int(n) != n or n < 1:
        raise ValueError(f"number of qubits must be a positive integer, got {n!r}")


def _check_same_n(a: int, b: int):
    if a != b:
        raise ValueError(f"qubit number mismatch: {a} vs {b}")


def jz_eigenvalues(n: int) -> np.ndarray:
    """J_z eigenvalue (N - 2w)/2 for every weight w."""
    return (n - 2.0 * np.arange(n + 1)) / 2.0


def spin_coherent_plus(n: int) -> DickeState:
    """|+>^N written in the Dicke basis."""
    _check_n(n)
    w = np.arange(n + 1)
    amps = np.sqrt(comb(n, w, exact=False)) / 2.0 ** (n / 2.0)
    return DickeState(n, amps.astype(complex))


def basis_state(n: int, weight: int) -> DickeState:
    """Normalized Dicke state of Hamming weight ``weight`` (0 gives |0>^N)."""
    _check_n(n)
    if not 0 <= weight <= n:
        raise ValueError("weight out of range")
    amps = np.zeros(n + 1, dtype=complex)
    amps[weight] = 1.0
    return DickeState(n, amps)


@lru_cache(maxsize=None)
def _ladder(n: int) -> np.ndarray:
    # J_+ lowers the Hamming weight by one: J_+|w> = sqrt((w)(N - w + 1)) |w-1>
    jp = np.zeros((n + 1, n + 1))
    for w in range(1, n + 1):
        jp[w - 1, w] = np.sqrt(w * (n - w + 1))
    jp.setflags(write=False)
    return jp


def _spin_matrices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    jp = _ladder(n)
    jm = jp.T
    jx = (jp + jm) / 2.0
    jy = (jp - jm) / 2.0j
    jz = np.diag(jz_eigenvalues(n)).astype(complex)
    return jx.astype(complex), jy, jz


def angular_momentum(n: int, component: str) -> DickeOperator:
    _check_n(n)
    idx = {"x": 0, "y": 1, "z": 2}.get(component)
    if idx is None:
        raise ValueError(f"component must be 'x', 'y' or 'z', got {component!r}")
    return DickeOperator(n, _spin_matrices(n)[idx])


def generator(n: int, axis) -> np.ndarray:
    """n.J as a dense Hermitian matrix."""
    ax = as_axis(axis)
    jx, jy, jz = _spin_matrices(n)
    return ax.nx * jx + ax.ny * jy + ax.nz * jz


@lru_cache(maxsize=256)
def _eigensystem(n: int, axis: Axis) -> tuple[np.ndarray, np.ndarray]:
    # spectrum of n.J is always {(N-2w)/2}; only the eigenvectors depend on the axis
    vals, vecs = np.linalg.eigh(generator(n, axis))
    vals = np.round(2.0 * vals) / 2.0
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs


def _exp_generator(n: int, axis, theta: float, power: int) -> np.ndarray:
    if not np.isfinite(theta):
        raise ValueError("angle must be finite")
    ax = as_axis(axis)
    if theta == 0.0:
        return np.eye(n + 1, dtype=complex)
    if ax == Z:
        return np.diag(np.exp(-1j * theta * jz_eigenvalues(n) ** power))
    vals, vecs = _eigensystem(n, ax)
    return (vecs * np.exp(-1j * theta * vals**power)) @ vecs.conj().T


def rotation(n: int, axis, theta: float) -> DickeOperator:
    """exp(-i theta n.J)."""
    _check_n(n)
    return DickeOperator(n, _exp_generator(n, axis, float(theta), 1))


def twist(n: int, axis, theta: float) -> DickeOperator:
    """One-axis twist exp(-i theta (n.J)^2)."""
    _check_n(n)
    return DickeOperator(n, _exp_generator(n, axis, float(theta), 2))


def weight_distribution(state: DickeState) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def moments_jz(state: DickeState) -> tuple[float, float]:
    """First and second moments of J_z, read off the weight distribution."""
    p = weight_distribution(state)
    lam = jz_eigenvalues(state.n_qubits)
    return float(p @ lam), float(p @ lam**2)
