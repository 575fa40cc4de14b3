"""Correlated dephasing during free evolution and dephasing after each twist.

Free evolution multiplies the density-matrix element rho[m, n] by

    exp(i phi (|m| - |n|)) * exp(-1/2 s^T C s),     s_j = n_j - m_j in {-1, 0, 1},

which is the Gaussian average of prod_j exp(-i r_j Z_j / 2) conjugations with
covariance C (the factor 1/8 on ((-1)^m - (-1)^n) becomes 1/2 on s).  For a
tridiagonal C the weight factorizes into on-site terms and nearest-neighbour
terms exp(-c2 s_j s_{j+1}); the latter need a three-state bond.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

PSD_TOL = 1e-12


@dataclass(frozen=True)
class NoiseSpec:
    """Correlated free-evolution dephasing (c1, c2) plus per-twist dephasing p."""

    c1: float = 0.0
    c2: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        for name in ("c1", "c2", "p"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.c1 < 0:
            raise ValueError("c1 is a variance and must be nonnegative")
        if not 0.0 <= self.p <= 0.5:
            raise ValueError("p must lie in [0, 1/2]")

    @property
    def free_active(self) -> bool:
        return self.c1 != 0.0 or self.c2 != 0.0

    @property
    def gate_active(self) -> bool:
        return self.p != 0.0

    @property
    def is_noiseless(self) -> bool:
        return not (self.free_active or self.gate_active)

    def correlation_matrix(self, n: int) -> np.ndarray:
        return correlation_matrix(n, self.c1, self.c2)

    def is_psd(self, n: int) -> bool:
        return min_correlation_eigenvalue(n, self.c1, self.c2) >= -PSD_TOL

    def check(self, n: int) -> NoiseSpec:
        lam = min_correlation_eigenvalue(n, self.c1, self.c2)
        if lam < -PSD_TOL:
            raise ValueError(
                f"correlation matrix for N={n}, c1={self.c1}, c2={self.c2} is not "
                f"positive semidefinite (smallest eigenvalue {lam:.3e})"
            )
        return self


NOISELESS = NoiseSpec()


def correlation_matrix(n: int, c1: float, c2: float) -> np.ndarray:
    c = c1 * np.eye(n)
    if n > 1:
        c += c2 * (np.eye(n, k=1) + np.eye(n, k=-1))
    return c


def min_correlation_eigenvalue(n: int, c1: float, c2: float) -> float:
    if n == 1:
        return float(c1)
    return float(eigvalsh_tridiagonal(np.full(n, c1), np.full(n - 1, c2), select="i", select_range=(0, 0))[0])


def _check_psd(c: np.ndarray):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or not np.allclose(c, c.T):
        raise ValueError("correlation matrix must be square and symmetric")
    lam = np.linalg.eigvalsh(c)[0]
    if lam < -PSD_TOL:
        raise ValueError(f"correlation matrix is not positive semidefinite (smallest eigenvalue {lam:.3e})")
    return c


def dephasing_weight(m, n, corr) -> float:
    """Damping factor of rho[m, n] under the Gaussian dephasing with covariance ``corr``."""
    corr = _check_psd(corr)
    m = np.asarray(m, dtype=int)
    n = np.asarray(n, dtype=int)
    if m.shape != n.shape or m.shape != (corr.shape[0],):
        raise ValueError("bitstrings and correlation matrix disagree in length")
    delta = (1 - 2 * m) - (1 - 2 * n)
    return float(np.exp(-delta @ corr @ delta / 8.0))


@dataclass(frozen=True, eq=False)
class ChannelMPO:
    """Element-wise channel on density operators.

    ``tensors[j]`` has shape (chi_left, 2, 2, chi_right); the (ket, bra)
    entry multiplies rho[m_j, n_j].  Applying it multiplies bond dimensions.
    """

    tensors: tuple

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    def dense_weights(self) -> np.ndarray:
        """W[m, n] for all bitstrings (small N only)."""
        n = self.n_sites
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.einsum("...a,amnb->...mnb", out, t)
        out = out.reshape(out.shape[1:-1])
        # axes are (m1, n1, m2, n2, ...); regroup into (m, n)
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        return out.transpose(perm).reshape(2**n, 2**n)


def _s_index(ket: int, bra: int) -> int:
    # s = bra - ket in {-1, 0, 1} stored at index s + 1
    return bra - ket + 1


def free_evolution_channel_mpo(n: int, phi: float, spec: NoiseSpec) -> ChannelMPO:
    """Phase encoding e^{-i phi J_z} . e^{i phi J_z} composed with correlated Gaussian dephasing.

    Bond dimension is 1 when c2 = 0 and 3 otherwise.
    """
    spec.check(n)
    if not np.isfinite(phi):
        raise ValueError("phi must be finite")
    local = np.empty((2, 2), dtype=complex)
    for ket in range(2):
        for bra in range(2):
            s = bra - ket
            local[ket, bra] = np.exp(1j * phi * (ket - bra) - spec.c1 * s * s / 2.0)
    if spec.c2 == 0.0 or n == 1:
        return ChannelMPO(tuple(local.reshape(1, 2, 2, 1).copy() for _ in range(n)))
    svals = np.array([-1.0, 0.0, 1.0])
    kernel = np.exp(-spec.c2 * np.outer(svals, svals))
    tensors = []
    for j in range(n):
        left = 1 if j == 0 else 3
        right = 1 if j == n - 1 else 3
        t = np.zeros((left, 2, 2, right), dtype=complex)
        for ket in range(2):
            for bra in range(2):
                s = _s_index(ket, bra)
                # incoming bond carries the previous site's s; outgoing carries this one
                inc = np.ones(1) if j == 0 else kernel[:, s]
                out = np.ones(1) if j == n - 1 else np.eye(3)[s]
                t[:, ket, bra, :] = local[ket, bra] * np.outer(inc, out)
        tensors.append(t)
    return ChannelMPO(tuple(tensors))


def gate_dephasing_factors(p: float) -> np.ndarray:
    """Per-site (ket, bra) multipliers of E(rho) = (1-p) rho + p Z rho Z."""
    if not 0.0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 1/2]")
    return np.array([[1.0, 1.0 - 2.0 * p], [1.0 - 2.0 * p, 1.0]])


def gate_dephasing(rho, p: float):
    """Apply single-qubit dephasing with strength p to every site of a density MPO."""
    from .tensornet import DensityMPO, MPO

    f = gate_dephasing_factors(p)
    tensors = [t * f[None, :, :, None] for t in rho.tensors]
    return DensityMPO(tensors) if isinstance(rho, DensityMPO) else MPO(tensors)


# --- type-sector form ----------------------------------------------------------


@lru_cache(maxsize=64)
def neighbour_sums(n: int, c2: float) -> np.ndarray:
    """H[a, b] = sum over strings with a '+', b '-' and n-a-b '0' of prod_j exp(-c2 s_j s_{j+1}).

    Entries with a + b > n are zero.  Computed by dynamic programming over the
    chain in O(n^3).
    """
    k = np.exp(-c2 * np.outer([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]))
    # h[a, b, last] for the current prefix length; last in {-, 0, +} -> {0, 1, 2}
    h = np.zeros((n + 1, n + 1, 3))
    h[0, 0, 1] = 1.0
    h[1, 0, 2] = 1.0
    h[0, 1, 0] = 1.0
    for _ in range(1, n):
        new = np.zeros_like(h)
        # next symbol '0'
        new[:, :, 1] = h @ k[:, 1]
        # next '+': a -> a + 1
        new[1:, :, 2] = h[:-1, :, :] @ k[:, 2]
        # next '-': b -> b + 1
        new[:, 1:, 0] = h[:, :-1, :] @ k[:, 0]
        h = new
    out = h.sum(axis=2)
    out.setflags(write=False)
    return out
