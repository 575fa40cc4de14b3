"""Permutation-invariant operators as coefficient tables over type vectors.

A qubit operator O is permutation invariant iff its matrix element
O[m, n] depends only on the type of the pair string, i.e. on how many sites
carry each (ket, bra) pair.  Pairs are labelled s = 2*ket + bra, so the type
vector is (t01, t10, t11) with t00 = N - t01 - t10 - t11 implied.  The table
stores exactly that common matrix element c_t, one entry per type.

Tables are kept as flat vectors in the canonical order (increasing norm,
then decreasing t1, t2, ...) and exposed as an (N+1)^3 cube for the kernels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numba
import numpy as np
from scipy.special import comb

from . import circuits
from .circuits import ROTATION, TWIST, Gate
from .collective import Z

# --- type vectors ----------------------------------------------------------------


def _binom(n: int, m: int) -> int:
    # binomial(n, m) = 0 for m < 0 (and for m > n >= 0)
    if m < 0 or n < 0 or m > n:
        return 0
    return int(comb(n, m, exact=True))


def n_types(n: int, d: int) -> int:
    """Number of type vectors of n sites over a d-letter alphabet."""
    return _binom(n + d - 1, d - 1)


def _compositions(total: int, parts: int):
    # all (t1..t_parts) summing to total, t1 decreasing first, then t2, ...
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def canonical_types(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All type vectors (t1, ..., t_{d-1}) with sum <= n in canonical order."""
    if d < 2:
        raise ValueError("alphabet size d must be at least 2")
    out = []
    for norm in range(n + 1):
        if d == 2:
            out.append((norm,))
        else:
            out.extend(_compositions(norm, d - 1))
    return tuple(out)


def type_index(t: Sequence[int], d: int) -> int:
    """0-based position of ``t`` in the canonical order, from closed-form binomial offsets."""
    t = tuple(int(x) for x in t)
    if len(t) != d - 1 or min(t, default=0) < 0:
        raise ValueError(f"type vector {t} is not valid for d={d}")
    norm = sum(t)
    idx = _binom(norm - 2 + d, d - 1)
    for k in range(1, d - 1):
        upper = sum(t[k:]) - 1
        for nk in range(upper + 1):
            idx += _binom(nk + d - 2 - k, d - 2 - k)
    return idx


def type_of(digits: Sequence[int], d: int) -> tuple[int, ...]:
    """Type vector of a string over {0..d-1}."""
    counts = np.bincount(np.asarray(digits, dtype=int), minlength=d)
    return tuple(int(c) for c in counts[1:])


@lru_cache(maxsize=None)
def _type_arrays(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ts = np.array(canonical_types(n, 4), dtype=np.int64).reshape(-1, 3)
    arrs = ts[:, 0].copy(), ts[:, 1].copy(), ts[:, 2].copy()
    for a in arrs:
        a.setflags(write=False)
    return arrs


@lru_cache(maxsize=None)
def _binom_table(n: int) -> np.ndarray:
    out = np.zeros((n + 1, n + 1))
    for a in range(n + 1):
        for b in range(a + 1):
            out[a, b] = comb(a, b, exact=True)
    out.setflags(write=False)
    return out


# --- operators -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PermInvOperator:
    """Permutation-invariant operator on ``n_qubits`` qubits.

    ``coeffs[i]`` is the matrix element shared by every pair string whose type
    is ``canonical_types(n, 4)[i]``.
    """

    n_qubits: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        size = n_types(self.n_qubits, 4)
        if c.shape != (size,):
            raise ValueError(f"expected {size} coefficients for N={self.n_qubits}, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def types(self) -> np.ndarray:
        return np.stack(_type_arrays(self.n_qubits), axis=1)

    def cube(self) -> np.ndarray:
        """Coefficients as c[t01, t10, t11]; entries outside the simplex are 0."""
        n = self.n_qubits
        out = np.zeros((n + 1,) * 3, dtype=complex)
        out[_type_arrays(n)] = self.coeffs
        return out

    @classmethod
    def from_cube(cls, n: int, cube: np.ndarray) -> PermInvOperator:
        return cls(n, np.asarray(cube)[_type_arrays(n)])

    def coefficient(self, t01: int, t10: int, t11: int) -> complex:
        return complex(self.coeffs[type_index((t01, t10, t11), 4)])

    def dagger(self) -> PermInvOperator:
        # (O^dag)[m, n] = conj(O[n, m]): swap the roles of t01 and t10
        return PermInvOperator.from_cube(self.n_qubits, self.cube().transpose(1, 0, 2).conj())

    def scaled(self, factors: np.ndarray) -> PermInvOperator:
        return PermInvOperator(self.n_qubits, self.coeffs * factors)

    def __matmul__(self, other):
        if isinstance(other, PermInvOperator):
            return multiply(self, other)
        return NotImplemented

    def to_dense(self) -> np.ndarray:
        """Full 2^N x 2^N matrix (debug path, small N)."""
        n = self.n_qubits
        if n > 10:
            raise ValueError("dense lift is limited to N <= 10")
        x = np.arange(2**n)
        bits = (x[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        ket = bits[:, None, :]
        bra = bits[None, :, :]
        t01 = np.sum((ket == 0) & (bra == 1), axis=2)
        t10 = np.sum((ket == 1) & (bra == 0), axis=2)
        t11 = np.sum((ket == 1) & (bra == 1), axis=2)
        return self.cube()[t01, t10, t11]


def identity(n: int) -> PermInvOperator:
    t01, t10, _ = _type_arrays(n)
    return PermInvOperator(n, ((t01 == 0) & (t10 == 0)).astype(complex))


def diagonal_in_weight(n: int, values) -> PermInvOperator:
    """Diagonal operator whose entry on |x><x| is values[|x|]."""
    values = np.asarray(values, dtype=complex)
    if values.shape != (n + 1,):
        raise ValueError("need one value per Hamming weight")
    t01, t10, t11 = _type_arrays(n)
    return PermInvOperator(n, np.where((t01 == 0) & (t10 == 0), values[t11], 0.0))


def jz_table(n: int, power: int = 1) -> PermInvOperator:
    return diagonal_in_weight(n, ((n - 2.0 * np.arange(n + 1)) / 2.0) ** power)


def product_table(n: int, u: np.ndarray) -> PermInvOperator:
    """Coefficient table of u^{(x)N} for a single-qubit matrix u."""
    u = np.asarray(u, dtype=complex)
    t01, t10, t11 = _type_arrays(n)
    t00 = n - t01 - t10 - t11
    vals = _power(u[0, 0], t00) * _power(u[0, 1], t01) * _power(u[1, 0], t10) * _power(u[1, 1], t11)
    return PermInvOperator(n, vals)


def _power(base: complex, exps: np.ndarray) -> np.ndarray:
    # 0**0 = 1 without complex-power edge cases
    out = np.ones(exps.shape, dtype=complex)
    mask = exps > 0
    out[mask] = base ** exps[mask]
    return out


def dicke_density_to_pinv(rho: np.ndarray) -> PermInvOperator:
    """Lift a Dicke-basis operator (N+1)x(N+1) to its table on the full space."""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0] - 1
    if rho.shape != (n + 1, n + 1) or n < 1:
        raise ValueError("expected a square (N+1)x(N+1) matrix")
    t01, t10, t11 = _type_arrays(n)
    wm = t10 + t11
    wn = t01 + t11
    norms = np.sqrt(comb(n, np.arange(n + 1)))
    return PermInvOperator(n, rho[wm, wn] / (norms[wm] * norms[wn]))


def gate_to_pinv(n: int, gate: Gate) -> PermInvOperator:
    """Table of a global rotation u^{(x)N} or a z-axis twist."""
    if gate.kind == ROTATION:
        return product_table(n, circuits.su2(gate.axis, gate.theta))
    if gate.kind == TWIST and gate.axis == Z:
        t01, t10, t11 = _type_arrays(n)
        diag = np.exp(-1j * gate.theta * (n - 2.0 * t11) ** 2 / 4.0)
        return PermInvOperator(n, np.where((t01 == 0) & (t10 == 0), diag, 0.0))
    raise ValueError(f"gate_to_pinv supports rotations and z-twists, got {gate}")


@numba.njit(cache=True)
def _multiply_kernel(a, b, binom, n):
    out = np.zeros_like(a)
    for t01 in range(n + 1):
        for t10 in range(n + 1 - t01):
            for t11 in range(n + 1 - t01 - t10):
                t00 = n - t01 - t10 - t11
                acc = 0j
                for q00 in range(t00 + 1):
                    c00 = binom[t00, q00]
                    for q01 in range(t01 + 1):
                        c01 = c00 * binom[t01, q01]
                        for q10 in range(t10 + 1):
                            c10 = c01 * binom[t10, q10]
                            for q11 in range(t11 + 1):
                                # q_uv: sites with output pair (u, v) whose contracted bit is 1
                                ua = a[q00 + q01, t10 - q10 + t11 - q11, q10 + q11]
                                vb = b[t01 - q01 + t11 - q11, q00 + q10, q01 + q11]
                                acc += c10 * binom[t11, q11] * ua * vb
                out[t01, t10, t11] = acc
    return out


def multiply(u: PermInvOperator, v: PermInvOperator) -> PermInvOperator:
    """Table of the operator product U V in O(N^7) time and O(N^3) memory."""
    if u.n_qubits != v.n_qubits:
        raise ValueError(f"qubit number mismatch: {u.n_qubits} vs {v.n_qubits}")
    n = u.n_qubits
    cube = _multiply_kernel(u.cube(), v.cube(), _binom_table(n), n)
    return PermInvOperator.from_cube(n, cube)


def expand_twists(gates: Sequence[Gate]) -> list[Gate]:
    """Rewrite every twist about a non-z axis as R T_z R^-1."""
    out = []
    for g in gates:
        if g.kind == TWIST and g.axis != Z:
            axis, angle = circuits.frame_rotation(g.axis)
            out += [Gate(ROTATION, axis, -angle), Gate(TWIST, Z, g.theta), Gate(ROTATION, axis, angle)]
        else:
            out.append(g)
    return out


def compile_circuit(n: int, gates: Sequence[Gate]) -> PermInvOperator:
    """Single table for the time-ordered product of ``gates``.

    Runs of consecutive rotations are merged in SU(2) first, so the number of
    O(N^7) products equals the number of twist/rotation-block boundaries.
    """
    result = None
    block = None
    for g in expand_twists(gates):
        if g.kind == ROTATION:
            u = circuits.su2(g.axis, g.theta)
            block = u if block is None else u @ block
            continue
        if block is not None:
            result = _left_apply(product_table(n, block), result)
            block = None
        result = _left_apply(gate_to_pinv(n, g), result)
    if block is not None:
        result = _left_apply(product_table(n, block), result)
    return identity(n) if result is None else result


def _left_apply(g: PermInvOperator, acc: PermInvOperator | None) -> PermInvOperator:
    return g if acc is None else multiply(g, acc)


# --- elementwise actions used by the type-sector engine ---------------------------


def ket_bra_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Hamming weights (|m|, |n|) of ket and bra for every canonical type."""
    t01, t10, t11 = _type_arrays(n)
    return t10 + t11, t01 + t11


def twist_conjugation_phases(n: int, theta: float) -> np.ndarray:
    """Multipliers turning O into T_z(theta) O T_z(theta)^dagger."""
    wm, wn = ket_bra_weights(n)
    return np.exp(-1j * theta * ((n - 2.0 * wm) ** 2 - (n - 2.0 * wn) ** 2) / 4.0)


def dephasing_factors(n: int, p: float) -> np.ndarray:
    """Multipliers of the all-site dephasing channel (self-adjoint)."""
    t01, t10, _ = _type_arrays(n)
    return (1.0 - 2.0 * p) ** (t01 + t10)


# --- type-vector MPS for symmetric qudit states ------------------------------------


def typevec_mps(d: int, n: int, coeffs):
    """MPS over d-dimensional sites for sum_t c_t (sum of distinct arrangements of type t).

    ``coeffs`` is either a flat vector in canonical order or a mapping from
    type tuples to values that covers every type.  Left-half tensors track the
    partial type, the centre site ceil((N+1)/2) holds all coefficients, and
    right-half tensors are transposes of the left ones.
    """
    from .tensornet import MPS

    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and N >= 1")
    types = canonical_types(n, d)
    if isinstance(coeffs, Mapping):
        missing = [t for t in types if t not in coeffs]
        if missing:
            raise ValueError(f"coefficient table is incomplete, e.g. missing {missing[0]}")
        flat = np.array([coeffs[t] for t in types], dtype=complex)
    else:
        flat = np.asarray(coeffs, dtype=complex)
        if flat.shape != (len(types),):
            raise ValueError(f"expected {len(types)} coefficients, got shape {flat.shape}")

    centre = (n + 2) // 2  # ceil((N+1)/2), 1-based
    unit = [tuple(int(k == s) for k in range(1, d)) for s in range(d)]

    def step(j: int) -> np.ndarray:
        # site j < centre: maps types of j-1 sites to types of j sites
        left = canonical_types(j - 1, d)
        t = np.zeros((len(left), d, n_types(j, d)))
        for mu, tl in enumerate(left):
            for s in range(d):
                t[mu, s, type_index(_add(tl, unit[s]), d)] = 1.0
        return t

    tensors = [step(j) for j in range(1, centre)]
    left = canonical_types(centre - 1, d)
    right = canonical_types(n - centre, d)
    mid = np.zeros((len(left), d, len(right)), dtype=complex)
    for mu, tl in enumerate(left):
        for nu, tr in enumerate(right):
            base = _add(tl, tr)
            for s in range(d):
                mid[mu, s, nu] = flat[type_index(_add(base, unit[s]), d)]
    tensors.append(mid)
    for j in range(centre + 1, n + 1):
        tensors.append(step(n - j + 1).transpose(2, 1, 0))
    return MPS([np.asarray(t, dtype=complex) for t in tensors])


def _add(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def pinv_to_mpo(op: PermInvOperator):
    """MPO of a permutation-invariant operator via the d = 4 pair-symbol MPS."""
    from .tensornet import MPO

    mps = typevec_mps(4, op.n_qubits, op.coeffs)
    return MPO([t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in mps.tensors])


def centre_bond_dimension(n: int, d: int) -> int:
    """Largest bond produced by :func:`typevec_mps`."""
    centre = (n + 2) // 2
    return max(n_types(centre - 1, d), n_types(n - centre, d))


# --- table files ---------------------------------------------------------------------


def dump_table(op: PermInvOperator, path) -> None:
    """Text dump: N on the first line, then ``t01 t10 t11 re im`` in lexicographic order."""
    n = op.n_qubits
    cube = op.cube()
    with open(path, "w") as fh:
        fh.write(f"{n}\n")
        for t01, t10, t11 in itertools.product(range(n + 1), repeat=3):
            if t01 + t10 + t11 <= n:
                c = cube[t01, t10, t11]
                fh.write(f"{t01} {t10} {t11} {float(c.real)!r} {float(c.imag)!r}\n")


def load_table(path) -> PermInvOperator:
    with open(path) as fh:
        n = int(fh.readline())
        cube = np.zeros((n + 1,) * 3, dtype=complex)
        count = 0
        for line in fh:
            if not line.strip():
                continue
            a, b, c, re, im = line.split()
            cube[int(a), int(b), int(c)] = float(re) + 1j * float(im)
            count += 1
    if count != n_types(n, 4):
        raise ValueError(f"table file has {count} entries, expected {n_types(n, 4)}")
    return PermInvOperator.from_cube(n, cube)
