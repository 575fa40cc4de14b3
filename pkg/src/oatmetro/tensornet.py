"""Exact MPS/MPO engine for noisy protocols.

Tensor layouts: MPS sites are (chi_left, d, chi_right) and MPO sites are
(chi_left, d_out, d_in, chi_right), with site 1 the most significant qubit
of the dense vector.  Nothing is ever truncated beyond numerical noise:
:func:`compress` only discards singular values below ``rel_tol`` times the
largest one on the same bond.

Two protocol back-ends are offered.  ``method="mpo"`` follows the staged
algorithm literally: a symmetric-subspace probe lifted to a density MPO, the
element-wise free-evolution channel, and the decoding applied gate by gate
(or as one compiled permutation-invariant MPO) in the Heisenberg picture.
``method="typed"`` evaluates the same contraction sector by sector over
type vectors, which is what makes N = 30 cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb

from . import circuits, collective, noisemodel, pinv
from .circuits import ROTATION, TWIST, Gate
from .collective import Z, as_axis
from .noisemodel import NoiseSpec

COMPRESS_TOL = 1e-14
DEFAULT_BOND_BUDGET = 4096


class ResourceError(RuntimeError):
    """A contraction would exceed the bond-dimension budget."""

    def __init__(self, stage: str, bond: int, budget: int):
        super().__init__(f"bond dimension {bond} exceeds budget {budget} during {stage}")
        self.stage = stage
        self.bond = bond
        self.budget = budget


# --- containers ----------------------------------------------------------------------


class _Chain:
    def __init__(self, tensors):
        tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if not tensors:
            raise ValueError("a chain needs at least one site")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[-1] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for j in range(len(tensors) - 1):
            if tensors[j].shape[-1] != tensors[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j + 1} and {j + 2}")
        self.tensors = tensors

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[-1] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)


class MPS(_Chain):
    """Matrix product state; ``tensors[j]`` has shape (chi_l, d, chi_r)."""

    def __init__(self, tensors):
        super().__init__(tensors)
        if any(t.ndim != 3 for t in self.tensors):
            raise ValueError("MPS tensors must be rank 3")

    @property
    def phys_dim(self) -> int:
        return self.tensors[0].shape[1]

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0].reshape(-1, self.tensors[0].shape[2])
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=(1, 0)).reshape(-1, t.shape[2])
        return out.reshape(-1)

    def inner(self, other: MPS) -> complex:
        """<self|other>."""
        _check_sites(self, other)
        env = np.ones((1, 1), dtype=complex)
        for a, b in zip(self.tensors, other.tensors):
            env = np.einsum("ab,asc,bsd->cd", env, a.conj(), b, optimize=True)
        return complex(env[0, 0])

    def norm(self) -> float:
        return float(np.sqrt(abs(self.inner(self))))


class MPO(_Chain):
    """Matrix product operator; ``tensors[j]`` has shape (chi_l, d_out, d_in, chi_r)."""

    def __init__(self, tensors):
        super().__init__(tensors)
        if any(t.ndim != 4 for t in self.tensors):
            raise ValueError("MPO tensors must be rank 4")

    def to_dense(self) -> np.ndarray:
        t0 = self.tensors[0]
        out = t0.reshape(t0.shape[1], t0.shape[2], t0.shape[3])
        for t in self.tensors[1:]:
            r, c, _ = out.shape
            out = np.einsum("rca,aoib->rocib", out, t)
            out = out.reshape(r * t.shape[1], c * t.shape[2], t.shape[3])
        return out[:, :, 0]

    def dagger(self):
        return type(self)([t.conj().transpose(0, 2, 1, 3) for t in self.tensors])

    def trace(self) -> complex:
        env = np.ones(1, dtype=complex)
        for t in self.tensors:
            env = env @ np.einsum("aiib->ab", t)
        return complex(env[0])


class DensityMPO(MPO):
    """MPO holding a density operator."""

    def check(self, tol: float = 1e-10) -> DensityMPO:
        tr = self.trace()
        if abs(tr - 1.0) > tol:
            raise ValueError(f"density operator has trace {tr}")
        return self


def _check_sites(a: _Chain, b: _Chain):
    if a.n_sites != b.n_sites:
        raise ValueError(f"site number mismatch: {a.n_sites} vs {b.n_sites}")


# --- constructions -------------------------------------------------------------------


def _centre(n: int) -> int:
    return (n + 2) // 2  # ceil((N+1)/2), 1-based


def _weight_chain(n: int, values: np.ndarray) -> list[list[np.ndarray]]:
    """Per-site [A^(0), A^(1)] matrices of the Hamming-weight MPS construction."""
    jc = _centre(n)
    sites = []
    for j in range(1, jc):
        a0 = np.eye(j, j + 1)
        a1 = np.eye(j, j + 1, k=1)
        sites.append([a0, a1])
    rows, cols = jc, n - jc + 1
    m = np.arange(rows)[:, None]
    k = np.arange(cols)[None, :]
    sites.append([values[m + k], values[m + k + 1]])
    for j in range(jc + 1, n + 1):
        a0, a1 = sites[n - j]
        sites.append([a0.T, a1.T])
    return sites


def mps_from_weight_coeffs(n: int, c) -> MPS:
    """MPS of sum_x c_{|x|} |x> with bond dimension ceil((N+1)/2)."""
    c = np.asarray(c, dtype=complex)
    if c.shape != (n + 1,):
        raise ValueError(f"expected {n + 1} weight coefficients, got shape {c.shape}")
    # pad one entry so the centre formula can index c_{m+n+1} safely; it is never reached
    padded = np.append(c, 0.0)
    return MPS([np.stack(pair, axis=1) for pair in _weight_chain(n, padded)])


def mps_product(n: int, v) -> MPS:
    v = np.asarray(v, dtype=complex).reshape(1, -1, 1)
    return MPS([v.copy() for _ in range(n)])


def mpo_product(n: int, u) -> MPO:
    """u^{(x)N} with bond dimension 1."""
    u = np.asarray(u, dtype=complex)
    return MPO([u.reshape(1, *u.shape, 1).copy() for _ in range(n)])


def mpo_identity(n: int) -> MPO:
    return mpo_product(n, np.eye(2))


def mpo_rotation(n: int, axis, theta: float) -> MPO:
    """exp(-i theta n.J) as a bond-dimension-one MPO."""
    return mpo_product(n, circuits.su2(as_axis(axis), theta))


def mpo_diagonal_weight(n: int, values) -> MPO:
    """Diagonal operator with entry values[|x|] on |x><x|."""
    values = np.append(np.asarray(values, dtype=complex), 0.0)
    tensors = []
    for a0, a1 in _weight_chain(n, values):
        t = np.zeros((a0.shape[0], 2, 2, a0.shape[1]), dtype=complex)
        t[:, 0, 0, :] = a0
        t[:, 1, 1, :] = a1
        tensors.append(t)
    return MPO(tensors)


def mpo_twist_z(n: int, theta: float) -> MPO:
    """T_z(theta): phases exp(-i theta (N - 2|x|)^2 / 4)."""
    w = np.arange(n + 1)
    return mpo_diagonal_weight(n, np.exp(-1j * theta * (n - 2.0 * w) ** 2 / 4.0))


def _rotate_sites(x: MPO, u: np.ndarray) -> MPO:
    # u^{(x)N} X (u^dag)^{(x)N} site by site; bonds unchanged
    return type(x)([np.einsum("oi,aijb,kj->aokb", u, t, u.conj()) for t in x.tensors])


def mpo_twist(n: int, axis, theta: float) -> MPO:
    """Twist about an arbitrary axis as V T_z V^dag folded into the same bonds."""
    ax = as_axis(axis)
    tz = mpo_twist_z(n, theta)
    if ax == Z:
        return tz
    return _rotate_sites(tz, circuits._frame_to(ax))


def gate_mpo(n: int, gate: Gate) -> MPO:
    if gate.kind == ROTATION:
        return mpo_rotation(n, gate.axis, gate.theta)
    return mpo_twist(n, gate.axis, gate.theta)


def mpo_jz(n: int) -> MPO:
    """J_z with bond dimension 2 (upper-triangular automaton)."""
    if n == 1:
        return MPO([np.diag([0.5, -0.5]).astype(complex).reshape(1, 2, 2, 1)])
    tensors = []
    for j in range(n):
        t = np.zeros((2, 2, 2, 2), dtype=complex)
        for mu in range(2):
            z = (-1) ** mu
            t[:, mu, mu, :] = [[1.0, z / 2.0], [0.0, 1.0]]
        tensors.append(t)
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][..., 1:]
    return MPO(tensors)


def mpo_jz2(n: int) -> MPO:
    """J_z^2 with bond dimension 3.

    Bulk sites carry [[1, z/2, 1/4], [0, 1, z], [0, 0, 1]]; the boundaries are
    the first row and the last column of that matrix.
    """
    if n == 1:
        return MPO([0.25 * np.eye(2, dtype=complex).reshape(1, 2, 2, 1)])
    tensors = []
    for j in range(n):
        t = np.zeros((3, 2, 2, 3), dtype=complex)
        for mu in range(2):
            z = (-1) ** mu
            t[:, mu, mu, :] = [[1.0, z / 2.0, 0.25], [0.0, 1.0, z], [0.0, 0.0, 1.0]]
        tensors.append(t)
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][..., 2:]
    return MPO(tensors)


def density_from_dicke(rho) -> DensityMPO:
    """Lift a Dicke-basis density matrix to a density MPO over N qubits."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
        raise ValueError("expected an (N+1)x(N+1) matrix")
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise ValueError("density matrix must have unit trace")
    if np.linalg.eigvalsh(rho)[0] < -1e-10:
        raise ValueError("density matrix must be positive semidefinite")
    mpo = pinv.pinv_to_mpo(pinv.dicke_density_to_pinv(rho))
    return DensityMPO(mpo.tensors)


# --- contractions --------------------------------------------------------------------


def _budget(stage: str, bond: int, budget: int | None):
    if budget is not None and bond > budget:
        raise ResourceError(stage, bond, budget)


def apply_mpo(op: MPO, target, *, stage: str = "apply_mpo", budget: int | None = None):
    """op @ target for an MPS or MPO target; output bonds are products of input bonds."""
    _check_sites(op, target)
    _budget(stage, op.max_bond * target.max_bond, budget)
    out = []
    for w, a in zip(op.tensors, target.tensors):
        if w.shape[2] != a.shape[1]:
            raise ValueError("physical dimension mismatch")
        if isinstance(target, MPS):
            t = np.einsum("woiv,aib->waovb", w, a)
            out.append(t.reshape(w.shape[0] * a.shape[0], w.shape[1], w.shape[3] * a.shape[2]))
        else:
            t = np.einsum("woiv,aixb->waoxvb", w, a)
            out.append(t.reshape(w.shape[0] * a.shape[0], w.shape[1], a.shape[2], w.shape[3] * a.shape[3]))
    if isinstance(target, MPS):
        return MPS(out)
    return type(target)(out) if isinstance(target, DensityMPO) else MPO(out)


def right_multiply(target: MPO, op: MPO, *, stage: str = "right_multiply", budget: int | None = None) -> MPO:
    """target @ op."""
    _check_sites(op, target)
    _budget(stage, op.max_bond * target.max_bond, budget)
    out = []
    for a, w in zip(target.tensors, op.tensors):
        t = np.einsum("aoxb,wxiv->awoibv", a, w)
        out.append(t.reshape(a.shape[0] * w.shape[0], a.shape[1], w.shape[2], a.shape[3] * w.shape[3]))
    return type(target)(out)


def compress(x, rel_tol: float = COMPRESS_TOL):
    """Canonicalize and drop singular values below ``rel_tol`` times the bond maximum."""
    is_mpo = isinstance(x, MPO)
    shapes = [t.shape for t in x.tensors]
    ts = [t.reshape(t.shape[0], -1, t.shape[-1]) for t in x.tensors]
    n = len(ts)
    for j in range(n - 1):
        l, d, r = ts[j].shape
        q, rr = np.linalg.qr(ts[j].reshape(l * d, r))
        ts[j] = q.reshape(l, d, -1)
        ts[j + 1] = np.tensordot(rr, ts[j + 1], axes=(1, 0))
    for j in range(n - 1, 0, -1):
        l, d, r = ts[j].shape
        u, s, vh = np.linalg.svd(ts[j].reshape(l, d * r), full_matrices=False)
        keep = max(1, int(np.sum(s > rel_tol * s[0]))) if s[0] > 0 else 1
        ts[j] = vh[:keep].reshape(keep, d, r)
        ts[j - 1] = np.tensordot(ts[j - 1], u[:, :keep] * s[:keep], axes=(2, 0))
    if is_mpo:
        ts = [t.reshape(t.shape[0], shp[1], shp[2], t.shape[2]) for t, shp in zip(ts, shapes)]
        return type(x)(ts)
    return MPS(ts)


def conjugate_by_unitary(rho: MPO, u: MPO, *, compress_result: bool = True, stage: str = "conjugate",
                         budget: int | None = None) -> MPO:
    """U rho U^dag through two MPO-MPO contractions (compressed in between when asked)."""
    out = apply_mpo(u, rho, stage=stage, budget=budget)
    if compress_result and u.max_bond > 1:
        out = compress(out)
    out = right_multiply(out, u.dagger(), stage=stage, budget=budget)
    if compress_result and u.max_bond > 1:
        out = compress(out)
    return out


def expectation_trace(obs: MPO, rho: MPO) -> complex:
    """Tr(obs rho)."""
    _check_sites(obs, rho)
    env = np.ones((1, 1), dtype=complex)
    for o, r in zip(obs.tensors, rho.tensors):
        env = np.einsum("ab,aoic,bioe->ce", env, o, r, optimize=True)
    return complex(env[0, 0])


def mps_expectation(psi: MPS, obs: MPO) -> complex:
    """<psi|obs|psi>."""
    _check_sites(psi, obs)
    env = np.ones((1, 1, 1), dtype=complex)
    for a, w in zip(psi.tensors, obs.tensors):
        env = np.einsum("xwy,xoc,woiv,yid->cvd", env, a.conj(), w, a, optimize=True)
    return complex(env[0, 0, 0])


def apply_channel(rho: MPO, channel: noisemodel.ChannelMPO) -> DensityMPO:
    """Element-wise channel; bond dimensions multiply."""
    if channel.n_sites != rho.n_sites:
        raise ValueError("site number mismatch")
    out = []
    for w, r in zip(channel.tensors, rho.tensors):
        t = w[:, None, :, :, :, None] * r[None, :, :, :, None, :]
        out.append(t.reshape(w.shape[0] * r.shape[0], 2, 2, w.shape[3] * r.shape[3]))
    return DensityMPO(out)


def dephase_in_frame(x: MPO, axis, p: float) -> MPO:
    """All-site dephasing in the eigenbasis of n.sigma (self-adjoint)."""
    ax = as_axis(axis)
    if ax == Z:
        return noisemodel.gate_dephasing(x, p)
    v = circuits._frame_to(ax)
    return _rotate_sites(noisemodel.gate_dephasing(_rotate_sites(x, v.conj().T), p), v)


# --- protocols -----------------------------------------------------------------------


@dataclass
class BondRecord:
    stage: str
    bond_dims: list

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)


@dataclass
class Profile:
    """Optional collector of bond-dimension profiles per simulation stage."""

    records: list = field(default_factory=list)

    def add(self, stage: str, chain: _Chain):
        self.records.append(BondRecord(stage, list(chain.bond_dims)))

    def as_dicts(self) -> list[dict]:
        return [{"stage": r.stage, "max_bond": r.max_bond, "bond_dims": r.bond_dims} for r in self.records]


def _probe_dicke(n: int, encoding: Sequence[Gate]) -> np.ndarray:
    return circuits.apply_sequence(collective.spin_coherent_plus(n), encoding).amplitudes


def _noise(noise) -> NoiseSpec:
    return noisemodel.NOISELESS if noise is None else noise


def noisy_moments(n: int, encoding: Sequence[Gate], decoding: Sequence[Gate], phis, noise: NoiseSpec | None = None,
                  *, method: str = "auto", decoding_path: str = "per-gate", budget: int | None = DEFAULT_BOND_BUDGET,
                  profile: Profile | None = None) -> np.ndarray:
    """(<J_z>, <J_z^2>) at every phi in ``phis`` as an array of shape (len(phis), 2).

    ``decoding`` includes the final R_x(pi/2).  The decoding-side observables
    do not depend on phi and are prepared once.
    """
    noise = _noise(noise)
    noise.check(n)
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if decoding_path not in ("per-gate", "compiled"):
        raise ValueError(f"unknown decoding path {decoding_path!r}")
    if method == "auto":
        method = "mpo" if n <= 10 else "typed"
    if method == "typed":
        return _typed_moments(n, encoding, decoding, phis, noise)
    if method != "mpo":
        raise ValueError(f"unknown method {method!r}")
    if noise.is_noiseless:
        return _pure_moments(n, encoding, decoding, phis, decoding_path, budget, profile)
    return _mixed_moments(n, encoding, decoding, phis, noise, decoding_path, budget, profile)


def simulate_protocol_noisy(n: int, encoding: Sequence[Gate], decoding: Sequence[Gate], phi: float,
                            noise: NoiseSpec | None = None, **kwargs) -> tuple[float, float]:
    """Exact (<J_z>, <J_z^2>) after probe -> free evolution(phi, noise) -> decoding."""
    jz, jz2 = noisy_moments(n, encoding, decoding, [phi], noise, **kwargs)[0]
    return float(jz), float(jz2)


def _pure_moments(n, encoding, decoding, phis, decoding_path, budget, profile):
    psi0 = mps_from_weight_coeffs(n, _coefficients_from_dicke(n, _probe_dicke(n, encoding)))
    if profile is not None:
        profile.add("probe", psi0)
    compiled = None
    if decoding_path == "compiled":
        compiled = pinv.pinv_to_mpo(pinv.compile_circuit(n, decoding))
        if profile is not None:
            profile.add("compiled decoding", compiled)
    jz, jz2 = mpo_jz(n), mpo_jz2(n)
    out = np.empty((len(phis), 2))
    for i, phi in enumerate(phis):
        psi = apply_mpo(mpo_rotation(n, Z, phi), psi0)
        if compiled is not None:
            psi = compress(apply_mpo(compiled, psi, stage="compiled decoding", budget=budget))
        else:
            for k, g in enumerate(decoding):
                psi = apply_mpo(gate_mpo(n, g), psi, stage=f"decoding gate {k} ({g})", budget=budget)
                if g.kind == TWIST:
                    psi = compress(psi)
        if profile is not None and i == 0:
            profile.add("pre-measurement state", psi)
        out[i] = mps_expectation(psi, jz).real, mps_expectation(psi, jz2).real
    return out


def _coefficients_from_dicke(n: int, amps: np.ndarray) -> np.ndarray:
    # Dicke amplitude a_w on a normalized state -> coefficient of each |x> with |x| = w
    return np.asarray(amps) / np.sqrt(comb(n, np.arange(n + 1)))


def _noisy_probe(n, encoding, noise, budget, profile) -> MPO:
    if not (noise.gate_active and circuits.twist_count(encoding)):
        amps = _probe_dicke(n, encoding)
        rho = density_from_dicke(np.outer(amps, amps.conj()))
        rho = compress(rho)
    else:
        rho = DensityMPO(mpo_product(n, np.full((2, 2), 0.5)).tensors)
        for k, g in enumerate(pinv.expand_twists(encoding)):
            rho = conjugate_by_unitary(rho, gate_mpo(n, g), stage=f"encoding gate {k} ({g})", budget=budget)
            if g.kind == TWIST:
                rho = compress(noisemodel.gate_dephasing(rho, noise.p))
    if profile is not None:
        profile.add("probe density", rho)
    return rho


def _heisenberg_observables(n, decoding, noise, decoding_path, budget, profile) -> list[MPO]:
    if decoding_path == "compiled":
        tables = _heisenberg_tables(n, decoding, noise)
        obs = [compress(pinv.pinv_to_mpo(t)) for t in tables]
    else:
        obs = [mpo_jz(n), mpo_jz2(n)]
        for k, g in reversed(list(enumerate(pinv.expand_twists(decoding)))):
            stage = f"decoding gate {k} ({g})"
            if g.kind == TWIST and noise.gate_active:
                obs = [noisemodel.gate_dephasing(o, noise.p) for o in obs]
            gd = gate_mpo(n, g).dagger()
            obs = [conjugate_by_unitary(o, gd, stage=stage, budget=budget) for o in obs]
    if profile is not None:
        for name, o in zip(("J_z", "J_z^2"), obs):
            profile.add(f"Heisenberg {name}", o)
    return obs


def _mixed_moments(n, encoding, decoding, phis, noise, decoding_path, budget, profile):
    rho = _noisy_probe(n, encoding, noise, budget, profile)
    obs = _heisenberg_observables(n, decoding, noise, decoding_path, budget, profile)
    out = np.empty((len(phis), 2))
    for i, phi in enumerate(phis):
        chan = noisemodel.free_evolution_channel_mpo(n, phi, noise)
        rho_phi = apply_channel(rho, chan)
        if profile is not None and i == 0:
            profile.add("after free evolution", rho_phi)
        out[i] = [expectation_trace(o, rho_phi).real for o in obs]
    return out


# --- type-sector back-end ----------------------------------------------------------


def _segments(gates: Sequence[Gate]) -> list[tuple[list[Gate], bool]]:
    """Split an expanded gate list after every twist; flag segments that end in a twist."""
    segs, cur = [], []
    for g in pinv.expand_twists(gates):
        cur.append(g)
        if g.kind == TWIST:
            segs.append((cur, True))
            cur = []
    if cur:
        segs.append((cur, False))
    return segs


def _heisenberg_tables(n: int, decoding: Sequence[Gate], noise: NoiseSpec) -> list[pinv.PermInvOperator]:
    """U^dag O U for O in (J_z, J_z^2), with dephasing after each noisy twist."""
    obs = [pinv.jz_table(n, 1), pinv.jz_table(n, 2)]
    for seg, ends_in_twist in reversed(_segments(decoding)):
        if ends_in_twist and noise.gate_active:
            f = pinv.dephasing_factors(n, noise.p)
            obs = [o.scaled(f) for o in obs]
        u = pinv.compile_circuit(n, seg)
        ud = u.dagger()
        obs = [pinv.multiply(ud, pinv.multiply(o, u)) for o in obs]
    return obs


def _heisenberg_tables_fast(n: int, decoding: Sequence[Gate], noise: NoiseSpec) -> list[pinv.PermInvOperator]:
    # same as _heisenberg_tables, but z-twists act as element-wise phases
    obs = [pinv.jz_table(n, 1), pinv.jz_table(n, 2)]
    block = None

    def flush(obs, block):
        if block is None:
            return obs
        u = pinv.product_table(n, block)
        ud = u.dagger()
        return [pinv.multiply(ud, pinv.multiply(o, u)) for o in obs]

    for g in reversed(pinv.expand_twists(decoding)):
        if g.kind == ROTATION:
            u = circuits.su2(g.axis, g.theta)
            block = u if block is None else block @ u
            continue
        obs = flush(obs, block)
        block = None
        if noise.gate_active:
            f = pinv.dephasing_factors(n, noise.p)
            obs = [o.scaled(f) for o in obs]
        ph = pinv.twist_conjugation_phases(n, -g.theta)
        obs = [o.scaled(ph) for o in obs]
    return flush(obs, block)


def _schrodinger_probe_table(n: int, encoding: Sequence[Gate], noise: NoiseSpec) -> pinv.PermInvOperator:
    if not (noise.gate_active and circuits.twist_count(encoding)):
        amps = _probe_dicke(n, encoding)
        return pinv.dicke_density_to_pinv(np.outer(amps, amps.conj()))
    rho = pinv.product_table(n, np.full((2, 2), 0.5))
    block = None

    def flush(rho, block):
        if block is None:
            return rho
        u = pinv.product_table(n, block)
        return pinv.multiply(u, pinv.multiply(rho, u.dagger()))

    for g in pinv.expand_twists(encoding):
        if g.kind == ROTATION:
            u = circuits.su2(g.axis, g.theta)
            block = u if block is None else u @ block
            continue
        rho = flush(rho, block)
        block = None
        rho = rho.scaled(pinv.twist_conjugation_phases(n, g.theta))
        rho = rho.scaled(pinv.dephasing_factors(n, noise.p))
    return flush(rho, block)


def sector_weights(n: int, noise: NoiseSpec) -> np.ndarray:
    """Number of (m, n) pairs of each type, weighted by the dephasing damping.

    Entry t is C(t00 + t11, t11) * H(t01, t10) * exp(-c1 (t01 + t10) / 2), where H
    sums exp(-c2 s_j s_{j+1}) over the placements of the +/- sites.
    """
    t01, t10, t11 = pinv._type_arrays(n)
    h = noisemodel.neighbour_sums(n, float(noise.c2))
    t00 = n - t01 - t10 - t11
    return comb(t00 + t11, t11) * h[t01, t10] * np.exp(-noise.c1 * (t01 + t10) / 2.0)


def typed_trace_kernel(obs: pinv.PermInvOperator, rho: pinv.PermInvOperator, noise: NoiseSpec) -> np.ndarray:
    """g[k], k = -N..N, with Tr(obs Lambda_phi(rho)) = sum_k g[k] exp(i phi k)."""
    n = rho.n_qubits
    t01, t10, t11 = pinv._type_arrays(n)
    obs_swapped = obs.cube()[t10, t01, t11]
    base = obs_swapped * rho.coeffs * sector_weights(n, noise)
    return np.bincount(t10 - t01 + n, weights=base.real, minlength=2 * n + 1) + 1j * np.bincount(
        t10 - t01 + n, weights=base.imag, minlength=2 * n + 1
    )


def _typed_moments(n, encoding, decoding, phis, noise):
    rho = _schrodinger_probe_table(n, encoding, noise)
    obs = _heisenberg_tables_fast(n, decoding, noise)
    k = np.arange(-n, n + 1)
    phase = np.exp(1j * np.outer(phis, k))
    return np.stack([(phase @ typed_trace_kernel(o, rho, noise)).real for o in obs], axis=1)
