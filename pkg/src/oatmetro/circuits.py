"""Arbitrary-axis twist (AAT) and parity symmetric (PAR) ansatz families.

Gate sequences are tuples of :class:`Gate` in time order (first applied
first).  Parameters are stored in gate-application order, encoding first.
Every parameter slot also carries a stable key ``(side, block, position)``
so that a shallower optimum can seed a deeper ansatz slot by slot.

AAT layout (time order)::

    encoding: R_y R_z | T_z R_x R_z | T_z R_x R_z | ...        (n_en blocks)
    decoding: ... | R_z R_x T_z | R_z R_x T_z | R_z R_x | R_x(pi/2)

New encoding blocks are appended at the end, new decoding blocks are put
at the beginning, so block ``b1`` always sits next to the outer flank.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import collective
from .collective import X, Y, Z, Axis, DickeOperator, DickeState, as_axis

ROTATION = "rotation"
TWIST = "twist"
FINAL_ANGLE = np.pi / 2


@dataclass(frozen=True)
class Gate:
    kind: str
    axis: Axis
    theta: float

    def __post_init__(self):
        if self.kind not in (ROTATION, TWIST):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "axis", as_axis(self.axis))
        object.__setattr__(self, "theta", float(self.theta))

    def dicke(self, n: int) -> DickeOperator:
        if self.kind == ROTATION:
            return collective.rotation(n, self.axis, self.theta)
        return collective.twist(n, self.axis, self.theta)

    def __str__(self):
        name = self.axis.name or "n"
        return f"{'R' if self.kind == ROTATION else 'T'}_{name}({self.theta:.6g})"


GateSequence = tuple  # tuple[Gate, ...]


def R(axis, theta) -> Gate:
    return Gate(ROTATION, axis, theta)


def T(axis, theta) -> Gate:
    return Gate(TWIST, axis, theta)


@dataclass(frozen=True)
class _Slot:
    kind: str
    axis: Axis
    key: tuple | None  # None marks the fixed final R_x(pi/2)


@dataclass(frozen=True)
class AnsatzSpec:
    """Ansatz family descriptor.

    ``n_en``/``n_de`` count one-axis twists on each side; for PAR they are
    twice the number of layers and must be even.
    """

    family: str
    n_en: int
    n_de: int
    n_qubits: int = 1

    def __post_init__(self):
        if self.family not in ("AAT", "PAR"):
            raise ValueError(f"unknown ansatz family {self.family!r}")
        if self.n_en < 0 or self.n_de < 0:
            raise ValueError("twist counts must be nonnegative")
        if self.family == "PAR" and (self.n_en % 2 or self.n_de % 2):
            raise ValueError("PAR twist counts are 2 per layer and must be even")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")

    @property
    def label(self) -> str:
        return f"{self.family}_{self.n_en}_{self.n_de}"

    @property
    def param_count(self) -> int:
        if self.family == "AAT":
            return 4 + 3 * (self.n_en + self.n_de)
        return 3 * (self.n_en + self.n_de) // 2

    @property
    def n_encoding_params(self) -> int:
        return sum(1 for s in _template(self)[0] if s.key is not None)

    def with_qubits(self, n: int) -> AnsatzSpec:
        return AnsatzSpec(self.family, self.n_en, self.n_de, n)

    def slot_keys(self) -> list[tuple]:
        enc, dec = _template(self)
        return [s.key for s in enc + dec if s.key is not None]


_LABEL = re.compile(r"^(AAT|PAR)[_^]?(\d+)_(\d+)$", re.IGNORECASE)


def parse_ansatz(label: str, n_qubits: int = 1) -> AnsatzSpec:
    """Parse ``AAT_1_2`` / ``PAR_2_6`` / ``classical``."""
    if label.strip().lower() == "classical":
        return classical_baseline_spec(n_qubits)
    m = _LABEL.match(label.strip())
    if m is None:
        raise ValueError(f"cannot parse ansatz label {label!r}")
    return AnsatzSpec(m.group(1).upper(), int(m.group(2)), int(m.group(3)), n_qubits)


def classical_baseline_spec(n: int) -> AnsatzSpec:
    """Twist-free AAT member; its optimum is the entanglement-free reference."""
    return AnsatzSpec("AAT", 0, 0, n)


def _template(spec: AnsatzSpec) -> tuple[list[_Slot], list[_Slot]]:
    if spec.family == "AAT":
        enc = [_Slot(ROTATION, Y, ("en", "f", 0)), _Slot(ROTATION, Z, ("en", "f", 1))]
        for b in range(1, spec.n_en + 1):
            enc += [
                _Slot(TWIST, Z, ("en", f"b{b}", 0)),
                _Slot(ROTATION, X, ("en", f"b{b}", 1)),
                _Slot(ROTATION, Z, ("en", f"b{b}", 2)),
            ]
        dec = []
        for b in range(spec.n_de, 0, -1):
            dec += [
                _Slot(ROTATION, Z, ("de", f"b{b}", 0)),
                _Slot(ROTATION, X, ("de", f"b{b}", 1)),
                _Slot(TWIST, Z, ("de", f"b{b}", 2)),
            ]
        dec += [_Slot(ROTATION, Z, ("de", "f", 0)), _Slot(ROTATION, X, ("de", "f", 1))]
    else:
        enc = []
        for layer in range(1, spec.n_en // 2 + 1):
            enc += [
                _Slot(TWIST, Z, ("en", f"L{layer}", 0)),
                _Slot(TWIST, X, ("en", f"L{layer}", 1)),
                _Slot(ROTATION, X, ("en", f"L{layer}", 2)),
            ]
        dec = []
        for layer in range(spec.n_de // 2, 0, -1):
            dec += [
                _Slot(ROTATION, X, ("de", f"L{layer}", 0)),
                _Slot(TWIST, X, ("de", f"L{layer}", 1)),
                _Slot(TWIST, Z, ("de", f"L{layer}", 2)),
            ]
    dec.append(_Slot(ROTATION, X, None))
    return enc, dec


def _bind(slots: list[_Slot], values: Sequence[float]) -> tuple:
    it = iter(values)
    return tuple(
        Gate(s.kind, s.axis, FINAL_ANGLE if s.key is None else next(it)) for s in slots
    )


def _check_params(spec: AnsatzSpec, params, family: str) -> np.ndarray:
    if spec.family != family:
        raise ValueError(f"expected a {family} spec, got {spec.family}")
    p = np.asarray(params, dtype=float).ravel()
    if p.size != spec.param_count:
        raise ValueError(f"{spec.label} takes {spec.param_count} parameters, got {p.size}")
    return p


def build_aat(spec: AnsatzSpec, params) -> tuple[tuple, tuple]:
    """Return (encoding, decoding) gate sequences; decoding ends with R_x(pi/2)."""
    p = _check_params(spec, params, "AAT")
    enc, dec = _template(spec)
    k = len(enc)
    return _bind(enc, p[:k]), _bind(dec, p[k:])


def build_par(spec: AnsatzSpec, params) -> tuple[tuple, tuple]:
    p = _check_params(spec, params, "PAR")
    enc, dec = _template(spec)
    k = len(enc)
    return _bind(enc, p[:k]), _bind(dec, p[k:])


def build(spec: AnsatzSpec, params) -> tuple[tuple, tuple]:
    return (build_aat if spec.family == "AAT" else build_par)(spec, params)


def twist_count(gates: Sequence[Gate]) -> int:
    return sum(1 for g in gates if g.kind == TWIST)


def sequence_unitary(n: int, gates: Sequence[Gate]) -> DickeOperator:
    """Product of the gates in the Dicke basis (last gate leftmost)."""
    u = np.eye(n + 1, dtype=complex)
    for g in gates:
        u = g.dicke(n).matrix @ u
    return DickeOperator(n, u)


def apply_sequence(state: DickeState, gates: Sequence[Gate]) -> DickeState:
    amps = state.amplitudes
    for g in gates:
        amps = g.dicke(state.n_qubits).matrix @ amps
    return DickeState(state.n_qubits, amps)


def transfer_params(shallow: AnsatzSpec, shallow_params, deep: AnsatzSpec) -> np.ndarray:
    """Copy parameters slot-by-slot into a deeper ansatz; new slots start at 0.

    The deeper ansatz must contain every slot of the shallower one, which
    makes the inserted blocks identities and leaves the circuit unchanged.
    """
    if shallow.family != deep.family:
        raise ValueError("cannot transfer parameters between ansatz families")
    src_keys = shallow.slot_keys()
    dst_keys = deep.slot_keys()
    missing = set(src_keys) - set(dst_keys)
    if missing:
        raise ValueError(f"{deep.label} does not extend {shallow.label}")
    values = dict(zip(src_keys, np.asarray(shallow_params, dtype=float)))
    return np.array([values.get(k, 0.0) for k in dst_keys])


# --- expressing arbitrary twist/rotation circuits in AAT form -----------------

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def su2(axis, theta: float) -> np.ndarray:
    """Spin-1/2 image exp(-i theta n.sigma/2) of a global rotation."""
    n = as_axis(axis).vector
    gen = sum(c * s for c, s in zip(n, _PAULI))
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * gen


def frame_rotation(axis) -> tuple[Axis, float]:
    """(a, beta) such that R_a(beta) J_z R_a(beta)^dag = n.J for n = ``axis``."""
    n = as_axis(axis).vector
    cross = np.cross([0.0, 0.0, 1.0], n)
    s = np.linalg.norm(cross)
    if s < 1e-15:
        return X, (0.0 if n[2] > 0 else np.pi)
    return Axis.normalized(cross), float(np.arctan2(s, n[2]))


def _frame_to(axis: Axis) -> np.ndarray:
    """SU(2) element V with V sigma_z V^dag = n.sigma."""
    a, beta = frame_rotation(axis)
    return su2(a, beta)


def zxz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """(alpha, beta, gamma) with u = R_z(gamma) R_x(beta) R_z(alpha) for u in SU(2)."""
    sigma = -2 * np.angle(u[0, 0]) if abs(u[0, 0]) > 1e-12 else 0.0
    delta = -2 * np.angle(1j * u[0, 1]) if abs(u[0, 1]) > 1e-12 else 0.0
    c = np.real(u[0, 0] * np.exp(0.5j * sigma))
    s = np.real(1j * u[0, 1] * np.exp(0.5j * delta))
    return (sigma - delta) / 2, 2 * np.arctan2(s, c), (sigma + delta) / 2


def _zy_angles(u: np.ndarray) -> tuple[float, float]:
    # u = R_z(a) R_y(b)
    a = -2 * np.angle(u[0, 0]) if abs(u[0, 0]) > 1e-12 else 2 * np.angle(u[1, 0])
    c = np.real(u[0, 0] * np.exp(0.5j * a))
    s = np.real(u[1, 0] * np.exp(-0.5j * a))
    return a, 2 * np.arctan2(s, c)


def _xz_angles(u: np.ndarray) -> tuple[float, float]:
    # u = R_x(b) R_z(a)
    a = -2 * np.angle(u[0, 0]) if abs(u[0, 0]) > 1e-12 else -2 * np.angle(1j * u[1, 0])
    c = np.real(u[0, 0] * np.exp(0.5j * a))
    s = np.real(1j * u[1, 0] * np.exp(0.5j * a))
    return a, 2 * np.arctan2(s, c)


def _split_at_twists(gates: Sequence[Gate]) -> tuple[list[np.ndarray], list[float]]:
    # rewrite T_n = V T_z V^dag and merge the rotations between consecutive twists
    blocks = [np.eye(2, dtype=complex)]
    angles = []
    for g in gates:
        if g.kind == ROTATION:
            blocks[-1] = su2(g.axis, g.theta) @ blocks[-1]
        else:
            v = _frame_to(g.axis)
            blocks[-1] = v.conj().T @ blocks[-1]
            angles.append(g.theta)
            blocks.append(v)
    return blocks, angles


def aat_encoding_params(gates: Sequence[Gate], tol: float = 1e-9) -> np.ndarray:
    """AAT encoding parameters realizing the same unitary as ``gates``.

    ``gates`` may contain rotations and twists about arbitrary axes.  The
    rotation preceding the first twist must be of the form R_z R_y (always
    true when the circuit starts with a twist), since the AAT encoding flank
    has only those two angles.
    """
    blocks, angles = _split_at_twists(gates)
    out = []
    carry = np.eye(2, dtype=complex)
    for k in range(len(angles), 0, -1):
        alpha, beta, gamma = zxz_angles(carry @ blocks[k])
        out = [angles[k - 1], beta, gamma] + out
        carry = su2(Z, alpha)
    w0 = carry @ blocks[0]
    a, b = _zy_angles(w0)
    if not np.allclose(su2(Z, a) @ su2(Y, b), w0, atol=tol):
        raise ValueError("leading rotation is not of the form R_z R_y")
    return np.array([b, a] + out)


def aat_decoding_params(gates: Sequence[Gate], tol: float = 1e-9) -> np.ndarray:
    """AAT decoding parameters (excluding the final R_x(pi/2)) for ``gates``.

    The rotation after the last twist must be of the form R_x R_z.
    """
    blocks, angles = _split_at_twists(gates)
    out = []
    carry = np.eye(2, dtype=complex)
    for k in range(len(angles)):
        alpha, beta, gamma = zxz_angles(blocks[k] @ carry)
        out += [alpha, beta, angles[k]]
        carry = su2(Z, gamma)
    wl = blocks[-1] @ carry
    a, b = _xz_angles(wl)
    if not np.allclose(su2(X, b) @ su2(Z, a), wl, atol=tol):
        raise ValueError("trailing rotation is not of the form R_x R_z")
    return np.array(out + [a, b])
