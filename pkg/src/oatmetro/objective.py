"""Bayesian mean squared error under a zero-mean Gaussian prior.

With the estimator phi_est(w) = a (N - 2w) / 2 the outcome average of the
squared error only needs <J_z> and <J_z^2> of the pre-measurement state, so
for any protocol

    Delta phi^2 = dphi^2 - 2 a (phi <J_z>)_avg + a^2 <J_z^2>_avg,

where avg is the prior average.  Prior averages use Gauss-Hermite nodes
mapped by phi = sqrt(2) dphi x.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import roots_hermite

from . import circuits, collective, tensornet
from .circuits import AnsatzSpec, Gate
from .noisemodel import NoiseSpec

DEGENERATE_TOL = 1e-14
VARIANCE_TOL = 1e-10
ENGINES = ("collective", "tensornet")


class DegenerateEstimatorError(ValueError):
    """<J_z^2>_avg is too small for the optimal estimator constant to exist."""


@dataclass(frozen=True)
class Prior:
    """Gaussian prior with mean 0 and standard deviation ``std_dev`` (radians)."""

    std_dev: float

    def __post_init__(self):
        s = float(self.std_dev)
        if not (np.isfinite(s) and s > 0):
            raise ValueError(f"prior standard deviation must be positive, got {self.std_dev!r}")
        object.__setattr__(self, "std_dev", s)

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return self.std_dev**2


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite rule for the weight exp(-x^2)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    def phis(self, prior: Prior) -> np.ndarray:
        return np.sqrt(2.0) * prior.std_dev * self.nodes

    def prior_weights(self) -> np.ndarray:
        """Weights that average a function of phi over the prior (they sum to 1)."""
        return self.weights / np.sqrt(np.pi)


@lru_cache(maxsize=16)
def gauss_hermite(n: int) -> QuadratureRule:
    if int(n) != n or n < 1:
        raise ValueError(f"quadrature order must be a positive integer, got {n!r}")
    x, w = roots_hermite(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


@dataclass(frozen=True, eq=False)
class MomentCurve:
    """(<J_z>, <J_z^2>) at each quadrature node (or any list of phases)."""

    phis: np.ndarray
    jz: np.ndarray
    jz2: np.ndarray

    def __post_init__(self):
        for name in ("phis", "jz", "jz2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            object.__setattr__(self, name, arr)
        if not (len(self.phis) == len(self.jz) == len(self.jz2)):
            raise ValueError("moment curve arrays differ in length")
        bad = self.jz2 < self.jz**2 - VARIANCE_TOL * np.maximum(1.0, self.jz2)
        if np.any(bad):
            raise ValueError("moment curve has negative J_z variance")


@dataclass(frozen=True)
class EstimatorConfig:
    a: float

    def __post_init__(self):
        if not np.isfinite(self.a):
            raise ValueError("estimator constant must be finite")


# --- moments ---------------------------------------------------------------------


def _gate_action(n: int, gate: Gate, x: np.ndarray) -> np.ndarray:
    if gate.theta == 0.0:
        return x
    power = 1 if gate.kind == circuits.ROTATION else 2
    if gate.axis == collective.Z:
        ph = np.exp(-1j * gate.theta * collective.jz_eigenvalues(n) ** power)
        return ph[:, None] * x if x.ndim == 2 else ph * x
    vals, vecs = collective._eigensystem(n, gate.axis)
    ph = np.exp(-1j * gate.theta * vals**power)
    y = vecs.conj().T @ x
    return vecs @ (ph[:, None] * y if x.ndim == 2 else ph * y)


def _collective_moments(n: int, encoding, decoding, phis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    psi = collective.spin_coherent_plus(n).amplitudes
    for g in encoding:
        psi = _gate_action(n, g, psi)
    u = np.eye(n + 1, dtype=complex)
    for g in decoding:
        u = _gate_action(n, g, u)
    ev = collective.jz_eigenvalues(n)
    # e^{-i phi J_z} is diagonal in the Dicke basis; evolve all nodes at once
    states = u @ (np.exp(-1j * np.outer(ev, phis)) * psi[:, None])
    probs = states.real**2 + states.imag**2
    return ev @ probs, (ev**2) @ probs


def protocol_moments(n: int, encoding: Sequence[Gate], decoding: Sequence[Gate], phis, *,
                     engine: str = "collective", noise: NoiseSpec | None = None,
                     method: str = "auto", decoding_path: str = "per-gate") -> tuple[np.ndarray, np.ndarray]:
    """(<J_z>, <J_z^2>) arrays at the given phases."""
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if engine == "collective":
        if noise is not None and not noise.is_noiseless:
            raise ValueError("the collective engine is noiseless; use engine='tensornet' for noise")
        return _collective_moments(n, encoding, decoding, phis)
    if engine != "tensornet":
        raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
    m = tensornet.noisy_moments(n, encoding, decoding, phis, noise, method=method, decoding_path=decoding_path)
    return m[:, 0], m[:, 1]


def moment_curve(encoding: Sequence[Gate], decoding: Sequence[Gate], prior: Prior, rule: QuadratureRule, *,
                 n_qubits: int, engine: str = "collective", noise: NoiseSpec | None = None,
                 method: str = "auto", decoding_path: str = "per-gate") -> MomentCurve:
    """Moments at every quadrature node of ``rule`` mapped onto ``prior``."""
    phis = rule.phis(prior)
    jz, jz2 = protocol_moments(n_qubits, encoding, decoding, phis, engine=engine, noise=noise,
                               method=method, decoding_path=decoding_path)
    return MomentCurve(phis, jz, jz2)


# --- estimator -------------------------------------------------------------------


def _check(curve: MomentCurve, prior: Prior, rule: QuadratureRule):
    if len(curve.phis) != rule.order:
        raise ValueError("moment curve does not match the quadrature rule")
    if not np.allclose(curve.phis, rule.phis(prior), rtol=0, atol=1e-12):
        raise ValueError("moment curve nodes do not match the prior")


def prior_averages(curve: MomentCurve, prior: Prior, rule: QuadratureRule) -> tuple[float, float]:
    """((phi <J_z>)_avg, <J_z^2>_avg)."""
    _check(curve, prior, rule)
    w = rule.prior_weights()
    return float(w @ (curve.phis * curve.jz)), float(w @ curve.jz2)


def a_opt(curve: MomentCurve, prior: Prior, rule: QuadratureRule) -> EstimatorConfig:
    """Minimizer of the BMSE over the estimator constant."""
    cross, second = prior_averages(curve, prior, rule)
    if second < DEGENERATE_TOL:
        raise DegenerateEstimatorError(f"<J_z^2>_avg = {second:.3e} is below {DEGENERATE_TOL}")
    return EstimatorConfig(cross / second)


def bmse(curve: MomentCurve, prior: Prior, rule: QuadratureRule, a) -> float:
    """Delta phi^2 for the estimator constant ``a`` (float or EstimatorConfig)."""
    a = a.a if isinstance(a, EstimatorConfig) else float(a)
    cross, second = prior_averages(curve, prior, rule)
    return prior.variance - 2.0 * a * cross + a * a * second


def optimal_bmse(curve: MomentCurve, prior: Prior, rule: QuadratureRule) -> tuple[float, float]:
    """(a, Delta phi^2) with a = a_opt, falling back to a = 0 when a_opt is undefined."""
    try:
        a = a_opt(curve, prior, rule).a
    except DegenerateEstimatorError:
        a = 0.0
    return a, bmse(curve, prior, rule, a)


def estimator_curves(encoding: Sequence[Gate], decoding: Sequence[Gate], a, phi_grid, *, n_qubits: int,
                     engine: str = "collective", noise: NoiseSpec | None = None, **kwargs) -> dict[str, np.ndarray]:
    """Outcome-averaged estimator mean, variance and bias at each phi."""
    a = a.a if isinstance(a, EstimatorConfig) else float(a)
    phis = np.atleast_1d(np.asarray(phi_grid, dtype=float))
    jz, jz2 = protocol_moments(n_qubits, encoding, decoding, phis, engine=engine, noise=noise, **kwargs)
    mean = a * jz
    var = a * a * np.maximum(jz2 - jz**2, 0.0)
    return {"phi": phis, "mean": mean, "variance": var, "bias": mean - phis}


# --- objective for optimization ------------------------------------------------------


class _CollectiveKernel:
    """Noiseless collective-engine objective with everything but the angles precomputed.

    Mirrors ``moment_curve`` + ``optimal_bmse`` for one ansatz and prior;
    per call it only exponentiates the slot generators and does a handful of
    small matrix products.
    """

    def __init__(self, spec: AnsatzSpec, prior: Prior, rule: QuadratureRule):
        n = spec.n_qubits
        enc, dec = circuits._template(spec)
        self.n_enc = sum(1 for s in enc if s.key is not None)
        ev = collective.jz_eigenvalues(n)
        self.ev, self.ev2 = ev, ev**2
        self.psi0 = collective.spin_coherent_plus(n).amplitudes
        self.enc = [self._slot(n, s) for s in enc]
        self.dec = [self._slot(n, s) for s in dec]
        self.phis = rule.phis(prior)
        self.weights = rule.prior_weights()
        self.phase = np.exp(-1j * np.outer(ev, self.phis))
        self.variance = prior.variance

    def _slot(self, n: int, slot):
        power = 1 if slot.kind == circuits.ROTATION else 2
        fixed = None if slot.key is not None else circuits.FINAL_ANGLE
        if slot.axis == collective.Z:
            return power, None, collective.jz_eigenvalues(n) ** power, fixed
        vals, vecs = collective._eigensystem(n, slot.axis)
        return power, vecs, vals**power, fixed

    @staticmethod
    def _apply(gate, theta: float, x: np.ndarray) -> np.ndarray:
        _, vecs, gen, fixed = gate
        if fixed is not None:
            theta = fixed
        if theta == 0.0:
            return x
        ph = np.exp(-1j * theta * gen)
        if x.ndim == 2:
            ph = ph[:, None]
        if vecs is None:
            return ph * x
        return vecs @ (ph * (vecs.conj().T @ x))

    def evaluate(self, params) -> tuple[float, float]:
        p = np.asarray(params, dtype=float).ravel()
        it = iter(p)
        psi = self.psi0
        for g in self.enc:
            psi = self._apply(g, next(it) if g[3] is None else 0.0, psi)
        u = np.eye(len(psi), dtype=complex)
        for g in self.dec:
            u = self._apply(g, next(it) if g[3] is None else 0.0, u)
        states = u @ (self.phase * psi[:, None])
        probs = states.real**2 + states.imag**2
        cross = float(self.weights @ (self.phis * (self.ev @ probs)))
        second = float(self.weights @ (self.ev2 @ probs))
        a = cross / second if second >= DEGENERATE_TOL else 0.0
        return a, (self.variance - 2.0 * a * cross + a * a * second) / self.variance


@dataclass
class ProtocolObjective:
    """Delta phi^2 / dphi^2 as a function of ansatz parameters (a re-optimized each call)."""

    spec: AnsatzSpec
    prior: Prior
    rule: QuadratureRule
    engine: str = "collective"
    noise: NoiseSpec | None = None
    method: str = "auto"
    decoding_path: str = "per-gate"
    n_calls: int = 0

    def __post_init__(self):
        noiseless = self.noise is None or self.noise.is_noiseless
        self._kernel = _CollectiveKernel(self.spec, self.prior, self.rule) if (
            self.engine == "collective" and noiseless) else None

    @property
    def n_qubits(self) -> int:
        return self.spec.n_qubits

    def curve(self, params) -> MomentCurve:
        enc, dec = circuits.build(self.spec, params)
        return moment_curve(enc, dec, self.prior, self.rule, n_qubits=self.n_qubits, engine=self.engine,
                            noise=self.noise, method=self.method, decoding_path=self.decoding_path)

    def evaluate(self, params) -> tuple[float, float]:
        """(a_opt, Delta phi^2 / dphi^2)."""
        self.n_calls += 1
        if self._kernel is not None:
            if np.size(params) != self.spec.param_count:
                raise ValueError(f"{self.spec.label} takes {self.spec.param_count} parameters, got {np.size(params)}")
            return self._kernel.evaluate(params)
        a, value = optimal_bmse(self.curve(params), self.prior, self.rule)
        return a, value / self.prior.variance

    def __call__(self, params) -> float:
        return self.evaluate(params)[1]
