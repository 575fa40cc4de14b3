"""Hybrid local optimizer: Nelder-Mead and quadratic-model refinement, alternated.

The quadratic stage is a damped Newton method on finite-difference
derivatives: gradient by central differences with step 1e-6, Hessian by
second differences, shifted to be positive definite, followed by a
backtracking line search.  On an exact quadratic it lands on the minimizer
in one step, up to finite-difference error.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import circuits
from .circuits import AnsatzSpec
from .noisemodel import NoiseSpec
from .objective import Prior, ProtocolObjective, gauss_hermite

NM_COEFFS = {"reflection": 1.0, "expansion": 2.0, "contraction": 0.5, "shrink": 0.5}
INIT_MODES = ("zeros", "sequential")


class NonFiniteObjectiveError(FloatingPointError):
    def __init__(self, x, value):
        super().__init__(f"objective returned {value!r} at x = {np.array2string(np.asarray(x), precision=17)}")
        self.x = np.asarray(x)
        self.value = value


@dataclass(frozen=True)
class OptimizerConfig:
    eps1: float = 1e-13
    eps2: float = 1e-13
    eps3: float = 1e-13
    nm_max_iters: int = 20000
    qr_max_iters: int = 100
    max_stages: int = 40
    quad_order: int = 500
    init_mode: str = "zeros"
    rng_seed: int = 0
    nm_step: float = 0.05
    fd_step: float = 1e-6
    hessian_step: float = 1e-4

    def __post_init__(self):
        for name in ("eps1", "eps2", "eps3", "nm_step", "fd_step", "hessian_step"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        for name in ("nm_max_iters", "qr_max_iters", "max_stages", "quad_order"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")

    @classmethod
    def with_eps(cls, eps: float, **kwargs) -> OptimizerConfig:
        return cls(eps1=eps, eps2=eps, eps3=eps, **kwargs)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StageResult:
    x: np.ndarray
    fun: float
    iterations: int
    n_evals: int
    converged: bool
    message: str


@dataclass
class OptimizationResult:
    x: np.ndarray
    fun: float
    history: list = field(default_factory=list)  # value after x0 and after each stage
    stages: list = field(default_factory=list)  # per-stage log records
    converged: bool = True
    spec: AnsatzSpec | None = None
    a: float | None = None
    wall_time: float = 0.0
    parent: str | None = None

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def ratio(self) -> float:
        """Delta phi / dphi."""
        return float(np.sqrt(max(self.fun, 0.0)))


class _Counted:
    def __init__(self, f: Callable):
        self.f = f
        self.n = 0

    def __call__(self, x) -> float:
        self.n += 1
        val = float(self.f(x))
        if not np.isfinite(val):
            raise NonFiniteObjectiveError(x, val)
        return val


# --- Nelder-Mead -----------------------------------------------------------------


def nelder_mead(f: Callable, x0, eps1: float = 1e-13, max_iters: int = 20000, step: float = 0.05) -> StageResult:
    """Simplex search stopped when max f - min f over the simplex is at most ``eps1``."""
    fc = _Counted(f)
    x0 = np.asarray(x0, dtype=float).ravel()
    k = x0.size
    if k < 1:
        raise ValueError("need at least one variable")
    alpha, gamma, rho, sigma = (NM_COEFFS[c] for c in ("reflection", "expansion", "contraction", "shrink"))
    sim = np.vstack([x0] + [x0 + step * e for e in np.eye(k)])
    fs = np.array([fc(x) for x in sim])
    it = 0
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        spread = fs[-1] - fs[0]
        if spread <= eps1:
            return StageResult(sim[0].copy(), float(fs[0]), it, fc.n, True, f"spread {spread:.3e} <= eps1")
        if it >= max_iters:
            return StageResult(sim[0].copy(), float(fs[0]), it, fc.n, False, f"max_iters reached, spread {spread:.3e}")
        it += 1
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = fc(xr)
        if fs[0] <= fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fc(xe)
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fs[-1]:
            xc = centroid + rho * (xr - centroid)
            fcv = fc(xc)
            if fcv <= fr:
                sim[-1], fs[-1] = xc, fcv
                continue
        else:
            xc = centroid + rho * (worst - centroid)
            fcv = fc(xc)
            if fcv < fs[-1]:
                sim[-1], fs[-1] = xc, fcv
                continue
        sim[1:] = sim[0] + sigma * (sim[1:] - sim[0])
        fs[1:] = [fc(x) for x in sim[1:]]


# --- quadratic-model refinement ------------------------------------------------------


def fd_gradient(f: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def fd_hessian(f: Callable, x, step: float = 1e-4, f0: float | None = None) -> np.ndarray:
    """Second-difference Hessian (2k^2 evaluations)."""
    x = np.asarray(x, dtype=float)
    k = x.size
    f0 = f(x) if f0 is None else f0
    h = np.empty((k, k))
    eye = np.eye(k) * step
    for i in range(k):
        h[i, i] = (f(x + eye[i]) - 2.0 * f0 + f(x - eye[i])) / step**2
        for j in range(i):
            val = (f(x + eye[i] + eye[j]) - f(x + eye[i] - eye[j]) - f(x - eye[i] + eye[j])
                   + f(x - eye[i] - eye[j])) / (4.0 * step**2)
            h[i, j] = h[j, i] = val
    return h


def _newton_step(g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimizer of the convexified quadratic model and its predicted decrease."""
    lam, vec = np.linalg.eigh(0.5 * (h + h.T))
    scale = max(np.max(np.abs(lam)), 1e-12)
    # flip negative and lift tiny curvature so the model is convex
    lam = np.maximum(np.abs(lam), 1e-8 * scale)
    gv = vec.T @ g
    return -vec @ (gv / lam), 0.5 * float(gv @ (gv / lam))


def quadratic_refine(f: Callable, x0, eps2: float = 1e-13, max_iters: int = 100, grad_f: Callable | None = None,
                     fd_step: float = 1e-6, hessian_step: float = 1e-4) -> StageResult:
    """Minimize successive quadratic models until consecutive minima differ by at most ``eps2``."""
    fc = _Counted(f)
    grad = grad_f if grad_f is not None else (lambda x: fd_gradient(fc, x, fd_step))
    x = np.asarray(x0, dtype=float).ravel().copy()
    fx = fc(x)
    for it in range(1, max_iters + 1):
        g = np.asarray(grad(x), dtype=float)
        h = fd_hessian(fc, x, hessian_step, fx)
        p, predicted = _newton_step(g, h)
        if predicted <= eps2:
            # the model minimum is within eps2; take it unless it is measurably worse
            xn = x + p
            fn = fc(xn)
            if fn <= fx:
                x, fx = xn, fn
            return StageResult(x, fx, it, fc.n, True, f"predicted decrease {predicted:.3e} <= eps2")
        t = 1.0
        for _ in range(40):
            xn = x + t * p
            fn = fc(xn)
            if fn < fx:
                break
            t *= 0.5
        else:
            return StageResult(x, fx, it, fc.n, False, "line search failed to decrease the objective")
        gap = fx - fn
        x, fx = xn, fn
        if gap <= eps2:
            return StageResult(x, fx, it, fc.n, True, f"consecutive minima differ by {gap:.3e} <= eps2")
    return StageResult(x, fx, max_iters, fc.n, False, "max_iters reached")


# --- alternation ---------------------------------------------------------------------


def alternate(f: Callable, x0, config: OptimizerConfig | None = None) -> OptimizationResult:
    """NM -> quadratic -> NM -> ... until consecutive stage values agree within eps3."""
    config = config or OptimizerConfig()
    t0 = time.perf_counter()
    x = np.asarray(x0, dtype=float).ravel().copy()
    fx = float(f(x))
    if not np.isfinite(fx):
        raise NonFiniteObjectiveError(x, fx)
    result = OptimizationResult(x, fx, history=[fx])
    for k in range(config.max_stages):
        if k % 2 == 0:
            name = "nelder-mead"
            st = nelder_mead(f, x, config.eps1, config.nm_max_iters, config.nm_step)
        else:
            name = "quadratic"
            st = quadratic_refine(f, x, config.eps2, config.qr_max_iters, fd_step=config.fd_step,
                                  hessian_step=config.hessian_step)
        # a stage may only improve on its starting point
        if st.fun > fx:
            st.x, st.fun = x, fx
        record = {
            "stage": k,
            "algorithm": name,
            "iterations": st.iterations,
            "evaluations": st.n_evals,
            "value": st.fun,
            "converged": st.converged,
            "terminal": st.message,
        }
        if name == "nelder-mead":
            record["coefficients"] = dict(NM_COEFFS)
        result.stages.append(record)
        result.history.append(st.fun)
        gap = fx - st.fun
        x, fx = st.x, st.fun
        if gap <= config.eps3:
            # an intermediate stage may stop at its iteration cap; what counts is the final one
            result.converged = st.converged
            break
    else:
        result.converged = False
    result.x, result.fun = x, fx
    result.wall_time = time.perf_counter() - t0
    return result


# --- ansatz-level drivers -------------------------------------------------------------


def sequential_init(shallower: OptimizationResult, deeper_spec: AnsatzSpec,
                    shallower_spec: AnsatzSpec | None = None) -> np.ndarray:
    """Seed a deeper ansatz with a shallower optimum; new gates start as identities."""
    shallower_spec = shallower_spec or shallower.spec
    if shallower_spec is None:
        raise ValueError("the shallower result does not record its ansatz")
    return circuits.transfer_params(shallower_spec, shallower.x, deeper_spec)


def optimize_ansatz(spec: AnsatzSpec, delta_phi: float, config: OptimizerConfig | None = None, x0=None, *,
                    engine: str = "collective", noise: NoiseSpec | None = None, method: str = "auto",
                    decoding_path: str = "per-gate") -> OptimizationResult:
    config = config or OptimizerConfig()
    obj = ProtocolObjective(spec, Prior(delta_phi), gauss_hermite(config.quad_order), engine=engine, noise=noise,
                            method=method, decoding_path=decoding_path)
    x0 = np.zeros(spec.param_count) if x0 is None else np.asarray(x0, dtype=float)
    res = alternate(obj, x0, config)
    res.spec = spec
    res.a = obj.evaluate(res.x)[0]
    return res


def chain_root(spec: AnsatzSpec) -> bool:
    """Chains start from one decoding block (AAT with n_de <= 1, PAR with one layer)."""
    return spec.n_de <= (1 if spec.family == "AAT" else 2)


def chain_parent(spec: AnsatzSpec, done: Sequence[OptimizationResult]) -> OptimizationResult | None:
    """Deepest earlier result that differs from ``spec`` only by missing decoding blocks."""
    if chain_root(spec):
        return None
    best = None
    for r in done:
        s = r.spec
        if s is not None and s.family == spec.family and s.n_en == spec.n_en and s.n_de < spec.n_de:
            if best is None or s.n_de > best.spec.n_de:
                best = r
    return best


def optimize_chain(specs: Sequence[AnsatzSpec], delta_phi: float, config: OptimizerConfig | None = None,
                   **kwargs) -> list[OptimizationResult]:
    """Optimize ansatzes shallowest decoding first; with sequential init each seeds the next deeper one."""
    config = config or OptimizerConfig()
    order = sorted(range(len(specs)), key=lambda i: (specs[i].family, specs[i].n_en, specs[i].n_de))
    results: list[OptimizationResult | None] = [None] * len(specs)
    done: list[OptimizationResult] = []
    for i in order:
        spec = specs[i]
        parent = chain_parent(spec, done) if config.init_mode == "sequential" else None
        x0 = None if parent is None else sequential_init(parent, spec)
        res = optimize_ansatz(spec, delta_phi, config, x0, **kwargs)
        res.parent = None if parent is None else parent.spec.label
        results[i] = res
        done.append(res)
    return results
