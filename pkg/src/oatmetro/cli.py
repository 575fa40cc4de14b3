"""Command-line experiment runner.

Every run writes into ``--out``:

* ``<experiment>.csv``: result table, one row per grid cell, flushed per row,
  ordered by grid index;
* ``<experiment>.manifest.json``: resolved configuration, code version and seed;
* ``<experiment>.timings.csv``: wall time per grid cell (kept out of the
  result table so reruns reproduce it bit for bit);
* ``params.json`` (optimizing experiments): optimized circuit parameters.

Configuration precedence: command-line flags, then the ``--config`` JSON
file, then built-in defaults.  A manifest is itself a valid ``--config``
file, so ``--config <experiment>.manifest.json --out other/`` replays a run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__, circuits, objective, optimize
from .circuits import AnsatzSpec
from .noisemodel import NoiseSpec
from .objective import Prior, ProtocolObjective, gauss_hermite

EXPERIMENTS = ("optimize", "noise-grid", "circuit-noise", "bias-variance", "hyper-study")
SWEEP_GRID = tuple(float(x) for x in np.geomspace(0.05, 1.2, 16))
COMPARISON_GRID = tuple(float(x) for x in np.linspace(0.5, 0.9, 9))
NOISY_DELTA_PHI = 0.74
SKIP_NONPSD = "skipped: correlation matrix not positive semidefinite"

DEFAULTS = {
    "n_qubits": 30,
    "ansatz": None,
    "delta_phi": None,
    "delta_phi_grid": None,
    "c1": [0.0],
    "c2": [0.0],
    "c2_rel": None,
    "p": [0.0],
    "quad_nodes": None,
    "eps": 1e-13,
    "init": "sequential",
    "engine": None,
    "decoding_path": "per-gate",
    "tn_method": "auto",
    "seed": 0,
    "out": "results",
    "params": None,
    "workers": 1,
    "restarts": 0,
    "phi_points": 201,
    "phi_max": None,
    "hyper_eps": [1e-13, 1e-8],
    "hyper_init": ["sequential", "zeros"],
    "hyper_quad": [500, 25],
    "resume": False,
}

DEFAULT_ANSATZ = {
    "optimize": ["classical", "AAT_1_0", "AAT_1_1", "AAT_1_2"],
    "noise-grid": ["AAT_1_1"],
    "circuit-noise": ["classical"] + [f"AAT_1_{k}" for k in range(1, 7)],
    "bias-variance": ["AAT_1_1", "AAT_1_2"],
    "hyper-study": ["AAT_1_3", "PAR_2_6"],
}


class ConfigError(ValueError):
    pass


# --- configuration -----------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ints(text: str) -> list[int]:
    return [int(v) for v in _floats(text)]


def _labels(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oatmetro", description="Variational Bayesian phase-estimation studies.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with option values, or a run manifest (flags take precedence)")
        p.add_argument("--n-qubits", type=int)
        p.add_argument("--ansatz", type=_labels, help="comma-separated labels, e.g. classical,AAT_1_1,PAR_2_2")
        p.add_argument("--delta-phi", type=_floats, help="comma-separated prior widths")
        p.add_argument("--delta-phi-grid", choices=["sweep", "comparison", "noisy"])
        p.add_argument("--c1", type=_floats)
        p.add_argument("--c2", type=_floats)
        p.add_argument("--c2-rel", type=_floats, help="c2 values as multiples of c1 (replaces --c2)")
        p.add_argument("--p", type=_floats, help="per-twist dephasing strengths")
        p.add_argument("--quad-nodes", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--init", choices=optimize.INIT_MODES)
        p.add_argument("--engine", choices=objective.ENGINES)
        p.add_argument("--decoding-path", choices=["per-gate", "compiled"])
        p.add_argument("--tn-method", choices=["auto", "mpo", "typed"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--params", help="params.json from an earlier optimize run")
        p.add_argument("--workers", type=int)
        p.add_argument("--restarts", type=int, help="extra random-start optimizations per cell")
        p.add_argument("--phi-points", type=int)
        p.add_argument("--phi-max", type=float)
        p.add_argument("--hyper-eps", type=_floats)
        p.add_argument("--hyper-init", type=_labels)
        p.add_argument("--hyper-quad", type=_ints)
        p.add_argument("--resume", action="store_true")
    return parser


def resolve_config(argv: Sequence[str] | None = None) -> dict:
    args = vars(build_parser().parse_args(argv))
    experiment = args.pop("experiment")
    cfg = dict(DEFAULTS)
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        if not isinstance(from_file, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        if "experiment_id" in from_file and "config" in from_file:
            # a run manifest: replay its resolved configuration
            from_file = from_file["config"]
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = set(from_file) - set(DEFAULTS) - {"experiment"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if from_file.pop("experiment", experiment) != experiment:
            raise ConfigError("config file is for a different experiment")
        cfg.update(from_file)
    cfg.update(args)
    cfg["experiment"] = experiment
    return finalize_config(cfg)


def _as_list(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


def finalize_config(cfg: dict) -> dict:
    """Fill experiment-dependent defaults and validate."""
    cfg = dict(cfg)
    kind = cfg["experiment"]
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}")
    for key in ("c1", "c2", "p", "c2_rel", "delta_phi", "ansatz", "hyper_eps", "hyper_init", "hyper_quad"):
        cfg[key] = _as_list(cfg[key])
    if cfg["ansatz"] is None:
        cfg["ansatz"] = list(DEFAULT_ANSATZ[kind])
    if cfg["delta_phi"] is None:
        grid = cfg["delta_phi_grid"] or ("sweep" if kind == "optimize" else "noisy" if kind in (
            "noise-grid", "circuit-noise", "bias-variance") else "comparison")
        cfg["delta_phi"] = list({"sweep": SWEEP_GRID, "comparison": COMPARISON_GRID,
                                 "noisy": (NOISY_DELTA_PHI,)}[grid])
    if not cfg["delta_phi"]:
        raise ConfigError("the delta-phi grid is empty")
    if any(not (np.isfinite(d) and d > 0) for d in cfg["delta_phi"]):
        raise ConfigError("prior widths must be positive")
    noisy = kind in ("noise-grid", "circuit-noise")
    if cfg["engine"] is None:
        cfg["engine"] = "tensornet" if noisy else "collective"
    if cfg["quad_nodes"] is None:
        cfg["quad_nodes"] = 25 if cfg["engine"] == "tensornet" else 500
    if int(cfg["n_qubits"]) < 1:
        raise ConfigError("n_qubits must be positive")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be at least 1")
    if not cfg["ansatz"]:
        raise ConfigError("no ansatz given")
    for label in cfg["ansatz"]:
        try:
            circuits.parse_ansatz(label, int(cfg["n_qubits"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for key in ("c1", "c2", "p"):
        if not cfg[key]:
            raise ConfigError(f"the {key} grid is empty")
    try:
        optimize.OptimizerConfig.with_eps(float(cfg["eps"]), quad_order=int(cfg["quad_nodes"]), init_mode=cfg["init"])
        for p in cfg["p"]:
            NoiseSpec(p=p)
        for c1 in cfg["c1"]:
            NoiseSpec(c1=c1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _canonical(cfg: dict) -> str:
    keep = {k: v for k, v in sorted(cfg.items()) if k not in ("out", "workers", "resume")}
    return json.dumps(keep, sort_keys=True)


def experiment_id(cfg: dict) -> str:
    return f"{cfg['experiment']}-{hashlib.sha256(_canonical(cfg).encode()).hexdigest()[:12]}"


def _code_version() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        commit = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        commit = ""
    return f"{__version__}+{commit}" if commit else __version__


def write_manifest(cfg: dict, path: Path):
    manifest = {
        "experiment_id": experiment_id(cfg),
        "config": json.loads(_canonical(cfg)),
        "code_version": _code_version(),
        "seed": cfg["seed"],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": "oatmetro " + cfg["experiment"],
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- output ----------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class TableWriter:
    """CSV table with a fixed header, flushed after every row."""

    def __init__(self, path: Path, header: Sequence[str], resume: bool = False):
        self.path = path
        self.header = list(header)
        self.done: list[dict] = []
        if resume and path.exists():
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != self.header:
                    raise ConfigError(f"cannot resume {path}: header differs")
                self.done = list(reader)
            self._fh = open(path, "a", newline="")
            self._w = csv.writer(self._fh)
        else:
            self._fh = open(path, "w", newline="")
            self._w = csv.writer(self._fh)
            self._w.writerow(self.header)
            self._fh.flush()

    def write(self, row: dict):
        self._w.writerow([_fmt(row.get(k)) for k in self.header])
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self._fh.close()


def run_ordered(fn: Callable, tasks: list, workers: int, on_result: Callable):
    """Evaluate ``fn`` over ``tasks`` and hand results to ``on_result`` in task order."""
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            on_result(t, fn(t))
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, t) for t in tasks]
        for t, fut in zip(tasks, futures):
            on_result(t, fut.result())


RESULT_HEADER = ["experiment", "ansatz", "n_qubits", "delta_phi", "c1", "c2", "p", "a_opt", "bmse_ratio",
                 "stages", "status"]


# --- parameter store ----------------------------------------------------------------


@dataclass
class ParamStore:
    n_qubits: int
    entries: list

    def get(self, label: str, delta_phi: float):
        label = circuits.parse_ansatz(label, self.n_qubits).label
        for e in self.entries:
            if e["ansatz"] == label and abs(e["delta_phi"] - delta_phi) <= 1e-12:
                return np.array(e["params"], dtype=float)
        return None

    def add(self, label: str, delta_phi: float, params, **extra):
        self.entries.append({"ansatz": label, "delta_phi": float(delta_phi),
                             "params": [float(v) for v in params], **extra})

    def save(self, path: Path):
        entries = sorted(self.entries, key=lambda e: (e["delta_phi"], e["ansatz"]))
        path.write_text(json.dumps({"n_qubits": self.n_qubits, "entries": entries}, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> ParamStore:
        data = json.loads(Path(path).read_text())
        return cls(int(data["n_qubits"]), list(data["entries"]))


# --- optimization ------------------------------------------------------------------


def chain_specs(labels: Iterable[str], n: int, sequential: bool) -> list[AnsatzSpec]:
    """Requested ansatzes plus, under sequential init, the shallower chain members they grow from."""
    specs: dict[str, AnsatzSpec] = {}
    for label in labels:
        spec = circuits.parse_ansatz(label, n)
        specs[spec.label] = spec
        if sequential:
            step = 1 if spec.family == "AAT" else 2
            d = spec.n_de - step
            while d >= step:
                s = AnsatzSpec(spec.family, spec.n_en, d, n)
                specs.setdefault(s.label, s)
                d -= step
    return list(specs.values())


def _optimizer_config(cfg: dict, eps=None, init=None, quad=None) -> optimize.OptimizerConfig:
    return optimize.OptimizerConfig.with_eps(
        float(cfg["eps"] if eps is None else eps),
        quad_order=int(cfg["quad_nodes"] if quad is None else quad),
        init_mode=cfg["init"] if init is None else init,
        rng_seed=int(cfg["seed"]),
    )


def _engine_kwargs(cfg: dict) -> dict:
    return {"engine": cfg["engine"], "method": cfg["tn_method"], "decoding_path": cfg["decoding_path"]}


def optimize_cell(cfg: dict, labels: Sequence[str], delta_phi: float, opt_cfg: optimize.OptimizerConfig,
                  engine_kwargs: dict | None = None) -> dict[str, optimize.OptimizationResult]:
    """Optimize every ansatz of ``labels`` (plus chain ancestors) at one prior width."""
    n = int(cfg["n_qubits"])
    engine_kwargs = engine_kwargs or {"engine": "collective"}
    specs = chain_specs(labels, n, opt_cfg.init_mode == "sequential")
    results = optimize.optimize_chain(specs, delta_phi, opt_cfg, **engine_kwargs)
    out = {r.spec.label: r for r in results}
    restarts = int(cfg.get("restarts", 0))
    if restarts:
        rng = np.random.default_rng([int(cfg["seed"]), int(round(delta_phi * 1e9))])
        for spec in specs:
            for _ in range(restarts):
                x0 = rng.uniform(-np.pi, np.pi, spec.param_count)
                r = optimize.optimize_ansatz(spec, delta_phi, opt_cfg, x0, **engine_kwargs)
                if r.fun < out[spec.label].fun:
                    out[spec.label] = r
    return out


def _optimize_task(task):
    cfg, delta_phi = task
    t0 = time.perf_counter()
    res = optimize_cell(cfg, cfg["ansatz"], delta_phi, _optimizer_config(cfg), _engine_kwargs(cfg))
    return res, time.perf_counter() - t0


def run_optimize_sweep(cfg: dict) -> Path:
    out = _prepare(cfg)
    eid = experiment_id(cfg)
    n = int(cfg["n_qubits"])
    store = ParamStore(n, [])
    table = TableWriter(out / "optimize.csv", RESULT_HEADER)
    timings = TableWriter(out / "optimize.timings.csv", ["delta_phi", "seconds"])
    wanted = [circuits.parse_ansatz(label, n).label for label in cfg["ansatz"]]

    def emit(task, result):
        res, seconds = result
        delta_phi = task[1]
        for label in wanted:
            r = res[label]
            table.write({"experiment": eid, "ansatz": label, "n_qubits": n, "delta_phi": delta_phi,
                         "c1": 0.0, "c2": 0.0, "p": 0.0, "a_opt": r.a, "bmse_ratio": r.ratio,
                         "stages": r.n_stages, "status": "ok" if r.converged else "not converged"})
        for label, r in res.items():
            store.add(label, delta_phi, r.x, a_opt=r.a, bmse_ratio=r.ratio, parent=r.parent, stages=r.stages)
        store.save(out / "params.json")
        timings.write({"delta_phi": delta_phi, "seconds": round(seconds, 3)})

    run_ordered(_optimize_task, [(cfg, d) for d in cfg["delta_phi"]], int(cfg["workers"]), emit)
    table.close()
    timings.close()
    return out / "optimize.csv"


# --- noisy evaluation of frozen parameters -------------------------------------------


def frozen_params(cfg: dict, out: Path) -> ParamStore:
    """Load saved parameters, optimizing (noiselessly) whatever is missing."""
    n = int(cfg["n_qubits"])
    store = ParamStore.load(cfg["params"]) if cfg["params"] else ParamStore(n, [])
    if store.n_qubits != n:
        raise ConfigError(f"parameter file is for N={store.n_qubits}, not N={n}")
    opt_cfg = _optimizer_config(cfg, quad=500 if cfg["engine"] == "tensornet" else None)
    for delta_phi in cfg["delta_phi"]:
        missing = [label for label in cfg["ansatz"] if store.get(label, delta_phi) is None]
        if missing:
            res = optimize_cell(cfg, missing, delta_phi, opt_cfg)
            for label, r in res.items():
                if store.get(label, delta_phi) is None:
                    store.add(label, delta_phi, r.x, a_opt=r.a, bmse_ratio=r.ratio, parent=r.parent)
    store.save(out / "params.json")
    return store


def evaluate_frozen(cfg: dict, label: str, params, delta_phi: float, noise: NoiseSpec) -> tuple[float, float]:
    """(a_opt, Delta phi / dphi) for frozen circuit parameters; a is re-optimized for the channel."""
    spec = circuits.parse_ansatz(label, int(cfg["n_qubits"]))
    kwargs = _engine_kwargs(cfg)
    if noise.is_noiseless and kwargs["engine"] == "tensornet":
        noise = None
    obj = ProtocolObjective(spec, Prior(delta_phi), gauss_hermite(int(cfg["quad_nodes"])), noise=noise, **kwargs)
    a, val = obj.evaluate(params)
    return a, float(np.sqrt(max(val, 0.0)))


def _noise_task(task):
    cfg, label, params, delta_phi, c1, c2, p = task
    t0 = time.perf_counter()
    noise = NoiseSpec(c1, c2, p)
    if not noise.is_psd(int(cfg["n_qubits"])):
        return None, time.perf_counter() - t0
    return evaluate_frozen(cfg, label, params, delta_phi, noise), time.perf_counter() - t0


def _noise_grid_points(cfg: dict) -> list[tuple[float, float, float]]:
    pts = []
    for c1 in cfg["c1"]:
        c2s = [r * c1 for r in cfg["c2_rel"]] if cfg["c2_rel"] is not None else cfg["c2"]
        for c2 in c2s:
            for p in cfg["p"]:
                pts.append((float(c1), float(c2), float(p)))
    return pts


def _run_frozen(cfg: dict, name: str, points: list) -> Path:
    out = _prepare(cfg)
    eid = experiment_id(cfg)
    n = int(cfg["n_qubits"])
    store = frozen_params(cfg, out)
    tasks = []
    for delta_phi in cfg["delta_phi"]:
        for label in cfg["ansatz"]:
            label = circuits.parse_ansatz(label, n).label
            x = store.get(label, delta_phi)
            for c1, c2, p in points:
                tasks.append((cfg, label, x, delta_phi, c1, c2, p))
    table = TableWriter(out / f"{name}.csv", RESULT_HEADER, resume=cfg["resume"])
    timings = TableWriter(out / f"{name}.timings.csv", ["ansatz", "delta_phi", "c1", "c2", "p", "seconds"],
                          resume=cfg["resume"])
    skip = len(table.done)
    tasks = tasks[skip:]

    def emit(task, result):
        _, label, _, delta_phi, c1, c2, p = task
        value, seconds = result
        row = {"experiment": eid, "ansatz": label, "n_qubits": n, "delta_phi": delta_phi, "c1": c1, "c2": c2,
               "p": p, "stages": 0}
        if value is None:
            row["status"] = SKIP_NONPSD
        else:
            row["a_opt"], row["bmse_ratio"] = value
            row["status"] = "ok"
        table.write(row)
        timings.write({"ansatz": label, "delta_phi": delta_phi, "c1": c1, "c2": c2, "p": p,
                       "seconds": round(seconds, 3)})

    run_ordered(_noise_task, tasks, int(cfg["workers"]), emit)
    table.close()
    timings.close()
    return out / f"{name}.csv"


def run_noise_grid(cfg: dict) -> Path:
    """Correlated free-evolution dephasing over a (c1, c2) grid with frozen circuits."""
    return _run_frozen(cfg, "noise-grid", [(c1, c2, 0.0) for c1, c2, _ in _noise_grid_points(
        {**cfg, "p": [0.0]})])


def run_circuit_noise_sweep(cfg: dict) -> Path:
    """Per-twist dephasing strength sweep with frozen circuits."""
    c1, c2 = float(cfg["c1"][0]), float(cfg["c2"][0])
    return _run_frozen(cfg, "circuit-noise", [(c1, c2, float(p)) for p in cfg["p"]])


# --- bias / variance -----------------------------------------------------------------


def run_bias_variance(cfg: dict) -> list[Path]:
    out = _prepare(cfg)
    n = int(cfg["n_qubits"])
    store = frozen_params(cfg, out)
    noise = NoiseSpec(float(cfg["c1"][0]), float(cfg["c2"][0]), float(cfg["p"][0]))
    kwargs = _engine_kwargs(cfg)
    if noise.is_noiseless:
        noise = None
    elif kwargs["engine"] == "collective":
        kwargs["engine"] = "tensornet"
    paths = []
    for delta_phi in cfg["delta_phi"]:
        phi_max = cfg["phi_max"] if cfg["phi_max"] is not None else 3.0 * delta_phi
        grid = np.linspace(-phi_max, phi_max, int(cfg["phi_points"]))
        for label in cfg["ansatz"]:
            spec = circuits.parse_ansatz(label, n)
            x = store.get(spec.label, delta_phi)
            enc, dec = circuits.build(spec, x)
            obj = ProtocolObjective(spec, Prior(delta_phi), gauss_hermite(int(cfg["quad_nodes"])), noise=noise,
                                    **kwargs)
            a = obj.evaluate(x)[0]
            curves = objective.estimator_curves(enc, dec, a, grid, n_qubits=n, noise=noise, **kwargs)
            path = out / f"bias-variance_{spec.label}_{_fmt(delta_phi)}.csv"
            table = TableWriter(path, ["phi", "mean", "variance", "bias"])
            for i in range(len(grid)):
                table.write({k: curves[k][i] for k in ("phi", "mean", "variance", "bias")})
            table.close()
            paths.append(path)
    return paths


# --- hyperparameter study ------------------------------------------------------------

HYPER_HEADER = ["experiment", "ansatz", "n_qubits", "delta_phi", "init", "eps", "quad_nodes", "a_opt",
                "bmse_ratio", "bmse_ratio_500", "stages", "flag"]
LOCAL_MINIMUM_GAP = 1e-3


def _hyper_task(task):
    cfg, delta_phi, init, eps, quad = task
    t0 = time.perf_counter()
    res = optimize_cell(cfg, cfg["ansatz"], delta_phi, _optimizer_config(cfg, eps=eps, init=init, quad=quad))
    # compare cells on a common footing: 500-node evaluation of each optimum
    common = {}
    for label, r in res.items():
        common[label] = evaluate_frozen({**cfg, "quad_nodes": 500, "engine": "collective"}, label, r.x, delta_phi,
                                        NoiseSpec())[1]
    return res, common, time.perf_counter() - t0


def run_hyperparameter_study(cfg: dict) -> Path:
    out = _prepare(cfg)
    eid = experiment_id(cfg)
    n = int(cfg["n_qubits"])
    cells = [(init, float(eps), int(q)) for init in cfg["hyper_init"] for eps in cfg["hyper_eps"]
             for q in cfg["hyper_quad"]]
    for init, _, _ in cells:
        if init not in optimize.INIT_MODES:
            raise ConfigError(f"unknown init mode {init!r}")
    wanted = [circuits.parse_ansatz(label, n).label for label in cfg["ansatz"]]
    table = TableWriter(out / "hyper-study.csv", HYPER_HEADER)
    timings = TableWriter(out / "hyper-study.timings.csv", ["delta_phi", "init", "eps", "quad_nodes", "seconds"])
    for delta_phi in cfg["delta_phi"]:
        collected = []
        run_ordered(_hyper_task, [(cfg, delta_phi, *c) for c in cells], int(cfg["workers"]),
                    lambda t, r: collected.append((t, r)))
        best = {label: min(r[1][label] for _, r in collected) for label in wanted}
        for task, (res, common, seconds) in collected:
            _, _, init, eps, quad = task
            for label in wanted:
                r = res[label]
                gap = common[label] - best[label]
                table.write({"experiment": eid, "ansatz": label, "n_qubits": n, "delta_phi": delta_phi,
                             "init": init, "eps": eps, "quad_nodes": quad, "a_opt": r.a, "bmse_ratio": r.ratio,
                             "bmse_ratio_500": common[label], "stages": r.n_stages,
                             "flag": "local-minimum" if gap > LOCAL_MINIMUM_GAP else ""})
            timings.write({"delta_phi": delta_phi, "init": init, "eps": eps, "quad_nodes": quad,
                           "seconds": round(seconds, 3)})
    table.close()
    timings.close()
    return out / "hyper-study.csv"


# --- entry point ---------------------------------------------------------------------


def _prepare(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out / f"{cfg['experiment']}.manifest.json")
    return out


RUNNERS = {
    "optimize": run_optimize_sweep,
    "noise-grid": run_noise_grid,
    "circuit-noise": run_circuit_noise_sweep,
    "bias-variance": run_bias_variance,
    "hyper-study": run_hyperparameter_study,
}


def run(cfg: dict):
    return RUNNERS[cfg["experiment"]](finalize_config(cfg))


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = resolve_config(argv)
        result = run(cfg)
    except ConfigError as exc:
        print(f"oatmetro: configuration error: {exc}", file=sys.stderr)
        return 2
    paths = result if isinstance(result, list) else [result]
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
