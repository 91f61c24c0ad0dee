"""Experiment driver: matrix completion runs across geometries and metric
parameters, written as CSV traces with JSON sidecars.

Every (geometry, alpha) run regenerates the same problem and the same
initial point from the spec's seed, so runs can be farmed out to worker
processes without shipping arrays around.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy

from . import __version__
from . import baselines as bl
from .costs import CompletionProblem, SingularValueSpec, generate_problem
from .manifold import ManifoldDims, check_alpha, random_point
from .retractions import RetractionKind
from .solvers import (
    DesingularizationGeometry,
    FixedRankGeometry,
    LRGeometry,
    SolverConfig,
    SolverTrace,
    gradient_descent,
    trust_region,
)

GEOMETRIES = ("desing", "lr", "fixed_rank")
SOLVERS = ("tr", "gd")
DEFAULT_ALPHAS = (0.05, 0.5, 5.0)
CSV_HEADER = ("iter", "cost", "grad_norm", "time_s")
INIT_SIGMA_RANGE = (0.0, 1e-3)


@dataclass(frozen=True)
class ExperimentSpec:
    m: int = 300
    n: int = 300
    r_star: int = 5
    r: int = 10
    oversampling: float = 5.0
    sv_spec: str = "uniform:0.5,1"
    seed: int = 0
    geometries: tuple = GEOMETRIES
    alphas: tuple = DEFAULT_ALPHAS
    solver: str = "tr"
    retraction: str = "metric_projection"
    max_iters: int = 500
    grad_tol: float = 1e-6
    cost_tol: float = 0.0
    max_time: float = math.inf
    out: str = "runs"

    def __post_init__(self):
        ManifoldDims(self.m, self.n, self.r)
        if not 1 <= self.r_star <= min(self.m, self.n):
            raise ValueError(f"r_star must lie in [1, min(m, n)], got {self.r_star}")
        if not self.oversampling > 0:
            raise ValueError("oversampling must be positive")
        SingularValueSpec.parse(self.sv_spec)
        bad = [g for g in self.geometries if g not in GEOMETRIES]
        if bad or not self.geometries:
            raise ValueError(f"unknown geometry {bad}; choose from {', '.join(GEOMETRIES)}")
        if "desing" in self.geometries:
            if not self.alphas:
                raise ValueError("at least one alpha is needed for the desing geometry")
            for a in self.alphas:
                check_alpha(a)
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        RetractionKind.parse(self.retraction)
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def solver_config(self) -> SolverConfig:
        # cost_tol = 0 means "no target value"; keep the solver default then
        return SolverConfig(
            max_outer_iters=self.max_iters, grad_tol=self.grad_tol,
            cost_tol=self.cost_tol if self.cost_tol > 0 else SolverConfig.cost_tol,
            max_time=self.max_time, retraction=RetractionKind.parse(self.retraction),
        )

    def runs(self):
        """(geometry, alpha) pairs; alpha is None for the baselines."""
        out = []
        for g in self.geometries:
            if g == "desing":
                out.extend(("desing", float(a)) for a in self.alphas)
            else:
                out.append((g, None))
        return out

    def to_dict(self):
        d = asdict(self)
        d["geometries"] = list(self.geometries)
        d["alphas"] = list(self.alphas)
        if math.isinf(d["max_time"]):
            d["max_time"] = None
        return d


PRESETS = {
    "overestimate": dict(m=300, n=300, r_star=5, r=10, sv_spec="uniform:0.5,1"),
    "expdecay-exact": dict(m=300, n=300, r_star=10, r=10, sv_spec="expdecay:0.9"),
    "expdecay-over": dict(m=300, n=300, r_star=10, r=20, sv_spec="expdecay:0.9"),
}

# config-file / flag spellings -> ExperimentSpec field names
_ALIASES = {"r-star": "r_star", "sv": "sv_spec", "sv-spec": "sv_spec", "alpha": "alphas",
            "geometry": "geometries", "max-iters": "max_iters", "grad-tol": "grad_tol",
            "cost-tol": "cost_tol", "max-time": "max_time"}


def _coerce(key: str, value):
    types = {f.name: f.type for f in fields(ExperimentSpec)}
    if key not in types:
        raise ValueError(f"unknown setting {key!r}")
    if key in ("geometries", "alphas"):
        items = value if isinstance(value, (list, tuple)) else [v for v in str(value).split(",") if v.strip()]
        items = [str(v).strip() for v in items]
        if key == "geometries":
            return GEOMETRIES if items == ["all"] else tuple(items)
        return tuple(float(v) for v in items)
    kind = types[key]
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value).strip()


def normalize_settings(settings: dict) -> dict:
    out = {}
    for key, value in settings.items():
        if value is None:
            continue
        name = _ALIASES.get(key, key.replace("-", "_"))
        name = _ALIASES.get(name, name)
        out[name] = _coerce(name, value)
    return out


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    settings = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{lineno}: expected key = value")
            settings[key.strip()] = value.strip()
    return settings


def build_spec(preset: str | None = None, config: dict | None = None, overrides: dict | None = None) -> ExperimentSpec:
    """Preset, then config-file settings, then explicit overrides."""
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        merged.update(PRESETS[preset])
    for layer in (config or {}, overrides or {}):
        merged.update(normalize_settings(layer))
    return ExperimentSpec(**merged)


def make_problem(spec: ExperimentSpec):
    """The shared problem and initial point, from independent seed streams."""
    prob_ss, init_ss = np.random.SeedSequence(spec.seed).spawn(2)
    problem = generate_problem(spec.m, spec.n, spec.r_star, r=spec.r, oversampling=spec.oversampling,
                               sv_spec=spec.sv_spec, seed=np.random.default_rng(prob_ss))
    problem = replace(problem, seed=spec.seed)
    start = random_point(problem.dims, np.random.default_rng(init_ss), sigma_range=INIT_SIGMA_RANGE)
    return problem, start


def geometry_and_start(kind: str, alpha, start, retraction):
    if kind == "desing":
        return DesingularizationGeometry(alpha, retraction), start
    if kind == "lr":
        return LRGeometry(), bl.lr_from_point(start)
    if kind == "fixed_rank":
        return FixedRankGeometry(), bl.fixedrank_from_point(start)
    raise ValueError(f"unknown geometry {kind!r}")


def run_label(kind: str, alpha) -> str:
    return kind if alpha is None else f"desing_alpha{alpha:g}"


def trace_rows(trace: SolverTrace):
    return [(rec.iter, rec.cost, rec.grad_norm, rec.wall_time_s) for rec in trace.accepted()]


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for it, cost, gn, ts in rows:
        writer.writerow([str(int(it))] + [f"{float(v):.16e}" for v in (cost, gn, ts)])
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader]


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def environment_info() -> dict:
    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def first_iter_below(rows, level: float):
    """Outer iteration at which the cost first drops to ``level``, else None."""
    for it, cost, _, _ in rows:
        if cost <= level:
            return it
    return None


def run_single(spec: ExperimentSpec, kind: str, alpha=None, problem: CompletionProblem | None = None, start=None):
    """Solve one (geometry, alpha) configuration; returns (trace, geometry)."""
    if problem is None or start is None:
        problem, start = make_problem(spec)
    geometry, x0 = geometry_and_start(kind, alpha, start, spec.retraction)
    solve = trust_region if spec.solver == "tr" else gradient_descent
    _, trace = solve(geometry, problem.cost(), x0, spec.solver_config())
    return trace, geometry


def _run_and_write(spec: ExperimentSpec, kind: str, alpha) -> dict:
    t0 = time.perf_counter()
    trace, geometry = run_single(spec, kind, alpha)
    rows = trace_rows(trace)
    label = run_label(kind, alpha)
    csv_path = os.path.join(spec.out, label + ".csv")
    atomic_write(csv_path, format_csv(rows))
    summary = {
        "label": label,
        "geometry": kind,
        "alpha": alpha,
        "csv": os.path.basename(csv_path),
        "status": trace.status,
        "outer_iters": trace.outer_iters,
        "accepted_iters": len(rows) - 1,
        "final_cost": rows[-1][1],
        "final_grad_norm": rows[-1][2],
        "retraction_fallbacks": int(getattr(geometry, "fallbacks", 0)),
        "wall_time_s": time.perf_counter() - t0,
    }
    sidecar = {"spec": spec.to_dict(), "run": {"geometry": kind, "alpha": alpha},
               "environment": environment_info(), "summary": summary}
    atomic_write(os.path.join(spec.out, label + ".json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return summary


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[dict]:
    """Run every (geometry, alpha) of ``spec`` and write one CSV + JSON each.

    With ``jobs > 1`` runs go to a process pool; each run stays
    single-threaded and its output does not depend on scheduling.
    """
    os.makedirs(spec.out, exist_ok=True)
    runs = spec.runs()
    if jobs <= 1 or len(runs) == 1:
        return [_run_and_write(spec, kind, alpha) for kind, alpha in runs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(runs))) as pool:
        futures = [pool.submit(_run_and_write, spec, kind, alpha) for kind, alpha in runs]
        return [f.result() for f in futures]
