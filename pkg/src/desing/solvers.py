"""Geometry-agnostic Riemannian solvers: Armijo gradient descent and
trust regions with a truncated conjugate gradient inner solver.

A *geometry* is any object providing ``value``, ``gradient``, ``hessian``,
``inner``, ``norm``, ``retract`` and ``dim`` over its own point and tangent
types (tangent vectors support ``+``, ``-`` and scalar ``*``). The
desingularization, the LR^T factorization and the fixed-rank manifold all
implement it.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from . import baselines as bl
from .calculus import CostModel, hessian_vec, riemannian_gradient
from .geometry import inner as desing_inner
from .manifold import ManifoldPoint, TangentVector, check_alpha, zero_tangent
from .retractions import RetractionKind, retract_with_fallback


class LineSearchStalled(RuntimeWarning):
    pass


class ModelNonDescent(RuntimeWarning):
    pass


class Geometry(Protocol):
    name: str

    def value(self, x, cost: CostModel) -> float: ...
    def gradient(self, x, cost: CostModel): ...
    def hessian(self, x, v, cost: CostModel): ...
    def inner(self, x, u, v) -> float: ...
    def norm(self, x, u) -> float: ...
    def retract(self, x, v): ...
    def zero(self, x): ...
    def dim(self, x) -> int: ...


class _NormMixin:
    def norm(self, x, u) -> float:
        return math.sqrt(max(self.inner(x, u, u), 0.0))


class DesingularizationGeometry(_NormMixin):
    """The desingularization with the alpha-metric.

    With the metric projection retraction, steps where the projection is
    not unique fall back to the polar retraction; ``fallbacks`` counts them.
    """

    def __init__(self, alpha: float = 0.5, retraction=RetractionKind.METRIC_PROJECTION):
        self.alpha = check_alpha(alpha)
        self.retraction = RetractionKind.parse(retraction)
        self.name = f"desing(alpha={self.alpha:g})"
        self.fallbacks = 0

    def value(self, x: ManifoldPoint, cost):
        return cost.value(x.U, x.Sigma, x.V)

    def gradient(self, x, cost):
        return riemannian_gradient(x, cost, self.alpha)

    def hessian(self, x, v, cost):
        return hessian_vec(x, v, cost, self.alpha)

    def inner(self, x, u: TangentVector, v: TangentVector) -> float:
        return desing_inner(x, u, v, self.alpha)

    def retract(self, x, v):
        new, fell_back = retract_with_fallback(x, v, self.alpha, self.retraction)
        self.fallbacks += int(fell_back)
        return new

    def zero(self, x):
        return zero_tangent(x)

    def dim(self, x) -> int:
        return x.dims.dim


class LRGeometry(_NormMixin):
    """(L, R) in R^{m x r} x R^{n x r} with the Euclidean metric."""

    name = "lr"
    fallbacks = 0

    def value(self, x, cost):
        return bl.lr_value(x, cost)

    def gradient(self, x, cost):
        return bl.lr_gradient(x, cost)

    def hessian(self, x, v, cost):
        return bl.lr_hessian_vec(x, v, cost)

    def inner(self, x, u, v):
        return bl.lr_inner(x, u, v)

    def retract(self, x, v):
        return bl.lr_retract(x, v)

    def zero(self, x):
        return bl.LRTangent(np.zeros_like(x.L), np.zeros_like(x.R))

    def dim(self, x) -> int:
        return x.L.size + x.R.size


class FixedRankGeometry(_NormMixin):
    """Embedded manifold of rank-r matrices; retraction by truncated SVD."""

    name = "fixed_rank"
    fallbacks = 0

    def value(self, x, cost):
        return bl.fixedrank_value(x, cost)

    def gradient(self, x, cost):
        return bl.fixedrank_gradient(x, cost)

    def hessian(self, x, v, cost):
        return bl.fixedrank_hessian_vec(x, v, cost)

    def inner(self, x, u, v):
        return bl.fixedrank_inner(x, u, v)

    def retract(self, x, v):
        return bl.fixedrank_retract(x, v)

    def zero(self, x):
        r = x.Sigma.size
        return bl.FixedRankTangent(np.zeros((r, r)), np.zeros_like(x.U), np.zeros_like(x.V))

    def dim(self, x) -> int:
        m, r = x.U.shape
        return (m + x.V.shape[0] - r) * r


@dataclass
class SolverConfig:
    max_outer_iters: int = 500
    grad_tol: float = 1e-6
    cost_tol: float = 1e-300
    max_time: float = math.inf
    tr_initial_radius: float | None = None
    tr_max_radius: float | None = None
    tcg_theta: float = math.sqrt(2.0) - 1.0
    tcg_kappa: float = 0.1
    tcg_max_inner: int | None = None
    ls_armijo_c: float = 1e-4
    ls_backtrack: float = 0.5
    ls_max_halvings: int = 60
    rho_accept: float = 0.1
    rho_regularization: float = 1e-15
    retraction: RetractionKind = RetractionKind.METRIC_PROJECTION

    def __post_init__(self):
        self.retraction = RetractionKind.parse(self.retraction)
        for name in ("grad_tol", "cost_tol"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("tcg_theta", "tcg_kappa", "ls_armijo_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.ls_backtrack < 1:
            raise ValueError("ls_backtrack must lie in (0, 1)")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be non-negative")


@dataclass
class IterRecord:
    """One outer iteration. ``step_size`` is the Armijo step for gradient
    descent and the trust-region radius after the update for trust region;
    rejected trust-region steps are recorded with ``accepted=False``."""

    iter: int
    cost: float
    grad_norm: float
    step_norm: float
    step_size: float
    inner_iters: int
    wall_time_s: float
    retraction_fallbacks: int
    accepted: bool
    rho: float = math.nan


@dataclass
class SolverTrace:
    records: list[IterRecord] = field(default_factory=list)
    status: str = "running"
    stalled: bool = False

    def accepted(self) -> list[IterRecord]:
        """Row 0 (the start) plus every accepted iteration."""
        return [rec for rec in self.records if rec.accepted]

    @property
    def outer_iters(self) -> int:
        return self.records[-1].iter if self.records else 0

    @property
    def final(self) -> IterRecord:
        return self.records[-1]

    def as_dicts(self):
        return [asdict(rec) for rec in self.records]


def gradient_descent(geometry, cost: CostModel, start, config: SolverConfig | None = None):
    """Riemannian gradient descent with Armijo backtracking.

    Each iteration tries the unit step along -grad and halves it until
    f(R(-s grad)) <= f - c s ||grad||^2. After ``ls_max_halvings`` failed
    halvings the run stops with ``trace.stalled`` set and a
    :class:`LineSearchStalled` warning.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    x = start
    fx = geometry.value(x, cost)
    grad = geometry.gradient(x, cost)
    gn = geometry.norm(x, grad)
    trace = SolverTrace()
    trace.records.append(IterRecord(0, fx, gn, 0.0, 0.0, 0, 0.0, geometry.fallbacks, True))
    for k in range(1, config.max_outer_iters + 1):
        if gn <= config.grad_tol:
            trace.status = "grad_tol"
            break
        if fx <= config.cost_tol:
            trace.status = "cost_tol"
            break
        if time.perf_counter() - t0 > config.max_time:
            trace.status = "max_time"
            break
        step = 1.0
        for _ in range(config.ls_max_halvings + 1):
            try:
                x_new = geometry.retract(x, grad * (-step))
            except ArithmeticError:
                step *= config.ls_backtrack
                continue
            f_new = geometry.value(x_new, cost)
            if f_new <= fx - config.ls_armijo_c * step * gn ** 2:
                break
            step *= config.ls_backtrack
        else:
            trace.stalled = True
            trace.status = "line_search_stalled"
            warnings.warn(f"line search stalled at iteration {k}", LineSearchStalled, stacklevel=2)
            break
        x, fx = x_new, f_new
        grad = geometry.gradient(x, cost)
        gn = geometry.norm(x, grad)
        trace.records.append(
            IterRecord(k, fx, gn, step * trace.records[-1].grad_norm, step, 0,
                       time.perf_counter() - t0, geometry.fallbacks, True)
        )
    else:
        trace.status = "max_iters" if gn > config.grad_tol else "grad_tol"
    return x, trace


def truncated_cg(geometry, cost, x, grad, radius: float, config: SolverConfig):
    """Steihaug-Toint truncated CG on m(eta) = <grad, eta> + 1/2 <eta, H eta>.

    Stops on negative curvature or the trust-region boundary (returning a
    boundary point), when the model stops decreasing, or when
    ||r_k|| <= ||r_0|| min(kappa, ||r_0||^theta). If the final model value
    is worse than that of the first (Cauchy) iterate, the Cauchy iterate is
    returned instead.

    Returns (eta, H eta, inner iterations, stop reason).
    """
    max_inner = config.tcg_max_inner or geometry.dim(x)
    eta = geometry.zero(x)
    Heta = geometry.zero(x)
    res = grad
    rr = geometry.inner(x, res, res)
    norm_r0 = math.sqrt(rr)
    delta = -res
    model = 0.0
    e_Pe = 0.0
    cauchy = None
    reason = "max_inner"
    j = 0
    for j in range(1, max_inner + 1):
        Hd = geometry.hessian(x, delta, cost)
        dHd = geometry.inner(x, delta, Hd)
        d_Pd = geometry.inner(x, delta, delta)
        e_Pd = geometry.inner(x, eta, delta)
        alpha = rr / dHd if dHd != 0 else math.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha ** 2 * d_Pd
        if dHd <= 0 or e_Pe_new >= radius ** 2:
            tau = (-e_Pd + math.sqrt(max(e_Pd ** 2 + d_Pd * (radius ** 2 - e_Pe), 0.0))) / d_Pd
            eta = eta + delta * tau
            Heta = Heta + Hd * tau
            reason = "negative_curvature" if dHd <= 0 else "exceeded_radius"
            if cauchy is None:
                cauchy = (eta, Heta)
            break
        eta_new = eta + delta * alpha
        Heta_new = Heta + Hd * alpha
        model_new = geometry.inner(x, grad, eta_new) + 0.5 * geometry.inner(x, eta_new, Heta_new)
        if model_new >= model:
            reason = "model_increased"
            break
        eta, Heta, model, e_Pe = eta_new, Heta_new, model_new, e_Pe_new
        if cauchy is None:
            cauchy = (eta, Heta)
        res = res + Hd * alpha
        rr_new = geometry.inner(x, res, res)
        if math.sqrt(rr_new) <= norm_r0 * min(norm_r0 ** config.tcg_theta, config.tcg_kappa):
            reason = "converged"
            break
        beta = rr_new / rr
        rr = rr_new
        delta = -res + delta * beta
    if cauchy is not None:
        final_model = geometry.inner(x, grad, eta) + 0.5 * geometry.inner(x, eta, Heta)
        cauchy_model = geometry.inner(x, grad, cauchy[0]) + 0.5 * geometry.inner(x, cauchy[0], cauchy[1])
        if cauchy_model < final_model:
            eta, Heta = cauchy
            reason += "+cauchy"
    return eta, Heta, j, reason


def trust_region(geometry, cost: CostModel, start, config: SolverConfig | None = None):
    """Riemannian trust-region method with a truncated CG inner solver.

    Steps with rho > ``rho_accept`` (and no cost increase) are accepted;
    the radius shrinks by 4 when rho < 0.25 and doubles, up to the maximum,
    when rho > 0.75 and the inner solver stopped at the boundary. Defaults:
    initial radius ||grad(start)|| / 8, maximum radius 100 times that.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    x = start
    fx = geometry.value(x, cost)
    grad = geometry.gradient(x, cost)
    gn = geometry.norm(x, grad)
    radius = config.tr_initial_radius or (gn / 8.0 if gn > 0 else 1.0)
    max_radius = config.tr_max_radius or 100.0 * radius
    trace = SolverTrace()
    trace.records.append(IterRecord(0, fx, gn, 0.0, radius, 0, 0.0, geometry.fallbacks, True))
    trace.status = "max_iters"
    for k in range(1, config.max_outer_iters + 1):
        if gn <= config.grad_tol:
            trace.status = "grad_tol"
            break
        if fx <= config.cost_tol:
            trace.status = "cost_tol"
            break
        if time.perf_counter() - t0 > config.max_time:
            trace.status = "max_time"
            break
        if radius < 1e-300:
            trace.status = "radius_collapsed"
            break
        eta, Heta, n_inner, reason = truncated_cg(geometry, cost, x, grad, radius, config)
        model_decrease = -(geometry.inner(x, grad, eta) + 0.5 * geometry.inner(x, eta, Heta))
        if model_decrease < 0:
            warnings.warn(f"inner solver returned a non-descent step at iteration {k}", ModelNonDescent, stacklevel=2)
        try:
            x_prop = geometry.retract(x, eta)
        except ArithmeticError as exc:
            trace.status = f"retraction_failed: {exc}"
            break
        f_prop = geometry.value(x_prop, cost)
        reg = config.rho_regularization
        rho = (fx - f_prop + reg) / (model_decrease + reg)
        step_norm = geometry.norm(x, eta)
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and reason.startswith(("negative_curvature", "exceeded_radius")):
            radius = min(2.0 * radius, max_radius)
        accepted = rho > config.rho_accept and f_prop <= fx
        if accepted:
            x, fx = x_prop, f_prop
            grad = geometry.gradient(x, cost)
            gn = geometry.norm(x, grad)
        trace.records.append(
            IterRecord(k, fx, gn, step_norm, radius, n_inner, time.perf_counter() - t0,
                       geometry.fallbacks, accepted, rho)
        )
    else:
        if gn <= config.grad_tol:
            trace.status = "grad_tol"
    return x, trace
