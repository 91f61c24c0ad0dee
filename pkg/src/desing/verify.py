"""Self-checks of the geometry, retractions, derivatives, bounds and
baselines, run at desk scale against dense or finite-difference oracles.

Each suite returns a list of :class:`Check`; the CLI prints one line per
check and exits nonzero if any fails.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import baselines as bl
from .calculus import (
    hessian_norm_bound,
    hessian_op_norm_estimate,
    hessian_quadratic_form,
    hessian_vec,
    riemannian_gradient,
)
from .costs import QuadraticCost, generate_problem
from .geometry import AmbientProducts, inner, norm, normal_basis_sample, project
from .manifold import (
    AmbientVector,
    ManifoldDims,
    ambient_inner,
    random_point,
    random_tangent,
    tangent_to_ambient,
    to_dense,
)
from .retractions import (
    EigGapWarning,
    RetractionKind,
    ambient_distance,
    intrinsic_acceleration_residual,
    retract,
)


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    passed: bool
    relation: str = "<="

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: measured={self.measured:.3e} {self.relation} {self.threshold:.3e}"


def _le(name, measured, threshold):
    return Check(name, float(measured), float(threshold), bool(measured <= threshold), "<=")


def _ge(name, measured, threshold):
    return Check(name, float(measured), float(threshold), bool(measured >= threshold), ">=")


def loglog_slope(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.maximum(np.asarray(errors, dtype=float), 1e-300)
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def completion_instance(m, n, r, seed, oversampling=3.0):
    """A random completion cost with a mask denser than the solver presets."""
    r_target = max(1, r - 1)
    over = min(oversampling, 0.9 * m * n / ((m + n - r) * r))
    problem = generate_problem(m, n, r_target, r=r, oversampling=over, seed=seed)
    return problem.cost()


def quadratic_instance(m, n, seed):
    """Dense target with unit Frobenius norm, so f stays O(1) and FD roundoff small."""
    A = np.random.default_rng(seed).standard_normal((m, n))
    return QuadraticCost(A / np.linalg.norm(A))


def fd_directional(func, h: float, points: int = 3) -> float:
    """Central difference of ``func`` at 0.

    ``points=3`` is (f(h) - f(-h)) / 2h; ``points=5`` is the fourth-order
    stencil (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h, which tolerates a
    larger h and so loses less to cancellation.
    """
    if points == 3:
        return (func(h) - func(-h)) / (2.0 * h)
    if points == 5:
        return (func(-2 * h) - 8.0 * func(-h) + 8.0 * func(h) - func(2 * h)) / (12.0 * h)
    raise ValueError("points must be 3 or 5")


def suite_geometry(seed=0, trials=10, alpha=0.5):
    rng = np.random.default_rng(seed)
    worst = dict(inner=0.0, idem=0.0, pyth=0.0, normal=0.0, structured=0.0)
    for _ in range(trials):
        m, n = rng.integers(4, 13, size=2)
        r = int(rng.integers(1, min(m, n)))
        pt = random_point(ManifoldDims(int(m), int(n), r), rng, sigma_range=(0.0, 2.0))
        t1, t2 = random_tangent(pt, rng, alpha), random_tangent(pt, rng, alpha)
        a1, a2 = tangent_to_ambient(pt, t1), tangent_to_ambient(pt, t2)
        ref = ambient_inner(a1, a2, alpha)
        worst["inner"] = max(worst["inner"], abs(inner(pt, t1, t2, alpha) - ref) / max(abs(ref), 1e-300))
        Z = rng.standard_normal((n, n))
        amb = AmbientVector(rng.standard_normal((m, n)), Z + Z.T)
        p1 = project(pt, amb, alpha)
        p2 = project(pt, tangent_to_ambient(pt, p1), alpha)
        diff = norm(pt, p1 - p2, alpha) / norm(pt, p1, alpha)
        worst["idem"] = max(worst["idem"], diff)
        total = ambient_inner(amb, amb, alpha)
        rest = amb - tangent_to_ambient(pt, p1)
        pyth = abs(total - norm(pt, p1, alpha) ** 2 - ambient_inner(rest, rest, alpha)) / total
        worst["pyth"] = max(worst["pyth"], pyth)
        nv = normal_basis_sample(pt, alpha, rng)
        scale = math.sqrt(ambient_inner(nv, nv, alpha))
        worst["normal"] = max(worst["normal"], norm(pt, project(pt, nv, alpha), alpha) / scale)
        prods = AmbientProducts(YV=amb.Y @ pt.V, YtU=amb.Y.T @ pt.U, ZV=amb.Z @ pt.V)
        p3 = project(pt, prods, alpha)
        worst["structured"] = max(worst["structured"], norm(pt, p1 - p3, alpha) / norm(pt, p1, alpha))
    return [
        _le("geometry/inner_vs_ambient_rel", worst["inner"], 1e-12),
        _le("geometry/project_idempotent", worst["idem"], 1e-12),
        _le("geometry/pythagoras_rel", worst["pyth"], 1e-10),
        _le("geometry/normal_projects_to_zero", worst["normal"], 1e-12),
        _le("geometry/structured_vs_dense_rel", worst["structured"], 1e-13),
    ]


def first_order_slope(pt, t, alpha, kind, steps=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)) -> float:
    X, P = to_dense(pt)
    amb = tangent_to_ambient(pt, t)
    errs = []
    for s in steps:
        Xs, Ps = to_dense(retract(pt, s * t, alpha, kind))
        d = AmbientVector(Xs - X - s * amb.Y, Ps - P - s * amb.Z)
        errs.append(math.sqrt(ambient_inner(d, d, alpha)))
    return loglog_slope(steps, errs)


def suite_retractions(seed=0, trials=10, alpha=0.5):
    rng = np.random.default_rng(seed)
    dims = ManifoldDims(10, 8, 3)
    axiom = 0.0
    slopes = {k: math.inf for k in RetractionKind}
    accel = {RetractionKind.POLAR: 0.0, RetractionKind.METRIC_PROJECTION: 0.0}
    qf_accel = 0.0
    mp_excess = -math.inf
    for _ in range(trials):
        pt = random_point(dims, rng, sigma_range=(0.5, 2.0))
        t = random_tangent(pt, rng, alpha)
        X, P = to_dense(pt)
        for kind in RetractionKind:
            X0, P0 = to_dense(retract(pt, 0 * t, alpha, kind))
            axiom = max(axiom, np.linalg.norm(X0 - X) + np.linalg.norm(P0 - P))
            slopes[kind] = min(slopes[kind], first_order_slope(pt, t, alpha, kind))
        nt = norm(pt, t, alpha)
        for kind in accel:
            res = intrinsic_acceleration_residual(pt, t, alpha, kind)
            accel[kind] = max(accel[kind], res / (1.0 + nt ** 2))
        qf_accel = max(qf_accel, intrinsic_acceleration_residual(pt, t, alpha, RetractionKind.QFACTOR))
        small = 0.3 * t
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EigGapWarning)
            d_mp = ambient_distance(pt, small, retract(pt, small, alpha, "metric_projection"), alpha)
        d_other = min(ambient_distance(pt, small, retract(pt, small, alpha, k), alpha)
                      for k in (RetractionKind.QFACTOR, RetractionKind.POLAR))
        mp_excess = max(mp_excess, d_mp - d_other)
    checks = [_le("retractions/zero_step_identity", axiom, 1e-12)]
    checks += [_ge(f"retractions/first_order_slope[{k.value}]", slopes[k], 1.9) for k in RetractionKind]
    checks += [_le(f"retractions/intrinsic_acceleration[{k.value}]", accel[k], 1e-5) for k in accel]
    checks.append(_ge("retractions/qfactor_not_second_order", qf_accel, 1e-3))
    checks.append(_le("retractions/metric_projection_optimal", mp_excess, 1e-12))
    return checks


def suite_calculus(seed=0, points=5, tangents=5, alpha=0.5, m=30, n=25, r=4):
    rng = np.random.default_rng(seed)
    dims = ManifoldDims(m, n, r)
    fd_err = 0.0
    adj = 0.0
    quad = 0.0
    slopes = []
    for i in range(points):
        for cost in (completion_instance(m, n, r, int(rng.integers(2**31))), quadratic_instance(m, n, int(rng.integers(2**31)))):
            pt = random_point(dims, rng, sigma_range=(0.0, 1.0))
            grad = riemannian_gradient(pt, cost, alpha)
            for _ in range(tangents):
                t = random_tangent(pt, rng, alpha)
                exact = inner(pt, grad, t, alpha)
                fd = fd_directional(lambda s: cost.value(*_factors(retract(pt, s * t, alpha, "polar"))), 1e-6)
                fd_err = max(fd_err, abs(fd - exact) / max(abs(exact), 1e-300))
                u = random_tangent(pt, rng, alpha)
                lhs = inner(pt, u, hessian_vec(pt, t, cost, alpha), alpha)
                rhs = inner(pt, hessian_vec(pt, u, cost, alpha), t, alpha)
                adj = max(adj, abs(lhs - rhs))
                q1 = inner(pt, t, hessian_vec(pt, t, cost, alpha), alpha)
                q2 = hessian_quadratic_form(pt, t, cost, alpha)
                quad = max(quad, abs(q1 - q2) / max(abs(q2), 1e-300))
            slopes.append(second_order_slope(pt, random_tangent(pt, rng, alpha), cost, alpha))
    return [
        _le("calculus/fd_gradient_max_rel_err", fd_err, 1e-5),
        _le("calculus/hessian_self_adjoint", adj, 1e-11),
        _le("calculus/quadratic_form_oracle_rel", quad, 1e-11),
        # single instances wobble by a few tenths from s^4 terms near s = 0.1
        _ge("calculus/second_order_taylor_slope_median", float(np.median(slopes)), 2.9),
    ]


def _factors(pt):
    return pt.U, pt.Sigma, pt.V


def second_order_slope(pt, t, cost, alpha, steps=None) -> float:
    """Slope of |g(R(st)) - g - s<grad,t> - s^2/2 <t,Hess t>| with the polar retraction."""
    if steps is None:
        steps = np.logspace(-4, -1, 7)
    g0 = cost.value(*_factors(pt))
    d1 = inner(pt, riemannian_gradient(pt, cost, alpha), t, alpha)
    d2 = inner(pt, t, hessian_vec(pt, t, cost, alpha), alpha)
    errs = [abs(cost.value(*_factors(retract(pt, s * t, alpha, "polar"))) - g0 - s * d1 - 0.5 * s * s * d2)
            for s in steps]
    return loglog_slope(steps, errs)


def suite_bounds(seed=0, instances=5, alpha=0.5, m=40, n=40, r=3):
    rng = np.random.default_rng(seed)
    grad_excess = -math.inf
    hess_excess = -math.inf
    for _ in range(instances):
        cost = completion_instance(m, n, r, int(rng.integers(2**31)))
        pt = random_point(ManifoldDims(m, n, r), rng, sigma_range=(0.0, 1.0))
        gn = norm(pt, riemannian_gradient(pt, cost, alpha), alpha)
        grad_excess = max(grad_excess, gn - np.linalg.norm(cost.dense_gradient(*_factors(pt))))
        est = hessian_op_norm_estimate(pt, cost, alpha, rng_seed=rng)
        hess_excess = max(hess_excess, est - hessian_norm_bound(pt, cost, alpha))
    return [
        _le("bounds/grad_norm_minus_euclidean", grad_excess, 0.0),
        _le("bounds/hess_estimate_minus_bound", hess_excess, 1e-8),
    ]


def suite_baselines(seed=0, trials=5, m=30, n=25, r=4):
    rng = np.random.default_rng(seed)
    lr_err = fr_err = consist = 0.0
    for _ in range(trials):
        cost = completion_instance(m, n, r, int(rng.integers(2**31)))
        pt = random_point(ManifoldDims(m, n, r), rng, sigma_range=(0.1, 1.0))
        lr = bl.lr_from_point(pt)
        fr = bl.fixedrank_from_point(pt)
        vals = [cost.value(*_factors(pt)), bl.lr_value(lr, cost), bl.fixedrank_value(fr, cost)]
        consist = max(consist, (max(vals) - min(vals)) / max(abs(vals[0]), 1e-300))
        dl = bl.LRTangent(rng.standard_normal(lr.L.shape), rng.standard_normal(lr.R.shape))
        exact = bl.lr_inner(lr, bl.lr_gradient(lr, cost), dl)
        fd = fd_directional(lambda s: bl.lr_value(bl.lr_retract(lr, dl * s), cost), 1e-6)
        lr_err = max(lr_err, abs(fd - exact) / abs(exact))
        tf = bl.random_fixedrank_tangent(fr, rng)
        exact = bl.fixedrank_inner(fr, bl.fixedrank_gradient(fr, cost), tf)
        fd = fd_directional(lambda s: bl.fixedrank_value(bl.fixedrank_retract(fr, tf * s), cost), 1e-6)
        fr_err = max(fr_err, abs(fd - exact) / abs(exact))
    return [
        _le("baselines/lr_fd_gradient_rel_err", lr_err, 1e-5),
        _le("baselines/fixed_rank_fd_gradient_rel_err", fr_err, 1e-5),
        _le("baselines/cost_consistency_rel", consist, 1e-12),
    ]


SUITES = {
    "geometry": suite_geometry,
    "retractions": suite_retractions,
    "calculus": suite_calculus,
    "bounds": suite_bounds,
    "baselines": suite_baselines,
}


def run_suites(names=None, seed=0):
    names = list(SUITES) if not names or "all" in names else list(names)
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    checks = []
    for name in names:
        checks.extend(SUITES[name](seed=seed))
    return checks
