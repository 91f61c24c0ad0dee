"""Acceptance criteria, one function each. Every criterion prints a single
PASS/FAIL line with its measured values.

Run under pytest (lines appear even with output capture on) or directly:
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import os
import sys
import tempfile
import time
import warnings

import numpy as np
import pytest

from desing import baselines as bl
from desing import harness
from desing.calculus import (
    hessian_norm_bound,
    hessian_op_norm_estimate,
    hessian_quadratic_form,
    hessian_vec,
    riemannian_gradient,
)
from desing.costs import QuadraticCost, generate_problem
from desing.geometry import AmbientProducts, inner, norm, normal_basis_sample, project
from desing.manifold import (
    AmbientVector,
    ManifoldDims,
    ambient_inner,
    from_factors,
    random_point,
    random_tangent,
    tangent_to_ambient,
)
from desing.retractions import (
    EigGapWarning,
    RetractionKind,
    ambient_distance,
    intrinsic_acceleration_residual,
    retract,
    retract_metric_projection,
)
from desing.solvers import DesingularizationGeometry, SolverConfig, trust_region
from desing.verify import fd_directional, first_order_slope, second_order_slope

ALPHA = 0.5
ALPHAS = (0.05, 0.5, 5.0)


def _f(pt):
    return pt.U, pt.Sigma, pt.V


def _completion(m, n, r, seed, oversampling=3.0):
    over = min(oversampling, 0.9 * m * n / ((m + n - r) * r))
    return generate_problem(m, n, max(1, r - 1), r=r, oversampling=over, seed=seed).cost()


def _quadratic(m, n, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    return QuadraticCost(A / np.linalg.norm(A))


def criterion_1():
    """FD directional derivatives at m=n=50, r=5: 20 points x 20 tangents."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for kind in ("completion", "quadratic"):
        for i in range(20):
            cost = _completion(50, 50, 5, i) if kind == "completion" else _quadratic(50, 50, i)
            pt = random_point(ManifoldDims(50, 50, 5), rng, sigma_range=(0.0, 1.0))
            g = riemannian_gradient(pt, cost, ALPHA)
            for _ in range(20):
                t = random_tangent(pt, rng, ALPHA)
                exact = inner(pt, g, t, ALPHA)
                # five-point stencil: the two-point one at h = 1e-6 sits at ~1e-10
                # absolute roundoff, too coarse when <grad, t> is nearly zero
                fd = fd_directional(lambda s: cost.value(*_f(retract(pt, s * t, ALPHA, "polar"))), 1e-3, points=5)
                worst = max(worst, abs(fd - exact) / abs(exact))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-5 and elapsed < 10.0, f"max rel err {worst:.2e} (<= 1e-5), runtime {elapsed:.2f}s (< 10s)"


def criterion_2():
    """Hessian: self-adjointness, quadratic-form oracle, Taylor slope."""
    rng = np.random.default_rng(2)
    adj = quad = 0.0
    for i in range(50):
        cost = _completion(30, 25, 4, i) if i % 2 else _quadratic(30, 25, i)
        pt = random_point(ManifoldDims(30, 25, 4), rng, sigma_range=(0.0, 1.0))
        u, v = random_tangent(pt, rng, ALPHA), random_tangent(pt, rng, ALPHA)
        Hu, Hv = hessian_vec(pt, u, cost, ALPHA), hessian_vec(pt, v, cost, ALPHA)
        scale = norm(pt, u, ALPHA) * norm(pt, v, ALPHA)
        adj = max(adj, abs(inner(pt, u, Hv, ALPHA) - inner(pt, Hu, v, ALPHA)) / scale)
        q = inner(pt, v, Hv, ALPHA)
        quad = max(quad, abs(q - hessian_quadratic_form(pt, v, cost, ALPHA)) / max(abs(q), 1e-300))
    slopes = []
    for i in range(20):
        cost = _completion(30, 25, 4, 100 + i) if i % 2 else _quadratic(30, 25, 100 + i)
        pt = random_point(ManifoldDims(30, 25, 4), rng, sigma_range=(0.0, 1.0))
        slopes.append(second_order_slope(pt, random_tangent(pt, rng, ALPHA), cost, ALPHA, np.logspace(-4, -1, 7)))
    slope = float(np.median(slopes))
    ok = adj <= 1e-11 and quad <= 1e-11 and slope >= 2.9
    return ok, (f"self-adjoint {adj:.1e} (<= 1e-11), quad form {quad:.1e} (<= 1e-11), "
                f"median Taylor slope {slope:.3f} (>= 2.9; per-instance min {min(slopes):.2f})")


def criterion_3():
    """Retraction axioms, second order, and metric-projection optimality."""
    rng = np.random.default_rng(3)
    dims = ManifoldDims(10, 8, 3)
    slopes = {k: math.inf for k in RetractionKind}
    for _ in range(10):
        pt = random_point(dims, rng, sigma_range=(0.2, 2.0))
        t = random_tangent(pt, rng, ALPHA)
        for k in RetractionKind:
            slopes[k] = min(slopes[k], first_order_slope(pt, t, ALPHA, k))
    accel = {RetractionKind.POLAR: 0.0, RetractionKind.METRIC_PROJECTION: 0.0}
    for _ in range(50):
        pt = random_point(dims, rng, sigma_range=(0.0, 2.0))
        t = random_tangent(pt, rng, ALPHA) * rng.uniform(0.1, 3.0)
        for k in accel:
            res = intrinsic_acceleration_residual(pt, t, ALPHA, k)
            accel[k] = max(accel[k], res / (1.0 + norm(pt, t, ALPHA) ** 2))
    excess = -math.inf
    for _ in range(100):
        pt = random_point(dims, rng, sigma_range=(0.0, 2.0))
        t = random_tangent(pt, rng, ALPHA) * rng.uniform(0.05, 2.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EigGapWarning)
            d_mp = ambient_distance(pt, t, retract_metric_projection(pt, t, ALPHA), ALPHA)
        for k in (RetractionKind.QFACTOR, RetractionKind.POLAR):
            excess = max(excess, d_mp - ambient_distance(pt, t, retract(pt, t, ALPHA, k), ALPHA))
    ok = min(slopes.values()) >= 1.9 and max(accel.values()) <= 1e-5 and excess <= 1e-12
    slope_txt = ", ".join(f"{k.value} {v:.3f}" for k, v in slopes.items())
    return ok, (f"first-order slopes [{slope_txt}] (>= 1.9); accel/(1+|t|^2) polar "
                f"{accel[RetractionKind.POLAR]:.1e}, metric_projection "
                f"{accel[RetractionKind.METRIC_PROJECTION]:.1e} (<= 1e-5); "
                f"metric projection distance excess {excess:.1e} (<= 1e-12)")


def criterion_4():
    """Metric and projection algebra at m, n <= 12."""
    rng = np.random.default_rng(4)
    worst = dict(inner=0.0, idem=0.0, pyth=0.0, normal=0.0)
    for i in range(60):
        m, n = (int(v) for v in rng.integers(3, 13, size=2))
        r = int(rng.integers(1, min(m, n)))
        alpha = ALPHAS[i % 3]
        pt = random_point(ManifoldDims(m, n, r), rng, sigma_range=(0.0, 2.0))
        t1, t2 = random_tangent(pt, rng, alpha), random_tangent(pt, rng, alpha)
        ref = ambient_inner(tangent_to_ambient(pt, t1), tangent_to_ambient(pt, t2), alpha)
        worst["inner"] = max(worst["inner"], abs(inner(pt, t1, t2, alpha) - ref) / abs(ref))
        Z = rng.standard_normal((n, n))
        amb = AmbientVector(rng.standard_normal((m, n)), Z + Z.T)
        p = project(pt, amb, alpha)
        pp = project(pt, tangent_to_ambient(pt, p), alpha)
        worst["idem"] = max(worst["idem"], norm(pt, p - pp, alpha) / norm(pt, p, alpha))
        rest = amb - tangent_to_ambient(pt, p)
        total = ambient_inner(amb, amb, alpha)
        worst["pyth"] = max(worst["pyth"], abs(total - norm(pt, p, alpha) ** 2 - ambient_inner(rest, rest, alpha)) / total)
        nv = normal_basis_sample(pt, alpha, rng)
        worst["normal"] = max(worst["normal"], norm(pt, project(pt, nv, alpha), alpha) / math.sqrt(ambient_inner(nv, nv, alpha)))
        # structured (sparse-friendly) path agrees with the dense one
        ps = project(pt, AmbientProducts(amb.Y @ pt.V, amb.Y.T @ pt.U, amb.Z @ pt.V), alpha)
        worst["idem"] = max(worst["idem"], norm(pt, p - ps, alpha) / norm(pt, p, alpha))
    ok = worst["inner"] <= 1e-12 and worst["idem"] <= 1e-10 and worst["pyth"] <= 1e-10 and worst["normal"] <= 1e-12
    return ok, (f"inner {worst['inner']:.1e} (<= 1e-12), idempotence {worst['idem']:.1e} (<= 1e-10), "
                f"Pythagoras {worst['pyth']:.1e} (<= 1e-10), normal {worst['normal']:.1e} (<= 1e-12)")


def criterion_5():
    """Gradient and Hessian norm bounds."""
    rng = np.random.default_rng(5)
    grad_excess = -math.inf
    hess_excess = -math.inf
    evaluated = 0
    for i in range(20):
        cost = _completion(40, 40, 3, i)
        pt = random_point(ManifoldDims(40, 40, 3), rng, sigma_range=(0.0, 1.0))
        est = hessian_op_norm_estimate(pt, cost, ALPHA, rng_seed=i)
        hess_excess = max(hess_excess, est - hessian_norm_bound(pt, cost, ALPHA))
        for alpha in ALPHAS:
            gn = norm(pt, riemannian_gradient(pt, cost, alpha), alpha)
            grad_excess = max(grad_excess, gn - float(np.linalg.norm(cost.dense_gradient(*_f(pt)))))
            evaluated += 1
    # and every iterate of an optimization run
    cost = _completion(40, 40, 3, 99)
    start = random_point(ManifoldDims(40, 40, 3), rng)
    geom = DesingularizationGeometry(ALPHA)
    x = start
    for _ in range(15):
        gn = norm(x, riemannian_gradient(x, cost, ALPHA), ALPHA)
        grad_excess = max(grad_excess, gn - float(np.linalg.norm(cost.dense_gradient(*_f(x)))))
        evaluated += 1
        x, _ = trust_region(geom, cost, x, SolverConfig(max_outer_iters=1))
    ok = grad_excess <= 0.0 and hess_excess <= 1e-8
    return ok, (f"max(||grad g|| - ||grad f||_F) = {grad_excess:.2e} over {evaluated} points (<= 0); "
                f"max(power estimate - bound) = {hess_excess:.2e} (<= 1e-8)")


def criterion_6():
    """Desk-scale trust-region convergence on the overestimate preset."""
    spec = harness.build_spec("overestimate", overrides={"geometries": "desing", "alphas": "0.5", "grad_tol": 1e-6})
    problem, start = harness.make_problem(spec)
    t0 = time.perf_counter()
    trace, geom = harness.run_single(spec, "desing", 0.5, problem, start)
    elapsed = time.perf_counter() - t0
    costs = [rec.cost for rec in trace.accepted()]
    descent = all(b <= a for a, b in zip(costs, costs[1:]))
    fin = trace.final
    ok = fin.cost <= 1e-8 and fin.grad_norm <= 1e-6 and trace.outer_iters <= 100 and elapsed < 60 and descent
    return ok, (f"cost {fin.cost:.2e} (<= 1e-8), grad {fin.grad_norm:.2e} (<= 1e-6), "
                f"{trace.outer_iters} outer iters (<= 100), {elapsed:.2f}s (< 60s), descent {descent}, "
                f"fallbacks {geom.fallbacks}")


def criterion_7():
    """Rank overestimation: desingularization needs no more outer iterations than LR."""
    results = []
    for seed in range(3):
        spec = harness.build_spec("expdecay-over", overrides={
            "seed": seed, "cost_tol": 1e-6, "grad_tol": 1e-12, "max_iters": 500,
            "geometries": "desing,lr", "alphas": "0.5"})
        problem, start = harness.make_problem(spec)
        its = {}
        for kind, alpha in spec.runs():
            trace, _ = harness.run_single(spec, kind, alpha, problem, start)
            its[kind] = harness.first_iter_below(harness.trace_rows(trace), 1e-6)
        results.append(its)
    ok = all(r["desing"] is not None and r["lr"] is not None and r["desing"] <= r["lr"] for r in results)
    txt = "; ".join(f"seed {i}: desing {r['desing']} vs lr {r['lr']}" for i, r in enumerate(results))
    return ok, txt


def _median_times(m, r=10, reps=7):
    problem = generate_problem(m, m, r, oversampling=5.0, seed=8)
    cost = problem.cost()
    rng = np.random.default_rng(8)
    base = random_point(problem.dims, rng, sigma_range=(0.5, 1.0))
    t = random_tangent(base, rng, ALPHA)
    tr, tg = [], []
    for _ in range(reps):
        # fresh arrays so the cost's residual cache cannot short-circuit
        pt = from_factors(base.U.copy(), base.Sigma.copy(), base.V.copy())
        t0 = time.perf_counter()
        riemannian_gradient(pt, cost, ALPHA)
        tg.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        retract_metric_projection(pt, t, ALPHA)
        tr.append(time.perf_counter() - t0)
    return float(np.median(tr)), float(np.median(tg))


def criterion_8():
    """Linear-in-(m + n) scaling of retraction and gradient."""
    r2, g2 = _median_times(2000)
    r4, g4 = _median_times(4000)
    qr, qg = r4 / r2, g4 / g2
    ok = qr < 3 and qg < 3
    return ok, (f"retraction {r2 * 1e3:.2f}ms -> {r4 * 1e3:.2f}ms (x{qr:.2f}); "
                f"gradient {g2 * 1e3:.2f}ms -> {g4 * 1e3:.2f}ms (x{qg:.2f}) (< 3)")


def criterion_9():
    """Identical experiment settings give identical CSV traces apart from time_s."""
    with tempfile.TemporaryDirectory() as tmp:
        outs = [os.path.join(tmp, name) for name in ("a", "b", "c")]
        base = {"m": 120, "n": 100, "r_star": 3, "r": 6, "alphas": "0.05,0.5,5", "geometries": "all"}
        for i, out in enumerate(outs):
            harness.run_experiment(harness.build_spec(overrides={**base, "out": out}), jobs=2 if i == 2 else 1)
        names = sorted(f for f in os.listdir(outs[0]) if f.endswith(".csv"))
        same = []
        for name in names:
            rows = [[row[:3] for row in harness.read_csv(os.path.join(o, name))] for o in outs]
            same.append(rows[0] == rows[1] == rows[2])
    return all(same) and len(names) == 5, f"{sum(same)}/{len(names)} CSVs identical across 2 sequential + 1 parallel run"


def criterion_10():
    """Baseline gradients and cross-geometry cost agreement."""
    rng = np.random.default_rng(10)
    lr_err = fr_err = consist = 0.0
    for i in range(10):
        cost = _completion(30, 25, 4, i) if i % 2 else _quadratic(30, 25, i)
        pt = random_point(ManifoldDims(30, 25, 4), rng, sigma_range=(0.1, 1.0))
        lr, fr = bl.lr_from_point(pt), bl.fixedrank_from_point(pt)
        vals = [cost.value(*_f(pt)), bl.lr_value(lr, cost), bl.fixedrank_value(fr, cost)]
        consist = max(consist, (max(vals) - min(vals)) / abs(vals[0]))
        for _ in range(5):
            d = bl.LRTangent(rng.standard_normal(lr.L.shape), rng.standard_normal(lr.R.shape))
            exact = bl.lr_inner(lr, bl.lr_gradient(lr, cost), d)
            fd = fd_directional(lambda s: bl.lr_value(bl.lr_retract(lr, d * s), cost), 1e-6)
            lr_err = max(lr_err, abs(fd - exact) / abs(exact))
            t = bl.random_fixedrank_tangent(fr, rng)
            exact = bl.fixedrank_inner(fr, bl.fixedrank_gradient(fr, cost), t)
            fd = fd_directional(lambda s: bl.fixedrank_value(bl.fixedrank_retract(fr, t * s), cost), 1e-6)
            fr_err = max(fr_err, abs(fd - exact) / abs(exact))
    ok = lr_err <= 1e-5 and fr_err <= 1e-5 and consist <= 1e-12
    return ok, f"LR FD {lr_err:.1e}, fixed-rank FD {fr_err:.1e} (<= 1e-5); cost agreement {consist:.1e} (<= 1e-12)"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def report(i: int):
    passed, detail = CRITERIA[i]()
    line = f"{'PASS' if passed else 'FAIL'} criterion {i}: {CRITERIA[i].__doc__.splitlines()[0]} -- {detail}"
    return passed, line


@pytest.mark.slow
@pytest.mark.parametrize("i", list(CRITERIA))
def test_criterion(i, capsys):
    passed, line = report(i)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    results = [report(i) for i in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(p for p, _ in results) else 1)
