import warnings

import numpy as np
import pytest

from conftest import make_point
from desing.geometry import norm, orthonormal_complement
from desing.manifold import (
    ManifoldDims,
    TangentVector,
    from_factors,
    random_point,
    random_tangent,
    tangent_to_ambient,
    to_dense,
)
from desing.retractions import (
    EigGapWarning,
    RetractionKind,
    ambient_distance,
    intrinsic_acceleration_residual,
    retract,
    retract_metric_projection,
    retract_polar,
    retract_qfactor,
    retract_with_fallback,
)
from desing.verify import first_order_slope

ALPHA = 0.5
KINDS = list(RetractionKind)


def dense_metric_projection(pt, t, alpha):
    """Top-r eigenvectors of Y^T Y + 2 alpha (I - P - Pdot), Y = X + Xdot."""
    X, P = to_dense(pt)
    a = tangent_to_ambient(pt, t)
    Y = X + a.Y
    n, r = pt.V.shape
    C = Y.T @ Y + 2 * alpha * (np.eye(n) - P - a.Z)
    _, evecs = np.linalg.eigh(0.5 * (C + C.T))
    Q = evecs[:, -r:]
    return Y @ Q @ Q.T, np.eye(n) - Q @ Q.T


@pytest.mark.parametrize("kind", KINDS)
def test_zero_step_is_identity(rng, kind):
    pt = make_point(rng, 9, 7, 3)
    X, P = to_dense(pt)
    t = random_tangent(pt, rng, ALPHA) * 0.0
    X2, P2 = to_dense(retract(pt, t, ALPHA, kind))
    assert np.linalg.norm(X2 - X) <= 1e-13 * max(1, np.linalg.norm(X))
    assert np.linalg.norm(P2 - P) <= 1e-13


def test_qfactor_vp_zero_moves_only_x(rng):
    pt = make_point(rng, 9, 7, 3)
    X, P = to_dense(pt)
    K = rng.standard_normal(pt.U.shape)
    X2, P2 = to_dense(retract_qfactor(pt, TangentVector(K, np.zeros_like(pt.V))))
    assert np.allclose(X2, X + K @ pt.V.T, atol=1e-12)
    assert np.allclose(P2, P, atol=1e-12)


def test_polar_with_k_zero_equals_qfactor(rng):
    pt = make_point(rng, 9, 7, 3)
    t = random_tangent(pt, rng, ALPHA)
    t = TangentVector(np.zeros_like(t.K), t.Vp)
    a, b = to_dense(retract_polar(pt, t, ALPHA)), to_dense(retract_qfactor(pt, t))
    assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12)


@pytest.mark.parametrize("alpha", [0.05, 0.5, 5.0])
def test_metric_projection_matches_dense_oracle(rng, alpha):
    for _ in range(10):
        pt = make_point(rng, 8, 7, 2, sigma_range=(0.0, 2.0))
        t = random_tangent(pt, rng, alpha) * rng.uniform(0.1, 3.0)
        Xo, Po = dense_metric_projection(pt, t, alpha)
        X, P = to_dense(retract_metric_projection(pt, t, alpha))
        assert np.linalg.norm(X - Xo) <= 1e-9 * max(1, np.linalg.norm(Xo))
        assert np.linalg.norm(P - Po) <= 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_first_order(rng, kind):
    pt = make_point(rng, 10, 8, 3)
    assert first_order_slope(pt, random_tangent(pt, rng, ALPHA), ALPHA, kind) >= 1.9


@pytest.mark.parametrize("kind", [RetractionKind.POLAR, RetractionKind.METRIC_PROJECTION])
def test_second_order(rng, kind):
    for _ in range(5):
        pt = make_point(rng, 9, 8, 3)
        t = random_tangent(pt, rng, ALPHA) * rng.uniform(0.3, 3.0)
        res = intrinsic_acceleration_residual(pt, t, ALPHA, kind)
        assert res <= 1e-5 * (1 + norm(pt, t, ALPHA) ** 2)


def test_qfactor_not_second_order(rng):
    worst = 0.0
    for _ in range(5):
        pt = make_point(rng, 9, 8, 3)
        worst = max(worst, intrinsic_acceleration_residual(pt, random_tangent(pt, rng, ALPHA), ALPHA, "qfactor"))
    assert worst > 1e-3


def test_metric_projection_is_closest(rng):
    dims = ManifoldDims(10, 8, 3)
    for _ in range(100):
        pt = random_point(dims, rng, sigma_range=(0.2, 2.0))
        t = random_tangent(pt, rng, ALPHA) * 0.3
        d_mp = ambient_distance(pt, t, retract_metric_projection(pt, t, ALPHA), ALPHA)
        for other in (retract_qfactor(pt, t), retract_polar(pt, t, ALPHA)):
            assert d_mp <= ambient_distance(pt, t, other, ALPHA) + 1e-12


def _nonunique_instance(alpha, m=6, n=6, r=2):
    U = np.eye(m)[:, :r]
    V = np.eye(n)[:, :r]
    pt = from_factors(U, np.ones(r), V)
    L = np.zeros((n - r, r))
    L[:r, :r] = np.sqrt(4 * alpha ** 2 + 2 * alpha) * np.eye(r)
    Vp = orthonormal_complement(V) @ L
    return pt, TangentVector(-(2 * alpha + 1) * U, Vp)


@pytest.mark.parametrize("alpha", [0.05, 0.5, 5.0])
def test_eiggap_warning_on_nonunique_instance(alpha):
    pt, t = _nonunique_instance(alpha)
    with pytest.warns(EigGapWarning):
        retract_metric_projection(pt, t, alpha)
    new, fell_back = retract_with_fallback(pt, t, alpha, "metric_projection")
    assert fell_back
    X, P = to_dense(new)
    assert np.linalg.norm(X @ P) <= 1e-12


def test_no_warning_on_generic_instance(rng):
    pt = make_point(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error", EigGapWarning)
        retract_metric_projection(pt, random_tangent(pt, rng, ALPHA), ALPHA)


@pytest.mark.parametrize("kind", KINDS)
def test_output_is_valid_point(rng, kind):
    pt = make_point(rng, 9, 7, 3, sigma_range=(0.0, 1e-3))
    new = retract(pt, random_tangent(pt, rng, ALPHA) * 5.0, ALPHA, kind)
    r = pt.Sigma.size
    assert np.linalg.norm(new.U.T @ new.U - np.eye(r)) <= 1e-10
    assert np.linalg.norm(new.V.T @ new.V - np.eye(r)) <= 1e-10
    assert np.all(np.diff(new.Sigma) <= 0) and np.all(new.Sigma >= 0)


def test_kind_parse():
    assert RetractionKind.parse("polar") is RetractionKind.POLAR
    assert RetractionKind.parse(RetractionKind.QFACTOR) is RetractionKind.QFACTOR
    with pytest.raises(ValueError):
        RetractionKind.parse("exp")
