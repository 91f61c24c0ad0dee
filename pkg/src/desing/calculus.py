"""Riemannian gradient and Hessian of g = f o phi on the desingularization.

A cost f on R^{m x n} is accessed only through products with its Euclidean
gradient and Hessian (see :class:`CostModel`), so sparse problems never
densify anything.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .geometry import inner, norm, orthonormal_complement, project_perp_v, sfactor
from .manifold import ManifoldPoint, TangentVector, as_rng, check_alpha, random_tangent


class CostModel(abc.ABC):
    """A smooth f: R^{m x n} -> R, evaluated at X = U diag(s) V^T.

    The factors passed in need not be orthonormal (the LR baseline passes
    X = L R^T as (L, ones, R)). Hessian products take the direction as a
    low-rank product Xdot = XL XR^T so that every geometry can use them.
    """

    @abc.abstractmethod
    def value(self, U, s, V) -> float: ...

    @abc.abstractmethod
    def grad_right(self, U, s, V, A) -> np.ndarray:
        """grad f(X) @ A for A of shape (n, k)."""

    @abc.abstractmethod
    def grad_left(self, U, s, V, B) -> np.ndarray:
        """grad f(X)^T @ B for B of shape (m, k)."""

    @abc.abstractmethod
    def hess_right(self, U, s, V, XL, XR, A) -> np.ndarray:
        """hess f(X)[XL XR^T] @ A."""

    @abc.abstractmethod
    def hess_left(self, U, s, V, XL, XR, B) -> np.ndarray:
        """hess f(X)[XL XR^T]^T @ B."""

    def hess_both(self, U, s, V, XL, XR, A, B):
        return self.hess_right(U, s, V, XL, XR, A), self.hess_left(U, s, V, XL, XR, B)

    def hess_op_norm(self, U, s, V) -> float:
        """Operator norm of hess f(X) (Frobenius geometry)."""
        raise NotImplementedError

    def dense_gradient(self, U, s, V) -> np.ndarray:
        """grad f(X) as a dense matrix. Desk scale; used by oracles."""
        raise NotImplementedError

    def dense_hessian(self, U, s, V, Xdot) -> np.ndarray:
        raise NotImplementedError


def tangent_factors(pt: ManifoldPoint, t: TangentVector):
    """Xdot = K V^T + U Sigma Vp^T written as XL XR^T with 2r columns."""
    return np.hstack([t.K, pt.USigma]), np.hstack([pt.V, t.Vp])


def value(pt: ManifoldPoint, cost: CostModel) -> float:
    return cost.value(pt.U, pt.Sigma, pt.V)


def riemannian_gradient(pt: ManifoldPoint, cost: CostModel, alpha: float) -> TangentVector:
    s = sfactor(pt, alpha)
    K = cost.grad_right(pt.U, pt.Sigma, pt.V, pt.V)
    W = cost.grad_left(pt.U, pt.Sigma, pt.V, pt.USigma)
    return TangentVector(K, project_perp_v(pt.V, W) / s)


def hessian_vec(pt: ManifoldPoint, t: TangentVector, cost: CostModel, alpha: float) -> TangentVector:
    """Riemannian Hessian applied to ``t``.

    Kbar = H V + M G Vp and Vpbar = P (H^T U Sigma + G^T M K) S^{-1}, where
    G = grad f(X), H = hess f(X)[Xdot] and M = I - U Sigma^2 S^{-1} U^T is
    applied as a rank-r correction.
    """
    s = sfactor(pt, alpha)
    U, sig, V = pt.U, pt.Sigma, pt.V
    shrink = sig ** 2 / s

    def apply_m(W):
        return W - U @ (shrink[:, None] * (U.T @ W))

    XL, XR = tangent_factors(pt, t)
    HV, HtU = cost.hess_both(U, sig, V, XL, XR, V, U)
    Kbar = HV + apply_m(cost.grad_right(U, sig, V, t.Vp))
    W = HtU * sig + cost.grad_left(U, sig, V, apply_m(t.K))
    return TangentVector(Kbar, project_perp_v(V, W) / s)


def hessian_quadratic_form(pt: ManifoldPoint, t: TangentVector, cost: CostModel, alpha: float) -> float:
    """<Xdot, hess f[Xdot]> + 2 <K, M grad f Vp>, computed without hessian_vec."""
    s = sfactor(pt, alpha)
    XL, XR = tangent_factors(pt, t)
    HXR = cost.hess_right(pt.U, pt.Sigma, pt.V, XL, XR, XR)
    # <XL XR^T, H> = trace(XL^T H XR)
    curv = float(np.vdot(XL, HXR))
    GVp = cost.grad_right(pt.U, pt.Sigma, pt.V, t.Vp)
    MGVp = GVp - pt.U @ ((pt.Sigma ** 2 / s)[:, None] * (pt.U.T @ GVp))
    return curv + 2.0 * float(np.vdot(t.K, MGVp))


@dataclass(frozen=True)
class OptimalityReport:
    grad_norm: float
    kv_residual: float
    usigma_residual: float
    hess_min_eig_estimate: float | None = None


def optimality_report(pt: ManifoldPoint, cost: CostModel, alpha: float, hess_min_eig: bool = False) -> OptimalityReport:
    """First-order residuals ||grad f V|| and ||grad f^T U Sigma||.

    With ``hess_min_eig`` the smallest Hessian eigenvalue is estimated as
    well (desk scale).
    """
    grad = riemannian_gradient(pt, cost, alpha)
    usig = cost.grad_left(pt.U, pt.Sigma, pt.V, pt.USigma)
    lam = hessian_min_eig(pt, cost, alpha) if hess_min_eig else None
    return OptimalityReport(
        grad_norm=norm(pt, grad, alpha),
        kv_residual=float(np.linalg.norm(grad.K)),
        usigma_residual=float(np.linalg.norm(usig)),
        hess_min_eig_estimate=lam,
    )


def _orthonormal_coords(pt: ManifoldPoint, alpha: float):
    """Linear isometry from R^{dim} (Euclidean) onto the tangent space."""
    m, r = pt.U.shape
    Vq = orthonormal_complement(pt.V)
    w = 1.0 / np.sqrt(sfactor(pt, alpha))

    def to_tangent(c):
        K = c[: m * r].reshape(m, r)
        L = c[m * r:].reshape(Vq.shape[1], r)
        return TangentVector(K, (Vq @ L) * w)

    def from_tangent(t):
        L = (Vq.T @ t.Vp) / w
        return np.concatenate([t.K.ravel(), L.ravel()])

    return to_tangent, from_tangent, m * r + Vq.shape[1] * r


def hessian_min_eig(pt: ManifoldPoint, cost: CostModel, alpha: float, rng_seed=0) -> float:
    """Smallest eigenvalue of the Riemannian Hessian by Lanczos (desk scale)."""
    from scipy.sparse.linalg import LinearOperator, eigsh

    to_t, from_t, dim = _orthonormal_coords(pt, alpha)
    op = LinearOperator((dim, dim), matvec=lambda c: from_t(hessian_vec(pt, to_t(np.ravel(c)), cost, alpha)), dtype=float)
    if dim <= 60:
        H = np.column_stack([op.matvec(e) for e in np.eye(dim)])
        return float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
    v0 = as_rng(rng_seed).standard_normal(dim)
    lam = eigsh(op, k=1, which="SA", v0=v0, maxiter=2 * dim, return_eigenvectors=False)
    return float(lam[0])


def gradf_perp_spectral_norm(pt: ManifoldPoint, cost: CostModel, iters: int = 50, tol: float = 1e-6, rng_seed=0) -> float:
    """Estimate ||grad f(X) P||_2 by power iteration on P G^T G P."""
    rng = as_rng(rng_seed)
    U, s, V = pt.U, pt.Sigma, pt.V
    w = project_perp_v(V, rng.standard_normal((V.shape[0], 1)))
    nw = np.linalg.norm(w)
    if nw == 0:
        return 0.0
    w /= nw
    est = 0.0
    for _ in range(iters):
        y = cost.grad_right(U, s, V, w)
        w_new = project_perp_v(V, cost.grad_left(U, s, V, y))
        new_est = float(np.sqrt(np.linalg.norm(w_new)))
        nw = np.linalg.norm(w_new)
        if nw == 0:
            return 0.0
        w = w_new / nw
        if abs(new_est - est) <= tol * max(new_est, 1e-300):
            est = new_est
            break
        est = new_est
    return est


def hessian_norm_bound(pt: ManifoldPoint, cost: CostModel, alpha: float, dense: bool | None = None) -> float:
    """||hess f(X)||_op + (2 alpha + sigma_r^2)^{-1/2} ||grad f(X) P||_2.

    ``dense`` computes the second term exactly with an SVD (desk scale);
    otherwise it is a power-iteration estimate.
    """
    alpha = check_alpha(alpha)
    if dense is None:
        dense = pt.U.shape[0] * pt.V.shape[0] <= 250_000
    if dense:
        G = cost.dense_gradient(pt.U, pt.Sigma, pt.V)
        gp = float(np.linalg.norm(project_perp_v(pt.V, G.T), 2))
    else:
        gp = gradf_perp_spectral_norm(pt, cost)
    coef = 1.0 / np.sqrt(2.0 * alpha + pt.Sigma[-1] ** 2)
    return float(cost.hess_op_norm(pt.U, pt.Sigma, pt.V) + coef * gp)


def hessian_op_norm_estimate(pt: ManifoldPoint, cost: CostModel, alpha: float, iters: int = 200, rng_seed=0) -> float:
    """Power iteration on the (self-adjoint) Hessian; a lower estimate of its norm."""
    t = random_tangent(pt, rng_seed, alpha)
    est = 0.0
    for _ in range(iters):
        h = hessian_vec(pt, t, cost, alpha)
        nh = norm(pt, h, alpha)
        if nh == 0:
            return 0.0
        est = max(est, nh)
        t = h / nh
    return est


def directional_derivative(pt: ManifoldPoint, t: TangentVector, cost: CostModel, alpha: float) -> float:
    return inner(pt, riemannian_gradient(pt, cost, alpha), t, alpha)
