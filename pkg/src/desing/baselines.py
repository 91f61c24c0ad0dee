"""Comparison geometries: the LR^T factorization and the fixed-rank manifold.

Both expose the same solver-facing interface as the desingularization
(cost, gradient, hessian, inner, norm, retract) and reuse the CostModel
product callbacks.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .calculus import CostModel
from .manifold import (
    EPS_ORTH,
    ManifoldPoint,
    OrthonormalityViolation,
    as_rng,
    random_stiefel,
)

RANK_DROP_RTOL = 1e-14


class RankDropped(ArithmeticError):
    """A fixed-rank iterate lost numerical rank and left the manifold."""


class _VectorOps:
    def _combine(self, other, op):
        return type(self)(*(op(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, a):
        return type(self)(*(a * getattr(self, f.name) for f in fields(self)))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, a):
        return self * (1.0 / a)


# LR^T parameterization ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class LRPoint:
    L: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_ones", np.ones(self.L.shape[1]))

    def factors(self):
        return self.L, self._ones, self.R

    def to_dense(self):
        return self.L @ self.R.T


@dataclass(frozen=True, eq=False)
class LRTangent(_VectorOps):
    dL: np.ndarray
    dR: np.ndarray


def lr_from_point(pt: ManifoldPoint) -> LRPoint:
    """Balanced factors L = U Sigma^{1/2}, R = V Sigma^{1/2}."""
    root = np.sqrt(pt.Sigma)
    return LRPoint(pt.U * root, pt.V * root)


def lr_value(pt: LRPoint, cost: CostModel) -> float:
    return cost.value(*pt.factors())


def lr_gradient(pt: LRPoint, cost: CostModel) -> LRTangent:
    f = pt.factors()
    return LRTangent(cost.grad_right(*f, pt.R), cost.grad_left(*f, pt.L))


def lr_hessian_vec(pt: LRPoint, t: LRTangent, cost: CostModel) -> LRTangent:
    """Euclidean Hessian of (L, R) -> f(L R^T) applied to (dL, dR).

    With Xdot = dL R^T + L dR^T:
        (hess f[Xdot] R + grad f dR, hess f[Xdot]^T L + grad f^T dL).
    """
    f = pt.factors()
    XL = np.hstack([t.dL, pt.L])
    XR = np.hstack([pt.R, t.dR])
    HR, HtL = cost.hess_both(*f, XL, XR, pt.R, pt.L)
    return LRTangent(HR + cost.grad_right(*f, t.dR), HtL + cost.grad_left(*f, t.dL))


def lr_inner(pt: LRPoint, u: LRTangent, v: LRTangent) -> float:
    return float(np.vdot(u.dL, v.dL) + np.vdot(u.dR, v.dR))


def lr_retract(pt: LRPoint, t: LRTangent) -> LRPoint:
    return LRPoint(pt.L + t.dL, pt.R + t.dR)


# Fixed-rank embedded manifold ---------------------------------------------


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray

    def factors(self):
        return self.U, self.Sigma, self.V

    def to_dense(self):
        return (self.U * self.Sigma) @ self.V.T


@dataclass(frozen=True, eq=False)
class FixedRankTangent(_VectorOps):
    """Xdot = U M V^T + Up V^T + U Vp^T with U^T Up = 0 and V^T Vp = 0."""

    M: np.ndarray
    Up: np.ndarray
    Vp: np.ndarray


def fixedrank_point(U, Sigma, V, tol: float = EPS_ORTH) -> FixedRankPoint:
    """Validated fixed-rank point; Sigma sorted descending and strictly positive."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float).ravel()
    for name, Q in (("U", U), ("V", V)):
        if np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])) > tol:
            raise OrthonormalityViolation(f"{name} does not have orthonormal columns")
    order = np.argsort(-Sigma, kind="stable")
    U, Sigma, V = U[:, order], Sigma[order], V[:, order]
    if Sigma.size == 0 or not Sigma[-1] > RANK_DROP_RTOL * Sigma[0]:
        raise RankDropped(f"smallest singular value {Sigma[-1]:.3e} vs largest {Sigma[0]:.3e}")
    for a in (U, Sigma, V):
        a.setflags(write=False)
    return FixedRankPoint(U, Sigma, V)


def fixedrank_from_point(pt: ManifoldPoint) -> FixedRankPoint:
    return fixedrank_point(pt.U, pt.Sigma, pt.V)


def fixedrank_value(pt: FixedRankPoint, cost: CostModel) -> float:
    return cost.value(*pt.factors())


def fixedrank_project(pt: FixedRankPoint, ZV, ZtU) -> FixedRankTangent:
    """Project an ambient Z given only Z V and Z^T U."""
    M = pt.U.T @ ZV
    return FixedRankTangent(M, ZV - pt.U @ M, ZtU - pt.V @ M.T)


def fixedrank_gradient(pt: FixedRankPoint, cost: CostModel) -> FixedRankTangent:
    f = pt.factors()
    return fixedrank_project(pt, cost.grad_right(*f, pt.V), cost.grad_left(*f, pt.U))


def fixedrank_tangent_factors(pt: FixedRankPoint, t: FixedRankTangent):
    """Xdot as XL XR^T: [U M + Up, U] [V, Vp]^T."""
    return np.hstack([pt.U @ t.M + t.Up, pt.U]), np.hstack([pt.V, t.Vp])


def fixedrank_hessian_vec(pt: FixedRankPoint, t: FixedRankTangent, cost: CostModel) -> FixedRankTangent:
    """Exact Riemannian Hessian on the embedded fixed-rank manifold.

    Projection of hess f[Xdot] plus the curvature terms
    P_U^perp grad f Vp Sigma^{-1} and P_V^perp grad f^T Up Sigma^{-1}.
    """
    f = pt.factors()
    XL, XR = fixedrank_tangent_factors(pt, t)
    HV, HtU = cost.hess_both(*f, XL, XR, pt.V, pt.U)
    h = fixedrank_project(pt, HV, HtU)
    T = cost.grad_right(*f, t.Vp) / pt.Sigma
    Up = h.Up + T - pt.U @ (pt.U.T @ T)
    T = cost.grad_left(*f, t.Up) / pt.Sigma
    Vp = h.Vp + T - pt.V @ (pt.V.T @ T)
    return FixedRankTangent(h.M, Up, Vp)


def fixedrank_inner(pt: FixedRankPoint, u: FixedRankTangent, v: FixedRankTangent) -> float:
    return float(np.vdot(u.M, v.M) + np.vdot(u.Up, v.Up) + np.vdot(u.Vp, v.Vp))


def fixedrank_retract(pt: FixedRankPoint, t: FixedRankTangent) -> FixedRankPoint:
    """Rank-r truncated SVD of X + Xdot, computed from a 2r x 2r core.

    X + Xdot = [U Up] [[Sigma + M, I], [I, 0]] [V Vp]^T. Joint QRs of
    [U Up] and [V Vp] keep the bases orthonormal even when Up or Vp is rank
    deficient. Raises :class:`RankDropped` if the result is numerically
    rank deficient.
    """
    r = pt.Sigma.size
    Qa, Ra = np.linalg.qr(np.hstack([pt.U, t.Up]))
    Qb, Rb = np.linalg.qr(np.hstack([pt.V, t.Vp]))
    eye = np.eye(r)
    B = np.block([[np.diag(pt.Sigma) + t.M, eye], [eye, np.zeros((r, r))]])
    Uc, sc, Vct = np.linalg.svd(Ra @ B @ Rb.T)
    return fixedrank_point(Qa @ Uc[:, :r], sc[:r], Qb @ Vct.T[:, :r], tol=1e-8)


def fixedrank_to_ambient(pt: FixedRankPoint, t: FixedRankTangent) -> np.ndarray:
    XL, XR = fixedrank_tangent_factors(pt, t)
    return XL @ XR.T


def random_fixedrank_tangent(pt: FixedRankPoint, rng_seed=None) -> FixedRankTangent:
    rng = as_rng(rng_seed)
    r = pt.Sigma.size
    Up = rng.standard_normal(pt.U.shape)
    Vp = rng.standard_normal(pt.V.shape)
    t = FixedRankTangent(rng.standard_normal((r, r)), Up - pt.U @ (pt.U.T @ Up), Vp - pt.V @ (pt.V.T @ Vp))
    return t / np.sqrt(fixedrank_inner(pt, t, t))


def random_lr_point(m: int, n: int, r: int, rng_seed=None, sigma_range=(0.0, 1e-3)) -> LRPoint:
    rng = as_rng(rng_seed)
    root = np.sqrt(rng.uniform(*sigma_range, size=r))
    return LRPoint(random_stiefel(rng, m, r) * root, random_stiefel(rng, n, r) * root)
