"""Retractions on the desingularization.

All three kinds pick a new r-dimensional row space Q (orthonormal n x r)
and return ((X + Xdot) Q Q^T, I - Q Q^T), represented through a thin SVD of
the m x r matrix (X + Xdot) Q. Every step is O((m + n) r^2).
"""

from __future__ import annotations

import enum
import warnings

import numpy as np

from .geometry import norm, project, sfactor
from .manifold import (
    AmbientVector,
    ambient_inner,
    ManifoldPoint,
    TangentVector,
    check_alpha,
    from_factors,
    tangent_to_ambient,
    to_dense,
)

EIGGAP_RTOL = 1e-12


class EigGapWarning(RuntimeWarning):
    """The metric projection is not unique: the r-th eigenvalue gap vanished."""


class RetractionKind(enum.Enum):
    QFACTOR = "qfactor"
    METRIC_PROJECTION = "metric_projection"
    POLAR = "polar"

    @classmethod
    def parse(cls, value) -> RetractionKind:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"q": "qfactor", "q_factor": "qfactor", "metric": "metric_projection", "mp": "metric_projection"}
        return cls(aliases.get(key, key))


def _lift_row_space(pt: ManifoldPoint, t: TangentVector, Q: np.ndarray) -> ManifoldPoint:
    # (X + Xdot) Q = (U Sigma + K) (V^T Q) + U Sigma (Vp^T Q)
    US = pt.USigma
    W = (US + t.K) @ (pt.V.T @ Q) + US @ (t.Vp.T @ Q)
    Ubar, sbar, Ht = np.linalg.svd(W, full_matrices=False)
    return from_factors(Ubar, sbar, Q @ Ht.T)


def retract_qfactor(pt: ManifoldPoint, t: TangentVector) -> ManifoldPoint:
    """Q-factor retraction: row space from a thin QR of V + Vp."""
    Q, _ = np.linalg.qr(pt.V + t.Vp)
    return _lift_row_space(pt, t, Q)


def metric_projection_core(pt: ManifoldPoint, t: TangentVector, alpha: float):
    """Return (Vtilde, eigenvalues descending) for the metric projection step."""
    alpha = check_alpha(alpha)
    r = pt.U.shape[1]
    S2 = np.diag(pt.Sigma ** 2)
    UtK = pt.U.T @ t.K
    SUtK = pt.Sigma[:, None] * UtK
    aI = 2.0 * alpha * np.eye(r)
    D = np.block(
        [
            [S2 + SUtK + SUtK.T + t.K.T @ t.K + aI, S2 + SUtK.T + aI],
            [S2 + SUtK + aI, S2],
        ]
    )
    Q, R = np.linalg.qr(np.hstack([pt.V, t.Vp]))
    C = R @ D @ R.T
    evals, evecs = np.linalg.eigh(0.5 * (C + C.T))
    evals = evals[::-1]
    Vtilde = Q @ evecs[:, ::-1][:, :r]
    return Vtilde, evals


def retract_metric_projection(pt: ManifoldPoint, t: TangentVector, alpha: float) -> ManifoldPoint:
    """Nearest point of the manifold to (X + Xdot, P + Pdot) in the alpha-norm.

    Emits :class:`EigGapWarning` when the r-th and (r+1)-th eigenvalues of
    the reduced 2r x 2r problem coincide to relative precision
    ``EIGGAP_RTOL``; the returned point is then one of several minimizers.
    """
    r = pt.U.shape[1]
    Vtilde, evals = metric_projection_core(pt, t, alpha)
    scale = max(abs(evals[0]), np.finfo(float).tiny)
    if evals[r - 1] - evals[r] < EIGGAP_RTOL * scale:
        warnings.warn(
            f"metric projection not unique: eigengap {evals[r - 1] - evals[r]:.3e} "
            f"relative to {scale:.3e}",
            EigGapWarning,
            stacklevel=2,
        )
    return _lift_row_space(pt, t, Vtilde)


def polar_factor(Z: np.ndarray) -> np.ndarray:
    """Z (Z^T Z)^{-1/2} via the eigendecomposition of the r x r Gram matrix."""
    G = Z.T @ Z
    evals, evecs = np.linalg.eigh(0.5 * (G + G.T))
    evals = np.maximum(evals, 1e-300)
    return Z @ ((evecs / np.sqrt(evals)) @ evecs.T)


def retract_polar(pt: ManifoldPoint, t: TangentVector, alpha: float) -> ManifoldPoint:
    """Second-order retraction defined on the whole tangent bundle.

    Row space from the polar factor of Z = V + Vp (I - K^T U Sigma S^{-1}).
    """
    s = sfactor(pt, alpha)
    KtUS = (t.K.T @ pt.U) * (pt.Sigma / s)
    Z = pt.V + t.Vp - t.Vp @ KtUS
    return _lift_row_space(pt, t, polar_factor(Z))


def retract(pt: ManifoldPoint, t: TangentVector, alpha: float, kind=RetractionKind.POLAR) -> ManifoldPoint:
    kind = RetractionKind.parse(kind)
    if kind is RetractionKind.QFACTOR:
        return retract_qfactor(pt, t)
    if kind is RetractionKind.METRIC_PROJECTION:
        return retract_metric_projection(pt, t, alpha)
    return retract_polar(pt, t, alpha)


def retract_with_fallback(pt: ManifoldPoint, t: TangentVector, alpha: float, kind) -> tuple[ManifoldPoint, bool]:
    """Retract, switching from metric projection to polar on a vanishing eigengap.

    Returns the new point and whether the fallback was taken.
    """
    kind = RetractionKind.parse(kind)
    if kind is not RetractionKind.METRIC_PROJECTION:
        return retract(pt, t, alpha, kind), False
    with warnings.catch_warnings():
        warnings.simplefilter("error", EigGapWarning)
        try:
            return retract_metric_projection(pt, t, alpha), False
        except EigGapWarning:
            return retract_polar(pt, t, alpha), True


def ambient_distance(pt: ManifoldPoint, t: TangentVector, new: ManifoldPoint, alpha: float) -> float:
    """alpha-distance between (X + Xdot, P + Pdot) and a point. Desk scale."""
    X, P = to_dense(pt)
    Xn, Pn = to_dense(new)
    tv = tangent_to_ambient(pt, t)
    d = AmbientVector(X + tv.Y - Xn, P + tv.Z - Pn)
    return float(np.sqrt(ambient_inner(d, d, alpha)))


def intrinsic_acceleration_residual(pt: ManifoldPoint, t: TangentVector, alpha: float, kind, h: float = 1e-4) -> float:
    """alpha-norm of the projected second difference of s -> R(s t) at s = 0.

    Dense, desk scale. Second-order retractions give O(h^2) residuals.
    """
    plus = to_dense(retract(pt, h * t, alpha, kind))
    zero = to_dense(pt)
    minus = to_dense(retract(pt, -h * t, alpha, kind))
    accY = (plus[0] - 2.0 * zero[0] + minus[0]) / h ** 2
    accZ = (plus[1] - 2.0 * zero[1] + minus[1]) / h ** 2
    acc = project(pt, AmbientVector(accY, 0.5 * (accZ + accZ.T)), alpha)
    return norm(pt, acc, alpha)
