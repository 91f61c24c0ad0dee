"""The alpha-metric on the desingularization: inner products and projections.

The embedding space R^{m x n} x Sym(n) carries <Y1,Y2> + alpha <Z1,Z2>.
Restricted to a tangent space it reads <K1,K2> + <Vp1, Vp2 S> with the
diagonal weight S = 2 alpha I + Sigma^2, so nothing larger than (m + n) r
is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import (
    AmbientVector,
    ManifoldPoint,
    TangentVector,
    as_rng,
    check_alpha,
)


@dataclass(frozen=True)
class AmbientProducts:
    """The only products of an ambient (Y, Z) that projection needs.

    YV is m x r, YtU is n x r and ZV is n x r (``None`` means Z = 0). This
    lets structured or sparse Y be projected without densifying it.
    """

    YV: np.ndarray
    YtU: np.ndarray
    ZV: np.ndarray | None = None


def sfactor(pt: ManifoldPoint, alpha: float) -> np.ndarray:
    """Diagonal of S(alpha) = 2 alpha I + Sigma^2 as a length-r vector."""
    return 2.0 * check_alpha(alpha) + pt.Sigma ** 2


def inner(pt: ManifoldPoint, t1: TangentVector, t2: TangentVector, alpha: float) -> float:
    s = sfactor(pt, alpha)
    return float(np.vdot(t1.K, t2.K) + np.vdot(t1.Vp * s, t2.Vp))


def norm(pt: ManifoldPoint, t: TangentVector, alpha: float) -> float:
    return float(np.sqrt(max(inner(pt, t, t, alpha), 0.0)))


def project_perp_v(V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Apply P = I - V V^T to W without forming P."""
    return W - V @ (V.T @ W)


def project(pt: ManifoldPoint, amb, alpha: float) -> TangentVector:
    """Orthogonal projection onto the tangent space at ``pt``.

    ``amb`` is either a dense :class:`AmbientVector` or an
    :class:`AmbientProducts` bundle. Returns K = Y V and
    Vp = P (Y^T U Sigma - 2 alpha Z V) S^{-1}.
    """
    s = sfactor(pt, alpha)
    if isinstance(amb, AmbientVector):
        amb = AmbientProducts(YV=amb.Y @ pt.V, YtU=amb.Y.T @ pt.U, ZV=amb.Z @ pt.V)
    W = amb.YtU * pt.Sigma
    if amb.ZV is not None:
        W = W - 2.0 * alpha * amb.ZV
    Vp = project_perp_v(pt.V, W) / s
    return TangentVector(np.array(amb.YV, dtype=float), Vp)


def orthonormal_complement(Q: np.ndarray) -> np.ndarray:
    """Columns completing Q to an orthonormal basis. Desk scale only."""
    full, _ = np.linalg.qr(Q, mode="complete")
    return full[:, Q.shape[1]:]


def normal_basis_sample(pt: ManifoldPoint, alpha: float, rng_seed=None) -> AmbientVector:
    """Random element of the normal space at ``pt`` (desk scale).

    Uses the parameterization
        G = U A Vperp^T + Uperp B Vperp^T,
        H = V C V^T + Vperp D^T V^T + V D Vperp^T + Vperp E Vperp^T,
    with C, E symmetric and Sigma A = 2 alpha D. A is drawn freely and D is
    solved from the constraint, so rows of D vanish wherever sigma_i = 0.
    """
    alpha = check_alpha(alpha)
    rng = as_rng(rng_seed)
    m, r = pt.U.shape
    n = pt.V.shape[0]
    Up = orthonormal_complement(pt.U)
    Vq = orthonormal_complement(pt.V)
    A = rng.standard_normal((r, n - r))
    B = rng.standard_normal((m - r, n - r))
    C = rng.standard_normal((r, r))
    C = C + C.T
    E = rng.standard_normal((n - r, n - r))
    E = E + E.T
    D = pt.Sigma[:, None] * A / (2.0 * alpha)
    G = pt.U @ A @ Vq.T + Up @ B @ Vq.T
    VDVq = pt.V @ D @ Vq.T
    H = pt.V @ C @ pt.V.T + VDVq + VDVq.T + Vq @ E @ Vq.T
    return AmbientVector(G, 0.5 * (H + H.T))
