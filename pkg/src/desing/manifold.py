"""Points and tangent vectors of the desingularization of bounded-rank matrices.

A point (X, P) with XP = 0 and P a rank-(n - r) orthogonal projector is
stored as a triplet (U, Sigma, V) so that X = U diag(Sigma) V^T and
P = I - V V^T. A tangent vector at that point is stored as a pair (K, Vp)
with V^T Vp = 0, encoding

    Xdot = K V^T + U diag(Sigma) Vp^T,    Pdot = -Vp V^T - V Vp^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_ORTH = 1e-10


class OrthonormalityViolation(ValueError):
    pass


class NegativeSingularValue(ValueError):
    pass


class NotOnManifold(ValueError):
    pass


class RankMismatch(ValueError):
    pass


def check_alpha(alpha: float) -> float:
    """Validate the metric parameter; only alpha > 0 is supported."""
    alpha = float(alpha)
    if not alpha > 0 or not np.isfinite(alpha):
        raise ValueError(f"metric parameter alpha must be positive, got {alpha!r}")
    return alpha


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ManifoldDims:
    m: int
    n: int
    r: int

    def __post_init__(self):
        if min(self.m, self.n) < 1:
            raise ValueError(f"dimensions must be positive, got m={self.m}, n={self.n}")
        if not 1 <= self.r < min(self.m, self.n):
            raise ValueError(f"need 1 <= r < min(m, n), got r={self.r} for m={self.m}, n={self.n}")

    @property
    def dim(self) -> int:
        """Dimension (m + n - r) r of the manifold."""
        return (self.m + self.n - self.r) * self.r


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """Representation (U, Sigma, V) of a point (X, P).

    Build instances with :func:`from_factors` or :func:`from_dense`, which
    validate and canonicalize; the raw constructor does no checking.
    """

    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray

    @property
    def dims(self) -> ManifoldDims:
        return ManifoldDims(self.U.shape[0], self.V.shape[0], self.U.shape[1])

    @property
    def USigma(self) -> np.ndarray:
        return self.U * self.Sigma


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Representation (K, Vp) of a tangent vector.

    ``drift`` records the norm of the V-component removed from Vp when the
    vector was cleaned at construction; it is a diagnostic only.
    """

    K: np.ndarray
    Vp: np.ndarray
    drift: float = field(default=0.0, compare=False)

    def __add__(self, other: TangentVector) -> TangentVector:
        return TangentVector(self.K + other.K, self.Vp + other.Vp)

    def __sub__(self, other: TangentVector) -> TangentVector:
        return TangentVector(self.K - other.K, self.Vp - other.Vp)

    def __mul__(self, a: float) -> TangentVector:
        return TangentVector(a * self.K, a * self.Vp)

    __rmul__ = __mul__

    def __neg__(self) -> TangentVector:
        return TangentVector(-self.K, -self.Vp)

    def __truediv__(self, a: float) -> TangentVector:
        return TangentVector(self.K / a, self.Vp / a)


@dataclass(frozen=True, eq=False)
class AmbientVector:
    """A general element (Y, Z) of R^{m x n} x Sym(n)."""

    Y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z)
        if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
            raise ValueError("Z must be square")
        if np.linalg.norm(Z - Z.T) > EPS_ORTH * max(1.0, np.linalg.norm(Z)):
            raise ValueError("Z must be symmetric")

    def __add__(self, other: AmbientVector) -> AmbientVector:
        return AmbientVector(self.Y + other.Y, self.Z + other.Z)

    def __sub__(self, other: AmbientVector) -> AmbientVector:
        return AmbientVector(self.Y - other.Y, self.Z - other.Z)

    def __mul__(self, a: float) -> AmbientVector:
        return AmbientVector(a * self.Y, a * self.Z)

    __rmul__ = __mul__


def ambient_inner(a: AmbientVector, b: AmbientVector, alpha: float) -> float:
    return float(np.vdot(a.Y, b.Y) + alpha * np.vdot(a.Z, b.Z))


def _orth_defect(Q: np.ndarray) -> float:
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])))


def from_factors(U, Sigma, V, tol: float = EPS_ORTH) -> ManifoldPoint:
    """Validate a triplet and return it as a point with Sigma sorted descending.

    Singular values in [-tol, 0) are clamped to zero; anything more negative
    raises :class:`NegativeSingularValue`.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float).reshape(-1)
    if U.ndim != 2 or V.ndim != 2:
        raise ValueError("U and V must be matrices")
    r = Sigma.shape[0]
    if U.shape[1] != r or V.shape[1] != r:
        raise ValueError(f"inconsistent shapes U{U.shape}, Sigma({r},), V{V.shape}")
    ManifoldDims(U.shape[0], V.shape[0], r)
    for name, Q in (("U", U), ("V", V)):
        defect = _orth_defect(Q)
        if defect > tol:
            raise OrthonormalityViolation(f"||{name}^T {name} - I||_F = {defect:.3e} exceeds {tol:.1e}")
    if np.any(Sigma < -tol):
        raise NegativeSingularValue(f"negative singular value {Sigma.min():.3e}")
    Sigma = np.maximum(Sigma, 0.0)
    order = np.argsort(-Sigma, kind="stable")
    return ManifoldPoint(_frozen(U[:, order]), _frozen(Sigma[order]), _frozen(V[:, order]))


def from_dense(X, P, r: int | None = None, tol: float = EPS_ORTH) -> ManifoldPoint:
    """Factor a dense pair (X, P) with XP = 0 into a point representation.

    The rank bound is read off P (n - rank P) unless ``r`` is given, in
    which case a mismatch raises :class:`RankMismatch`. Desk scale only.
    """
    X = np.asarray(X, dtype=float)
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if X.shape[1] != n or P.shape != (n, n):
        raise ValueError(f"shape mismatch X{X.shape}, P{P.shape}")
    if np.linalg.norm(P - P.T) > tol * max(1.0, np.linalg.norm(P)):
        raise NotOnManifold("P is not symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (P + P.T))
    if np.max(np.minimum(np.abs(evals), np.abs(evals - 1.0))) > 1e3 * tol:
        raise NotOnManifold("P is not an orthogonal projector")
    rank_p = int(np.sum(evals > 0.5))
    if r is None:
        r = n - rank_p
    elif rank_p != n - r:
        raise RankMismatch(f"rank(P) = {rank_p}, expected n - r = {n - r}")
    if r < 1:
        raise RankMismatch("P has full rank; need rank(P) = n - r with r >= 1")
    xnorm = np.linalg.norm(X)
    if np.linalg.norm(X @ P) > tol * max(1.0, xnorm):
        raise NotOnManifold(f"||XP||_F = {np.linalg.norm(X @ P):.3e} exceeds tolerance")
    # Columns of W span range(I - P), the eigenvalue-0 block; eigh sorts
    # ascending so it comes first.
    W = evecs[:, :r]
    Uf, s, Ht = np.linalg.svd(X @ W, full_matrices=False)
    return from_factors(Uf, s, W @ Ht.T, tol=tol)


def to_dense(pt: ManifoldPoint) -> tuple[np.ndarray, np.ndarray]:
    X = (pt.U * pt.Sigma) @ pt.V.T
    P = np.eye(pt.V.shape[0]) - pt.V @ pt.V.T
    return X, P


def tangent_from_ambient_parts(pt: ManifoldPoint, K, Vp) -> TangentVector:
    """Build a tangent vector, projecting Vp onto range(I - V V^T)."""
    K = np.asarray(K, dtype=float)
    Vp = np.asarray(Vp, dtype=float)
    if K.shape != pt.U.shape or Vp.shape != pt.V.shape:
        raise ValueError(f"expected K{pt.U.shape} and Vp{pt.V.shape}, got {K.shape}, {Vp.shape}")
    VtVp = pt.V.T @ Vp
    return TangentVector(K, Vp - pt.V @ VtVp, drift=float(np.linalg.norm(VtVp)))


def tangent_to_ambient(pt: ManifoldPoint, t: TangentVector) -> AmbientVector:
    """Expand a tangent representation into (Xdot, Pdot). Desk scale."""
    Y = t.K @ pt.V.T + pt.USigma @ t.Vp.T
    W = t.Vp @ pt.V.T
    return AmbientVector(Y, -(W + W.T))


def zero_tangent(pt: ManifoldPoint) -> TangentVector:
    return TangentVector(np.zeros_like(pt.U), np.zeros_like(pt.V))


def random_stiefel(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    """Haar-distributed n x r matrix with orthonormal columns."""
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def random_point(dims: ManifoldDims, rng_seed=None, sigma_range=(0.0, 1e-3)) -> ManifoldPoint:
    """Sample U, V uniformly on Stiefel and Sigma uniformly in ``sigma_range``."""
    rng = as_rng(rng_seed)
    U = random_stiefel(rng, dims.m, dims.r)
    V = random_stiefel(rng, dims.n, dims.r)
    lo, hi = sigma_range
    Sigma = rng.uniform(lo, hi, size=dims.r)
    return from_factors(U, Sigma, V)


def random_tangent(pt: ManifoldPoint, rng_seed=None, alpha: float = 1.0) -> TangentVector:
    """Gaussian tangent vector at ``pt`` normalized to unit alpha-norm."""
    from .geometry import norm

    rng = as_rng(rng_seed)
    t = tangent_from_ambient_parts(pt, rng.standard_normal(pt.U.shape), rng.standard_normal(pt.V.shape))
    return t / norm(pt, t, alpha)
