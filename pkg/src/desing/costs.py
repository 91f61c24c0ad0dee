"""Cost models: masked matrix completion and a dense quadratic, plus the
synthetic completion problem generator and its on-disk container.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .calculus import CostModel
from .manifold import ManifoldDims, as_rng, random_stiefel

FORMAT_VERSION = 1


class OversampleTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseMask:
    """Observed index pairs, sorted row-major and deduplicated."""

    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def from_pairs(cls, rows, cols, shape) -> SparseMask:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        m, n = shape
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise IndexError("mask index out of range")
        lin = np.unique(rows * n + cols)
        r, c = np.divmod(lin, n)
        r.setflags(write=False)
        c.setflags(write=False)
        return cls(r, c)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)


@dataclass(frozen=True)
class SingularValueSpec:
    """How the target's singular values are drawn: ``uniform`` on [lo, hi]
    or ``expdecay`` with sigma_i = rho^(i - 1)."""

    kind: str
    params: tuple

    @classmethod
    def parse(cls, text: str) -> SingularValueSpec:
        kind, _, rest = str(text).partition(":")
        kind = kind.strip().lower()
        vals = tuple(float(v) for v in rest.split(",") if v.strip())
        if kind == "uniform" and len(vals) == 2 and 0 <= vals[0] <= vals[1]:
            return cls("uniform", vals)
        if kind == "expdecay" and len(vals) == 1 and 0 < vals[0] <= 1:
            return cls("expdecay", vals)
        raise ValueError(f"bad singular value spec {text!r}; use uniform:lo,hi or expdecay:rho")

    def __str__(self) -> str:
        return f"{self.kind}:" + ",".join(repr(v) for v in self.params)

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = self.params
            return np.sort(rng.uniform(lo, hi, size=k))[::-1].copy()
        (rho,) = self.params
        return rho ** np.arange(k, dtype=float)


def masked_entries(U, s, V, rows, cols) -> np.ndarray:
    """Entries (U diag(s) V^T)[rows, cols] in O(nnz r)."""
    return np.einsum("ij,ij->i", (U * s)[rows], V[cols])


class CompletionCost(CostModel):
    """f(X) = 1/2 ||(X - A) o Omega||_F^2 on a sparse mask.

    The residual (X - A) o Omega lives in a CSR matrix whose sparsity
    pattern is fixed at construction. The last residual is cached by the
    identity of the factor arrays, which are never mutated in place.
    """

    def __init__(self, shape, mask: SparseMask, observed):
        self.shape = tuple(shape)
        self.mask = mask
        self.observed = np.asarray(observed, dtype=float)
        if self.observed.shape != (mask.nnz,):
            raise ValueError("observed values must match the mask size")
        m, _ = self.shape
        self._indptr = np.searchsorted(mask.rows, np.arange(m + 1)).astype(np.int64)
        self._indices = mask.cols.astype(np.int32 if self.shape[1] < 2**31 else np.int64)
        self._cache_key = None
        self._cache = None

    def _csr(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self._indices, self._indptr), shape=self.shape)

    def residual(self, U, s, V) -> np.ndarray:
        key = self._cache_key
        if key is not None and key[0] is U and key[1] is s and key[2] is V:
            return self._cache
        res = masked_entries(U, s, V, self.mask.rows, self.mask.cols) - self.observed
        self._cache_key = (U, s, V)
        self._cache = res
        return res

    def value(self, U, s, V) -> float:
        res = self.residual(U, s, V)
        return 0.5 * float(np.dot(res, res))

    def grad_right(self, U, s, V, A):
        return self._csr(self.residual(U, s, V)) @ A

    def grad_left(self, U, s, V, B):
        return self._csr(self.residual(U, s, V)).T @ B

    def _hess_csr(self, XL, XR):
        return self._csr(np.einsum("ij,ij->i", XL[self.mask.rows], XR[self.mask.cols]))

    def hess_right(self, U, s, V, XL, XR, A):
        return self._hess_csr(XL, XR) @ A

    def hess_left(self, U, s, V, XL, XR, B):
        return self._hess_csr(XL, XR).T @ B

    def hess_both(self, U, s, V, XL, XR, A, B):
        H = self._hess_csr(XL, XR)
        return H @ A, H.T @ B

    def hess_op_norm(self, U, s, V) -> float:
        return 1.0 if self.mask.nnz else 0.0

    def dense_gradient(self, U, s, V):
        return self._csr(self.residual(U, s, V)).toarray()

    def dense_hessian(self, U, s, V, Xdot):
        out = np.zeros(self.shape)
        out[self.mask.rows, self.mask.cols] = Xdot[self.mask.rows, self.mask.cols]
        return out


class QuadraticCost(CostModel):
    """f(X) = 1/2 ||X - A||_F^2 with a dense target A."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self.shape = self.A.shape

    def _grad(self, U, s, V):
        return (U * s) @ V.T - self.A

    def value(self, U, s, V) -> float:
        return 0.5 * float(np.linalg.norm(self._grad(U, s, V)) ** 2)

    def grad_right(self, U, s, V, A):
        return (U * s) @ (V.T @ A) - self.A @ A

    def grad_left(self, U, s, V, B):
        return V @ ((U * s).T @ B) - self.A.T @ B

    def hess_right(self, U, s, V, XL, XR, A):
        return XL @ (XR.T @ A)

    def hess_left(self, U, s, V, XL, XR, B):
        return XR @ (XL.T @ B)

    def hess_op_norm(self, U, s, V) -> float:
        return 1.0

    def dense_gradient(self, U, s, V):
        return self._grad(U, s, V)

    def dense_hessian(self, U, s, V, Xdot):
        return np.array(Xdot, dtype=float)


@dataclass(frozen=True, eq=False)
class CompletionProblem:
    dims: ManifoldDims
    mask: SparseMask
    observed: np.ndarray
    r_star: int | None = None
    sv_spec: str | None = None
    seed: int | None = None
    sigma_a: np.ndarray | None = field(default=None, repr=False)
    factors: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.observed.shape != (self.mask.nnz,):
            raise ValueError("observed.len must equal mask.nnz")

    @property
    def shape(self):
        return (self.dims.m, self.dims.n)

    def cost(self) -> CompletionCost:
        return CompletionCost(self.shape, self.mask, self.observed)


def _as_cost(problem) -> CompletionCost:
    return problem if isinstance(problem, CompletionCost) else problem.cost()


def completion_value(problem, U, Sigma, V) -> float:
    """1/2 sum over the mask of (x_ij - a_ij)^2, touching only masked entries."""
    return _as_cost(problem).value(U, Sigma, V)


def completion_grad_products(problem, U, Sigma, V, A, B):
    """(R A, R^T B) with R = (X - A_target) o Omega."""
    cost = _as_cost(problem)
    return cost.grad_right(U, Sigma, V, A), cost.grad_left(U, Sigma, V, B)


def completion_hess_products(problem, U, Sigma, V, XL, XR, A, B):
    """(H A, H^T B) with H = (XL XR^T) o Omega."""
    return _as_cost(problem).hess_both(U, Sigma, V, XL, XR, A, B)


def target_nnz(m: int, n: int, r: int, oversampling: float) -> int:
    return int(round(oversampling * (m + n - r) * r))


def sample_mask(rng: np.random.Generator, m: int, n: int, nnz: int) -> SparseMask:
    """nnz distinct entries of an m x n grid, uniformly without replacement."""
    lin = np.sort(rng.choice(m * n, size=nnz, replace=False))
    rows, cols = np.divmod(lin, n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return SparseMask(rows, cols)


def generate_problem(m: int, n: int, r_star: int, r: int | None = None, oversampling: float = 5.0,
                     sv_spec="uniform:0.5,1", seed=0, keep_factors: bool = False) -> CompletionProblem:
    """Synthetic completion instance A = U_A Sigma_A V_A^T observed on a random mask.

    The mask size is round(oversampling (m + n - r) r) with r the
    optimization rank (defaulting to ``r_star``).
    """
    r = r_star if r is None else r
    dims = ManifoldDims(m, n, r)
    if not 1 <= r_star <= min(m, n):
        raise ValueError(f"target rank r_star={r_star} out of range")
    nnz = target_nnz(m, n, r, oversampling)
    if nnz > m * n:
        raise OversampleTooLarge(f"{nnz} observations requested but the matrix has only {m * n} entries")
    spec = sv_spec if isinstance(sv_spec, SingularValueSpec) else SingularValueSpec.parse(sv_spec)
    rng = as_rng(seed)
    UA = random_stiefel(rng, m, r_star)
    VA = random_stiefel(rng, n, r_star)
    sigma_a = spec.sample(rng, r_star)
    mask = sample_mask(rng, m, n, nnz)
    observed = masked_entries(UA, sigma_a, VA, mask.rows, mask.cols)
    return CompletionProblem(
        dims=dims, mask=mask, observed=observed, r_star=r_star, sv_spec=str(spec),
        seed=seed if isinstance(seed, (int, np.integer)) else None, sigma_a=sigma_a,
        factors=(UA, VA) if keep_factors else None,
    )


def save_problem(problem: CompletionProblem, path) -> None:
    """Write a problem as an uncompressed ``.npz`` container.

    Arrays: ``mask`` (nnz x 2, uint64, row-major sorted), ``observed``
    (float64), ``sigma_a`` (float64, may be empty) and ``meta`` (a JSON
    string with format_version, m, n, r, r_star, seed, sv_spec).
    """
    meta = {
        "format_version": FORMAT_VERSION,
        "m": problem.dims.m,
        "n": problem.dims.n,
        "r": problem.dims.r,
        "r_star": problem.r_star,
        "seed": None if problem.seed is None else int(problem.seed),
        "sv_spec": problem.sv_spec,
    }
    arrays = {
        "mask": np.stack([problem.mask.rows, problem.mask.cols], axis=1).astype(np.uint64),
        "observed": np.asarray(problem.observed, dtype=np.float64),
        "sigma_a": np.asarray([] if problem.sigma_a is None else problem.sigma_a, dtype=np.float64),
        "meta": np.array(json.dumps(meta, sort_keys=True)),
    }
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_problem(path) -> CompletionProblem:
    with np.load(os.fspath(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported problem format {meta.get('format_version')!r}")
        idx = data["mask"].astype(np.int64)
        observed = np.array(data["observed"], dtype=float)
        sigma_a = np.array(data["sigma_a"], dtype=float)
    rows = idx[:, 0].copy()
    cols = idx[:, 1].copy()
    rows.setflags(write=False)
    cols.setflags(write=False)
    return CompletionProblem(
        dims=ManifoldDims(meta["m"], meta["n"], meta["r"]),
        mask=SparseMask(rows, cols),
        observed=observed,
        r_star=meta["r_star"],
        sv_spec=meta["sv_spec"],
        seed=meta["seed"],
        sigma_a=sigma_a if sigma_a.size else None,
    )
