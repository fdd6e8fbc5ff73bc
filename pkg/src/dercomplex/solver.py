"""Small sparse linear-algebra toolkit: PCG, deflated inverse iteration, kernels.

All routines take a symmetric positive semidefinite ``A`` (scipy sparse or
dense) and, where relevant, the diagonal of a positive mass matrix ``M``
given as a 1-D weight vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse


class SolverError(RuntimeError):
    """Base class for solver failures."""


class NoConvergence(SolverError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"no convergence: {message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class InconsistentRHS(SolverError):
    pass


class DegenerateDeflation(SolverError):
    pass


class NotSymmetric(ValueError):
    pass


def check_symmetric(A, rtol: float = 1e-14):
    """Return ``A`` as CSR after checking ``|A - A^T| <= rtol * max|A|``."""
    A = sparse.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"matrix is not square: {A.shape}")
    scale = abs(A).max() if A.nnz else 0.0
    gap = abs(A - A.T).max() if A.nnz else 0.0
    if gap > rtol * scale:
        raise NotSymmetric(f"asymmetry {gap:.3e} exceeds {rtol:g} relative")
    return A


def _as_basis(basis, n: int) -> np.ndarray:
    if basis is None:
        return np.zeros((n, 0))
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        return basis.reshape(n, -1)
    cols = [np.asarray(b, dtype=float).ravel() for b in basis]
    return np.stack(cols, axis=1) if cols else np.zeros((n, 0))


def m_orthonormalize(basis, weights: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt (twice) in the ``weights`` inner product."""
    w = np.asarray(weights, dtype=float)
    V = _as_basis(basis, len(w)).astype(float, copy=True)
    n, k = V.shape
    if k > n:
        raise DegenerateDeflation("degenerate deflation: more vectors than unknowns")
    for j in range(k):
        v = V[:, j]
        size = np.sqrt(np.dot(w * v, v))
        for _ in range(2):
            for i in range(j):
                v -= np.dot(w * V[:, i], v) * V[:, i]
        nv = np.sqrt(np.dot(w * v, v))
        if not np.isfinite(nv) or nv <= rtol * max(size, np.finfo(float).tiny):
            raise DegenerateDeflation(f"degenerate deflation: vector {j} is dependent")
        V[:, j] = v / nv
    return V


def _project_out(x: np.ndarray, Q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Remove the ``w``-orthogonal projection of ``x`` onto the orthonormal ``Q``."""
    if Q.shape[1] == 0:
        return x
    wx = w if x.ndim == 1 else w[:, None]
    for _ in range(2):
        x = x - Q @ (Q.T @ (wx * x))
    return x


def solve_spd(A, b, weights=None, kernel=None, tol: float = 1e-10, maxit: int | None = None,
              x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for ``A x = b``.

    ``kernel`` optionally spans the null space of a singular ``A``; ``b``
    must then be orthogonal to it (relative 1e-10) and the returned ``x`` is
    made orthogonal to it in the ``weights`` inner product (Euclidean if no
    weights are given).  Raises :class:`NoConvergence` when the relative
    residual ``|b - A x| / |b|`` does not reach ``tol`` within ``maxit``
    and :class:`NotSymmetric` when ``A`` is not symmetric to 1e-12.
    """
    A = check_symmetric(A, rtol=1e-12)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    K = _as_basis(kernel, n)
    bnorm = np.linalg.norm(b)
    if K.shape[1]:
        Ke = np.linalg.qr(K)[0]
        leak = np.linalg.norm(Ke.T @ b)
        if leak > 1e-10 * max(bnorm, np.finfo(float).tiny):
            raise InconsistentRHS(f"inconsistent right-hand side: kernel component {leak / bnorm:.3e} relative")
        b = b - Ke @ (Ke.T @ b)
        Km = m_orthonormalize(K, w)
    if bnorm == 0.0:
        return np.zeros(n)
    maxit = maxit or max(10 * n, 1000)
    diag = A.diagonal() if sparse.issparse(A) else np.diag(A).copy()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = np.dot(r, z)
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        if it >= maxit:
            raise NoConvergence("iteration limit", res, it)
        Ap = A @ p
        pAp = np.dot(p, Ap)
        if not pAp > 0:
            raise NoConvergence("operator not positive on the Krylov space", res, it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if it % 50 == 0:  # guard against drift of the recursive residual
            r = b - A @ x
        res = np.linalg.norm(r) / bnorm
        z = inv_diag * r
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = np.linalg.norm(b - A @ x) / bnorm
    if true_res > 10 * tol:
        raise NoConvergence("true residual above tolerance", true_res, it)
    if K.shape[1]:
        x = _project_out(x, Km, w)
    return x


@dataclass
class EigResult:
    """Eigenpair of ``A v = value M v`` with ``v`` M-normalised.

    ``residual`` is ``|A v - value M v|_{M^-1} / (value |v|_M)``, recomputed
    on exit.
    """

    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def eig_residual(A, w: np.ndarray, v: np.ndarray, lam: float) -> float:
    r = A @ v - lam * (w * v)
    num = np.sqrt(np.dot(r / w, r))
    den = np.sqrt(np.dot(w * v, v)) * max(abs(lam), np.finfo(float).tiny)
    return float(num / den)


def _m_orthonormal_columns(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Householder QR in the M^(1/2)-scaled space; tolerant of nearly dependent columns
    r = np.sqrt(w)
    q, _ = np.linalg.qr(r[:, None] * X)
    return q / r[:, None]


def smallest_nonzero_eigen(A, weights, deflation=None, tol: float = 1e-10, maxit: int = 1000,
                           seed: int = 0, shift: float = 0.0, inner_tol: float | None = None,
                           start: np.ndarray | None = None, block: int = 4) -> EigResult:
    """Smallest eigenpair of ``A v = lam M v`` with ``v`` M-orthogonal to ``deflation``.

    Block inverse iteration on ``A + shift M`` with Rayleigh-Ritz: each step
    solves for ``block`` vectors with CG, re-projects against the deflation
    basis and keeps the Ritz vectors.  The lowest pair converges like
    ``lam_1 / lam_{block+1}``, so clustered or repeated eigenvalues cost no
    more than separated ones.  ``deflation`` must contain the kernel of
    ``A`` when ``shift == 0``.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    Q = m_orthonormalize(deflation, w) if deflation is not None else np.zeros((n, 0))
    if Q.shape[1] >= n:
        raise DegenerateDeflation("degenerate deflation: nothing left to iterate on")
    As = A + shift * sparse.diags(w) if shift else A
    kernel = Q if Q.shape[1] else None
    p = max(1, min(block, n - Q.shape[1]))
    V = np.random.default_rng(seed).standard_normal((n, p))
    if start is not None:
        V[:, 0] = start
    V = _project_out(V, Q, w)
    if not np.sqrt(np.dot(w * V[:, 0], V[:, 0])) > 0:
        raise DegenerateDeflation("degenerate deflation: start vector lies in the deflated span")
    V = _m_orthonormal_columns(V, w)
    theta = np.einsum("ij,ij->j", V, A @ V)
    inner_tol = inner_tol or max(min(1e-2 * tol, 1e-10), 1e-13)
    res = np.inf
    lam, v = float(theta[0]), V[:, 0]
    for it in range(1, maxit + 1):
        X = np.empty_like(V)
        for j in range(p):
            X[:, j] = solve_spd(As, w * V[:, j], weights=w, kernel=kernel, tol=inner_tol,
                                x0=V[:, j] / max(theta[j] + shift, np.finfo(float).tiny))
        X = _m_orthonormal_columns(_project_out(X, Q, w), w)
        H = X.T @ (A @ X)
        theta, Y = np.linalg.eigh(0.5 * (H + H.T))
        V = X @ Y
        lam, v = float(theta[0]), V[:, 0]
        v = v / np.sqrt(np.dot(w * v, v))
        res = eig_residual(A, w, v, lam)
        if res <= tol:
            return EigResult(value=lam, vector=v, residual=res, iterations=it)
    raise NoConvergence("inverse iteration", res, maxit)


@dataclass
class NullspaceResult:
    basis: np.ndarray
    eigenvalues: np.ndarray
    lambda_max: float
    threshold: float
    method: str
    warning: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]


def _lambda_max(A, w: np.ndarray) -> float:
    from scipy.sparse.linalg import eigsh

    s = 1.0 / np.sqrt(w)
    B = sparse.diags(s) @ sparse.csr_matrix(A) @ sparse.diags(s)
    if B.shape[0] < 3:
        return float(np.linalg.eigvalsh(B.toarray()).max())
    v0 = np.ones(B.shape[0])
    return float(eigsh(B, k=1, which="LA", return_eigenvectors=False, tol=1e-6, v0=v0)[0])


def nullspace(A, weights, tol_rank: float = 1e-8, dense_limit: int = 2500, seed: int = 0,
              max_dim: int = 64) -> NullspaceResult:
    """M-orthonormal basis of the numerical kernel of ``A`` (generalised by ``M``).

    Eigenvalues below ``tol_rank * lambda_max`` count as zero.  A warning
    is attached when an eigenvalue sits within a factor 10 of the threshold.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if n == 0:
        return NullspaceResult(np.zeros((0, 0)), np.zeros(0), 0.0, 0.0, "empty")
    if n <= dense_limit:
        s = 1.0 / np.sqrt(w)
        Ad = A.toarray() if sparse.issparse(A) else np.asarray(A, dtype=float)
        B = s[:, None] * Ad * s[None, :]
        lam, Y = scipy.linalg.eigh(0.5 * (B + B.T))
        lmax = max(float(lam[-1]), 0.0)
        thr = tol_rank * lmax
        sel = lam < thr
        basis = s[:, None] * Y[:, sel]
        near = (lam >= thr / 10) & (lam <= thr * 10)
        warning = None
        if near.any():
            warning = f"rank gap warning: eigenvalue {lam[near][0]:.3e} near threshold {thr:.3e}"
            warnings.warn(warning, RuntimeWarning, stacklevel=2)
        return NullspaceResult(basis, lam[: sel.sum() + 3], lmax, thr, "dense", warning)

    from scipy.sparse.linalg import splu

    lmax = _lambda_max(A, w)
    thr = tol_rank * lmax
    # the shifted operator has condition ~ 1/tol_rank, out of reach for CG
    lu = splu(sparse.csc_matrix(A + thr * sparse.diags(w)))
    found: list[np.ndarray] = []
    values: list[float] = []
    warning = None
    while len(found) < max_dim:
        Q = np.stack(found, axis=1) if found else None
        r = _probe_smallest(A, w, Q, lu, shift=thr, seed=seed + len(found))
        values.append(r.value)
        if r.value < thr:
            found.append(r.vector)
            continue
        if r.value <= 10 * thr:
            warning = f"rank gap warning: eigenvalue {r.value:.3e} near threshold {thr:.3e}"
            warnings.warn(warning, RuntimeWarning, stacklevel=2)
        break
    basis = np.zeros((n, 0))
    if found:
        # the probes stop early; a few block sweeps push the rest out of the kernel basis
        basis = _m_orthonormal_columns(np.stack(found, axis=1), w)
        for _ in range(3):
            basis = _m_orthonormal_columns(lu.solve(w[:, None] * basis), w)
    return NullspaceResult(basis, np.array(values), lmax, thr, "inverse-iteration", warning)


def _probe_smallest(A, w, Q, lu, shift: float, seed: int, maxit: int = 60, rtol: float = 1e-4) -> EigResult:
    """Shifted inverse iteration until the Rayleigh quotient settles.

    Kernel directions grow by ``(lam_1 + shift) / shift`` per step, so they
    separate within a few steps; a non-kernel value only has to be resolved
    well enough to compare with the threshold.
    """
    Qm = m_orthonormalize(Q, w) if Q is not None else np.zeros((len(w), 0))
    v = _project_out(np.random.default_rng(seed).standard_normal(len(w)), Qm, w)
    v /= np.sqrt(np.dot(w * v, v))
    lam = prev = np.inf
    it = 0
    for it in range(1, maxit + 1):
        x = _project_out(lu.solve(w * v), Qm, w)
        v = x / np.sqrt(np.dot(w * x, x))
        lam = float(np.dot(v, A @ v))
        if abs(lam - prev) <= rtol * max(abs(lam), shift):
            break
        prev = lam
    return EigResult(lam, v, eig_residual(A, w, v, lam), it)
