"""Helmholtz splittings of edge fields and Dirichlet-Neumann fields.

Edge fields live on all edges of the grid.  The operators of the complex
only see free (non-``T``) edges; the values on ``T`` edges form a separate
trace part that is orthogonal to everything else under the lumped mass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .operators import Complex, Field, FieldError, MassWeights
from .solver import nullspace, solve_spd


class RangeCertificationError(RuntimeError):
    pass


def _cosine(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    na = np.sqrt(np.dot(w * a, a))
    nb = np.sqrt(np.dot(w * b, b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return abs(float(np.dot(w * a, b))) / (na * nb)


@dataclass
class HelmholtzSplit:
    """Result of :func:`simple_split` or :func:`refined_split`.

    ``grad_part + residual_part`` reconstructs the input.  In refined mode
    ``residual_part = harmonic_part + curl_part + trace_part``.
    """

    grad_part: Field
    potential: Field
    residual_part: Field
    harmonic_part: Field | None = None
    curl_part: Field | None = None
    curl_potential: Field | None = None
    trace_part: Field | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def refined(self) -> bool:
        return self.curl_part is not None

    def parts(self) -> dict:
        if not self.refined:
            return {"grad": self.grad_part, "residual": self.residual_part}
        return {"grad": self.grad_part, "harmonic": self.harmonic_part,
                "curl": self.curl_part, "trace": self.trace_part}


def _check_edge_field(X: Field, cx: Complex) -> np.ndarray:
    if X.kind != "edge" or len(X) != cx.index.count("edge"):
        raise FieldError(f"expected an edge field with {cx.index.count('edge')} entries, got {X.kind}/{len(X)}")
    x = X.coeffs
    if not np.all(np.isfinite(x)):
        raise FieldError("field has non-finite entries")
    return x


def gradient_projection(X: Field, cx: Complex, tol: float = 1e-12):
    """Potential ``u`` on free nodes minimising ``|X - grad u|``.

    When there are no ``T`` nodes the constant is removed so that
    ``u`` has zero mean.
    """
    x = _check_edge_field(X, cx)
    w1 = cx.masses.edge
    w0 = cx.masses.node
    free = cx.free_nodes
    G = cx.grad.matrix[:, free]
    K = G.T @ sparse.diags(w1) @ G
    b = G.T @ (w1 * x)
    kernel = None
    if cx.partition.is_empty_t:
        # rounding leaves a tiny constant component; remove it as the solver expects
        kernel = [np.ones(free.size)]
        b = b - b.mean()
    u_free = solve_spd(K, b, weights=w0[free], kernel=kernel, tol=tol)
    u = np.zeros(cx.index.count("node"))
    u[free] = u_free
    return u


def simple_split(X: Field, cx: Complex, tol: float = 1e-12) -> HelmholtzSplit:
    """Split ``X = grad u + X~`` with ``X~`` in the kernel of ``div_N``."""
    x = _check_edge_field(X, cx)
    u = gradient_projection(X, cx, tol=tol)
    g = cx.grad.matrix @ u
    r = x - g
    w1 = cx.masses.edge
    w0 = cx.masses.node
    xnorm = np.sqrt(np.dot(w1 * x, x))
    div_r = cx.div_n.matrix @ r
    diag = {
        "reconstruction": float(np.sqrt(np.dot(w1 * (g + r - x), g + r - x)) / xnorm) if xnorm else 0.0,
        "orthogonality": _cosine(g, r, w1),
        # the divergence scales like |X| / h, hence the factor h
        "div_residual": float(np.sqrt(np.dot(w0 * div_r, div_r)) * cx.h / xnorm) if xnorm else 0.0,
    }
    return HelmholtzSplit(Field("edge", g), Field("node", u), Field("edge", r), diagnostics=diag)


@dataclass
class HarmonicBasis:
    """M-orthonormal Dirichlet-Neumann fields, stored as full-length edge vectors."""

    vectors: np.ndarray
    eigenvalues: np.ndarray
    threshold: float
    warning: str | None = None

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def fields(self) -> list[Field]:
        return [Field("edge", self.vectors[:, j].copy()) for j in range(self.dimension)]

    def to_csv(self, path: str | Path) -> None:
        """Write one row per edge: index followed by one coefficient per basis field."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["edge"] + [f"h{j}" for j in range(self.dimension)])
            for i, row in enumerate(self.vectors):
                writer.writerow([i] + [repr(float(v)) for v in row])


def hodge_laplacian(cx: Complex) -> sparse.csr_matrix:
    """``curl^T M2 curl + div_N^T M0 div_N`` on the free edges."""
    free = cx.free_edges
    C = cx.curl.matrix[:, free]
    D = cx.div_n.matrix[:, free]
    A = C.T @ sparse.diags(cx.masses.face) @ C + D.T @ sparse.diags(cx.masses.node) @ D
    return sparse.csr_matrix(0.5 * (A + A.T))


def harmonic_basis(cx: Complex, tol_rank: float = 1e-8, dense_limit: int = 2500) -> HarmonicBasis:
    """Basis of ``N(curl_T) ∩ N(div_N)`` on the free edge space."""
    free = cx.free_edges
    A = hodge_laplacian(cx)
    res = nullspace(A, cx.masses.edge[free], tol_rank=tol_rank, dense_limit=dense_limit)
    vecs = np.zeros((cx.index.count("edge"), res.dimension))
    vecs[free] = res.basis
    return HarmonicBasis(vecs, res.eigenvalues, res.threshold, res.warning)


def _basis_matrix(basis) -> np.ndarray | None:
    if basis is None:
        return None
    if isinstance(basis, HarmonicBasis):
        return basis.vectors
    if isinstance(basis, np.ndarray):
        return basis
    if len(basis) == 0:
        return None
    return np.stack([b.coeffs if isinstance(b, Field) else np.asarray(b) for b in basis], axis=1)


def project_harmonic(X: Field, basis, masses: MassWeights) -> Field:
    """Remove the span of an M-orthonormal basis from ``X``."""
    B = _basis_matrix(basis)
    if B is None or B.shape[1] == 0:
        return Field(X.kind, X.coeffs.copy())
    w = masses.of(X.kind)
    x = X.coeffs - B @ (B.T @ (w * X.coeffs))
    return Field(X.kind, x)


def refined_split(X: Field, cx: Complex, basis: HarmonicBasis | None = None, tol: float = 1e-12,
                  certify_tol: float = 1e-8) -> HelmholtzSplit:
    """Split ``X`` into gradient, harmonic, rotational and trace parts.

    The rotational part is certified to lie in the range of ``curl_N`` by
    solving the least-squares problem ``min |curl_N A - Y|`` for a face
    potential ``A``; a relative misfit above ``certify_tol`` raises
    :class:`RangeCertificationError`.
    """
    basis = harmonic_basis(cx) if basis is None else basis
    simple = simple_split(X, cx, tol=tol)
    w1 = cx.masses.edge
    w2 = cx.masses.face
    r = simple.residual_part.coeffs
    t_edges = cx.partition.edge_t
    trace = np.where(t_edges, r, 0.0)
    rest = r - trace
    B = _basis_matrix(basis)
    harm = B @ (B.T @ (w1 * rest)) if B is not None and B.shape[1] else np.zeros_like(rest)
    y = rest - harm

    # potential for the rotational part: curl_N = M1^-1 C^T M2
    C = cx.curl.matrix
    K = C @ sparse.diags(1.0 / w1) @ C.T
    K = sparse.diags(w2) @ K @ sparse.diags(w2)
    rhs = w2 * (C @ y)
    ynorm = np.sqrt(np.dot(w1 * y, y))
    # a right-hand side at rounding level means y has no curl to fit
    rounding = 1e-13 * np.linalg.norm(w2 * (abs(C) @ np.abs(y)))
    if ynorm > 0 and np.linalg.norm(rhs) > rounding:
        a = solve_spd(K, rhs, tol=tol)
    else:
        a = np.zeros(cx.index.count("face"))
    fit = cx.curl_n.matrix @ a
    misfit = float(np.sqrt(np.dot(w1 * (fit - y), fit - y)) / ynorm) if ynorm else 0.0
    if misfit > certify_tol:
        raise RangeCertificationError(f"range certification failed: relative misfit {misfit:.3e}")

    xnorm = np.sqrt(np.dot(w1 * X.coeffs, X.coeffs))
    parts = [simple.grad_part.coeffs, harm, y, trace]
    total = sum(parts)
    diag = dict(simple.diagnostics)
    diag.update({
        "reconstruction": float(np.sqrt(np.dot(w1 * (total - X.coeffs), total - X.coeffs)) / xnorm) if xnorm else 0.0,
        "orthogonality": max((_cosine(parts[i], parts[j], w1) for i in range(4) for j in range(i + 1, 4)),
                             default=0.0),
        "certification": misfit,
        "harmonic_dimension": 0 if B is None else int(B.shape[1]),
    })
    return HelmholtzSplit(simple.grad_part, simple.potential, simple.residual_part,
                          harmonic_part=Field("edge", harm), curl_part=Field("edge", y),
                          curl_potential=Field("face", a), trace_part=Field("edge", trace),
                          diagnostics=diag)
