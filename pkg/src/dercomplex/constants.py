"""Friedrichs/Poincaré and Maxwell constants of a discrete complex.

Both constants are ``1/sqrt(lambda)`` for the smallest eigenvalue of a
generalised symmetric eigenproblem on the free entities:

* ``c_fp``: ``G^T M1 G u = lambda M0 u`` on free nodes, constants deflated
  when no face is tagged ``T``;
* ``c_m``: ``(C^T M2 C + D^T M0 D) E = lambda M1 E`` on free edges with
  ``D = div_N``, Dirichlet-Neumann fields deflated.

The quadratic form ``|E|^2 <= c_m^2 (|curl E|^2 + |div E|^2)`` is what the
eigenvalue certifies; the sum form ``|E| <= c_m (|curl E| + |div E|)``
follows because ``a + b >= sqrt(a^2 + b^2)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .decompose import HarmonicBasis, harmonic_basis, hodge_laplacian
from .operators import Complex, Field
from .solver import smallest_nonzero_eigen


class EstimateViolated(AssertionError):
    pass


@dataclass
class SpectrumReport:
    name: str
    constant: float
    eigenvalue: float
    eigenfield: Field
    residual: float
    iterations: int
    grid: dict = field(default_factory=dict)
    partition: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "constant": self.constant,
            "eigenvalue": self.eigenvalue,
            "residual": self.residual,
            "iterations": self.iterations,
            "grid": self.grid,
            "partition": self.partition,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _grid_meta(cx: Complex) -> dict:
    idx = cx.index
    return {"shape": list(idx.domain.shape), "h": idx.h, "cells": int(idx.count("cell")),
            "name": idx.domain.name}


def _partition_meta(cx: Complex) -> dict:
    return {"rule": str(cx.partition.rule), **cx.partition.summary()}


def friedrichs_poincare_constant(cx: Complex, tol: float = 1e-10, seed: int = 0) -> SpectrumReport:
    """Smallest positive eigenvalue of the mixed-condition node Laplacian."""
    free = cx.free_nodes
    w0 = cx.masses.node[free]
    G = cx.grad.matrix[:, free]
    A = sparse.csr_matrix(G.T @ sparse.diags(cx.masses.edge) @ G)
    deflation = [np.ones(free.size)] if cx.partition.is_empty_t else None
    res = smallest_nonzero_eigen(A, w0, deflation=deflation, tol=tol, seed=seed)
    u = np.zeros(cx.index.count("node"))
    u[free] = res.vector
    return SpectrumReport("friedrichs_poincare", 1.0 / np.sqrt(res.value), res.value, Field("node", u),
                          res.residual, res.iterations, _grid_meta(cx), _partition_meta(cx))


def maxwell_constant(cx: Complex, basis: HarmonicBasis | None = None, tol: float = 1e-10,
                     seed: int = 0) -> SpectrumReport:
    """Smallest eigenvalue of the edge Hodge Laplacian orthogonal to the harmonic fields."""
    basis = harmonic_basis(cx) if basis is None else basis
    free = cx.free_edges
    w1 = cx.masses.edge[free]
    A = hodge_laplacian(cx)
    deflation = basis.vectors[free] if basis.dimension else None
    res = smallest_nonzero_eigen(A, w1, deflation=deflation, tol=tol, seed=seed)
    E = np.zeros(cx.index.count("edge"))
    E[free] = res.vector
    return SpectrumReport("maxwell", 1.0 / np.sqrt(res.value), res.value, Field("edge", E),
                          res.residual, res.iterations, _grid_meta(cx), _partition_meta(cx))


def _wnorm(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(np.dot(w * x, x)))


def _rounding(A, x: np.ndarray, w: np.ndarray) -> float:
    # size of the rounding error made when applying A to x
    return 1e-12 * _wnorm(abs(A) @ np.abs(x), w)


def fp_ratio(cx: Complex, u: np.ndarray, c_fp: float) -> float | None:
    """``|u| / (c_fp |grad u|)``, or ``None`` when ``grad u`` is at rounding level."""
    G = cx.grad.matrix
    gnorm = _wnorm(G @ u, cx.masses.edge)
    num = _wnorm(u, cx.masses.node)
    if num == 0.0 or gnorm <= _rounding(G, u, cx.masses.edge):
        return None
    return num / (c_fp * gnorm)


def maxwell_ratio(cx: Complex, E: np.ndarray, c_m: float) -> float | None:
    """``|E| / (c_m sqrt(|curl E|^2 + |div_N E|^2))``, or ``None`` when both are at rounding level."""
    C, D = cx.curl.matrix, cx.div_n.matrix
    cn = _wnorm(C @ E, cx.masses.face)
    dn = _wnorm(D @ E, cx.masses.node)
    num = _wnorm(E, cx.masses.edge)
    floor = np.hypot(_rounding(C, E, cx.masses.face), _rounding(D, E, cx.masses.node))
    den = np.hypot(cn, dn)
    if num == 0.0 or den <= floor:
        return None
    return num / (c_m * den)


@dataclass
class EstimateReport:
    trials: int
    degenerate: int
    worst_fp: float
    worst_maxwell: float
    eigenfield_fp: float
    eigenfield_maxwell: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_estimates(cx: Complex, fp: SpectrumReport, mx: SpectrumReport, basis: HarmonicBasis,
                     trials: int = 200, seed: int = 0, slack: float = 1e-8,
                     extra_fields: list | None = None) -> EstimateReport:
    """Check both estimates on random admissible fields and on the eigenfields.

    Node fields are made mean-free when no face is ``T``; edge fields are
    projected onto the orthogonal complement of the harmonic fields.  Any
    ratio above ``1 + slack`` raises :class:`EstimateViolated`.
    """
    rng = np.random.default_rng(seed)
    w0 = cx.masses.node
    w1 = cx.masses.edge
    B = basis.vectors
    worst_fp = worst_mx = 0.0
    degenerate = 0
    candidates = [(rng.standard_normal(len(w0)), rng.standard_normal(len(w1))) for _ in range(trials)]
    for u, E in candidates + list(extra_fields or []):
        u = np.where(cx.partition.node_t, 0.0, u)
        if cx.partition.is_empty_t:
            u = u - np.dot(w0, u) / w0.sum()
        E = np.where(cx.partition.edge_t, 0.0, E)
        if B.shape[1]:
            E = E - B @ (B.T @ (w1 * E))
        rf = fp_ratio(cx, u, fp.constant)
        rm = maxwell_ratio(cx, E, mx.constant)
        if rf is None or rm is None:
            degenerate += 1
        worst_fp = max(worst_fp, rf or 0.0)
        worst_mx = max(worst_mx, rm or 0.0)
    eig_fp = fp_ratio(cx, fp.eigenfield.coeffs, fp.constant)
    eig_mx = maxwell_ratio(cx, mx.eigenfield.coeffs, mx.constant)
    report = EstimateReport(trials, degenerate, worst_fp, worst_mx, eig_fp, eig_mx)
    for label, value in (("Friedrichs/Poincaré", max(worst_fp, eig_fp or 0.0)),
                         ("Maxwell", max(worst_mx, eig_mx or 0.0))):
        if value > 1.0 + slack:
            raise EstimateViolated(f"estimate violated: {label} ratio {value:.12f}")
    return report
