import json
import math

import numpy as np
import pytest
from scipy import sparse

from dercomplex.constants import (EstimateViolated, fp_ratio, friedrichs_poincare_constant, maxwell_constant,
                                  maxwell_ratio, verify_estimates)
from dercomplex.decompose import harmonic_basis
from dercomplex.solver import smallest_nonzero_eigen

from conftest import complex_for

N = 8


def sine_mode(n, quarter=False):
    """Smallest 1D eigenvalue of the 3-point stencil: Dirichlet-Dirichlet or Dirichlet-Neumann."""
    theta = math.pi / (4 * n) if quarter else math.pi / (2 * n)
    return 4 * n * n * math.sin(theta) ** 2


# discrete separable spectra on the n^3 cube
EXPECTED = {
    ("friedrichs_poincare", "all-T"): 1 / math.sqrt(3 * sine_mode(N)),
    ("friedrichs_poincare", "all-N"): 1 / math.sqrt(sine_mode(N)),
    ("friedrichs_poincare", "T:x-"): 1 / math.sqrt(sine_mode(N, quarter=True)),
    ("maxwell", "all-T"): 1 / math.sqrt(2 * sine_mode(N)),
    # gradients of the first Neumann mode are the smallest non-harmonic fields
    ("maxwell", "all-N"): 1 / math.sqrt(sine_mode(N)),
    ("maxwell", "T:x-"): 1 / math.sqrt(sine_mode(N, quarter=True)),
}


@pytest.mark.parametrize("rule", ["all-T", "all-N", "T:x-"])
def test_discrete_constants(rule):
    cx = complex_for("cube", N, rule)
    fp = friedrichs_poincare_constant(cx)
    mx = maxwell_constant(cx, harmonic_basis(cx))
    assert fp.constant == pytest.approx(EXPECTED[("friedrichs_poincare", rule)], rel=1e-8)
    assert mx.constant == pytest.approx(EXPECTED[("maxwell", rule)], rel=1e-8)
    assert fp.residual <= 1e-9
    assert mx.residual <= 1e-9
    assert fp.eigenvalue == pytest.approx(fp.constant ** -2)


@pytest.mark.parametrize("rule", ["all-T", "all-N", "T:x-"])
def test_estimates_hold(rule):
    cx = complex_for("cube", N, rule)
    basis = harmonic_basis(cx)
    fp = friedrichs_poincare_constant(cx)
    mx = maxwell_constant(cx, basis)
    rep = verify_estimates(cx, fp, mx, basis, trials=50, seed=1)
    assert rep.worst_fp <= 1.0
    assert rep.worst_maxwell <= 1.0
    assert rep.eigenfield_fp == pytest.approx(1.0, abs=1e-6)
    assert rep.eigenfield_maxwell == pytest.approx(1.0, abs=1e-6)


def test_torus_maxwell_deflates_harmonic_field():
    cx = complex_for("torus", 1, "all-N")
    basis = harmonic_basis(cx)
    mx = maxwell_constant(cx, basis)
    assert np.isfinite(mx.constant)
    h = basis.vectors[:, 0]
    assert abs(np.dot(cx.masses.edge * h, mx.eigenfield.coeffs)) <= 1e-8
    # the harmonic field itself has no curl and no divergence
    assert maxwell_ratio(cx, h, mx.constant) is None


def test_understated_constant_is_caught():
    cx = complex_for("cube", N, "all-T")
    basis = harmonic_basis(cx)
    fp = friedrichs_poincare_constant(cx)
    mx = maxwell_constant(cx, basis)
    fp.constant *= 0.99
    with pytest.raises(EstimateViolated, match="estimate violated"):
        verify_estimates(cx, fp, mx, basis, trials=5)


def test_constant_field_is_degenerate_without_t():
    cx = complex_for("cube", N, "all-N")
    u = np.ones(cx.index.count("node"))
    assert fp_ratio(cx, u, 1.0) is None


def test_report_serialises():
    cx = complex_for("cube", 4, "T:x-")
    rep = friedrichs_poincare_constant(cx)
    data = json.loads(rep.to_json())
    assert data["name"] == "friedrichs_poincare"
    assert data["constant"] == rep.constant
    assert "eigenfield" not in data


@pytest.mark.parametrize("res,rule", [(1, "all-T"), (2, "all-N")])
def test_torus_constants_converge(res, rule):
    # symmetric domains have clustered eigenvalues; r2 takes the iterative nullspace path
    cx = complex_for("torus", res, rule)
    basis = harmonic_basis(cx)
    fp = friedrichs_poincare_constant(cx)
    mx = maxwell_constant(cx, basis)
    assert fp.residual <= 1e-10
    assert mx.residual <= 1e-10
    rep = verify_estimates(cx, fp, mx, basis, trials=20)
    assert rep.eigenfield_maxwell == pytest.approx(1.0, abs=1e-6)


def test_triple_eigenvalue():
    # the lowest Neumann eigenvalue of the cube is triple; a block of 2 cannot separate it
    cx = complex_for("cube", N, "all-N")
    free = cx.free_nodes
    G = cx.grad.matrix[:, free]
    A = sparse.csr_matrix(G.T @ sparse.diags(cx.masses.edge) @ G)
    res = smallest_nonzero_eigen(A, cx.masses.node[free], deflation=[np.ones(free.size)], block=2)
    assert res.value == pytest.approx(sine_mode(N), rel=1e-9)
    assert res.residual <= 1e-10
