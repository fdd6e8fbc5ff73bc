import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dercomplex.decompose import (HarmonicBasis, RangeCertificationError, harmonic_basis, hodge_laplacian,
                                  project_harmonic, refined_split, simple_split)
from dercomplex.operators import Field, FieldError, sample_field

from conftest import PARTITIONS, complex_for

# Dirichlet-Neumann dimensions: boundary components count for all-T,
# handles for all-N.
DIMENSIONS = [("cube", 4, "all-T", 0), ("cube", 4, "all-N", 0), ("cube", 4, "T:x-", 0),
              ("cavity", 1, "all-T", 1), ("cavity", 1, "all-N", 0), ("cavity", 1, "T:x-", 0),
              ("torus", 1, "all-T", 0), ("torus", 1, "all-N", 1), ("torus", 1, "T:x-", 1)]


@pytest.mark.parametrize("name,res,rule,dim", DIMENSIONS)
def test_harmonic_dimension(name, res, rule, dim):
    cx = complex_for(name, res, rule)
    basis = harmonic_basis(cx)
    assert basis.dimension == dim
    if dim:
        B = basis.vectors
        np.testing.assert_allclose(B.T @ (cx.masses.edge[:, None] * B), np.eye(dim), atol=1e-10)
        assert np.abs(cx.curl.matrix @ B).max() <= 1e-8
        assert np.abs(cx.div_n.matrix @ B).max() <= 1e-8
        assert not B[cx.partition.edge_t].any()


@pytest.mark.parametrize("name,rule", [("cavity", "all-T"), ("torus", "all-N")])
def test_harmonic_dimension_stable(name, rule):
    assert harmonic_basis(complex_for(name, 2, rule)).dimension == 1


def test_iterative_nullspace_matches_dense():
    cx = complex_for("torus", 1, "all-N")
    dense = harmonic_basis(cx)
    sparse_path = harmonic_basis(cx, dense_limit=10)
    assert sparse_path.dimension == dense.dimension == 1
    w = cx.masses.edge
    overlap = abs(dense.vectors[:, 0] @ (w * sparse_path.vectors[:, 0]))
    assert overlap == pytest.approx(1.0, abs=1e-6)


def test_hodge_laplacian_symmetric():
    A = hodge_laplacian(complex_for("cube", 4, "T:x-"))
    assert abs(A - A.T).max() == 0


def test_gradient_input_has_no_residual():
    cx = complex_for("cube", 4, "all-N")
    u = sample_field(lambda p: np.sin(p[:, 0]) * p[:, 1] + p[:, 2] ** 2, cx.index, "node")
    split = simple_split(cx.grad(u), cx)
    assert cx.norm(split.residual_part) <= 1e-10 * cx.norm(cx.grad(u))


def test_rotational_input_has_no_gradient():
    cx = complex_for("cube", 4, "all-T")
    rng = np.random.default_rng(0)
    y = cx.curl_n(Field("face", rng.standard_normal(cx.index.count("face"))))
    split = refined_split(y, cx)
    assert cx.norm(split.grad_part) <= 1e-10 * cx.norm(y)
    assert cx.norm(split.curl_part - y) <= 1e-10 * cx.norm(y)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["cube", "cavity", "torus"]), st.sampled_from(PARTITIONS))
def test_refined_split_properties(seed, name, rule):
    cx = complex_for(name, {"cube": 4, "cavity": 1, "torus": 1}[name], rule)
    rng = np.random.default_rng(seed)
    X = Field("edge", rng.standard_normal(cx.index.count("edge")))
    split = refined_split(X, cx, harmonic_basis(cx))
    d = split.diagnostics
    assert d["reconstruction"] <= 1e-10
    assert d["orthogonality"] <= 1e-10
    assert d["div_residual"] <= 1e-8
    assert d["certification"] <= 1e-8
    total = sum(p.coeffs for p in split.parts().values())
    np.testing.assert_allclose(total, X.coeffs, atol=1e-10)
    # the curl of the rotational part carries the whole curl of X
    fx = cx.admissible(X)
    assert cx.norm(cx.curl(split.curl_part) - cx.curl(fx)) <= 1e-8 * max(cx.norm(cx.curl(fx)), 1.0)


def test_trace_part_lives_on_t_edges():
    cx = complex_for("cube", 4, "T:x-")
    X = Field("edge", np.random.default_rng(5).standard_normal(cx.index.count("edge")))
    split = refined_split(X, cx)
    assert not split.trace_part.coeffs[~cx.partition.edge_t].any()
    assert split.refined
    assert set(split.parts()) == {"grad", "harmonic", "curl", "trace"}


def test_mean_zero_potential_without_t():
    cx = complex_for("torus", 1, "all-N")
    X = Field("edge", np.random.default_rng(2).standard_normal(cx.index.count("edge")))
    u = simple_split(X, cx).potential.coeffs
    assert abs(np.dot(cx.masses.node, u)) <= 1e-12


def test_missing_harmonic_basis_fails_certification():
    cx = complex_for("cavity", 1, "all-T")
    basis = harmonic_basis(cx)
    empty = HarmonicBasis(np.zeros((cx.index.count("edge"), 0)), np.zeros(0), basis.threshold)
    with pytest.raises(RangeCertificationError, match="range certification failed"):
        refined_split(basis.fields()[0], cx, empty)


def test_project_harmonic():
    cx = complex_for("torus", 1, "all-N")
    basis = harmonic_basis(cx)
    X = Field("edge", np.random.default_rng(4).standard_normal(cx.index.count("edge")))
    P = project_harmonic(X, basis, cx.masses)
    assert abs(cx.inner(P, basis.fields()[0])) <= 1e-12 * cx.norm(X)


def test_bad_input_rejected():
    cx = complex_for("cube", 4, "all-N")
    with pytest.raises(FieldError):
        simple_split(Field("node", np.zeros(cx.index.count("node"))), cx)
    bad = np.zeros(cx.index.count("edge"))
    bad[0] = np.inf
    with pytest.raises(FieldError):
        simple_split(Field("edge", bad), cx)


def test_basis_csv(tmp_path):
    basis = harmonic_basis(complex_for("torus", 1, "all-N"))
    path = tmp_path / "basis.csv"
    basis.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["edge", "h0"]
    values = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_array_equal(values, basis.vectors[:, 0])
