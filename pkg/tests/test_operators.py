import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dercomplex.grid import tag_boundary
from dercomplex.operators import (Field, FieldError, InconsistentInputs, InvalidSample, adjoint_mismatch,
                                  adjoint_op, assemble, check_complex_property,
                                  check_integration_by_parts, gradient_op, sample_field)

from conftest import FIXTURES, PARTITIONS, complex_for, index_for


def test_exact_sequence(fixture_complex):
    cx = fixture_complex
    assert check_complex_property(cx.grad, cx.curl, cx.div) == {"curl_grad": 0.0, "div_curl": 0.0}
    # the dual ladder is a complex as well
    assert abs(cx.div_n.matrix @ cx.curl_n.matrix).max() == 0
    assert abs(cx.curl_n.matrix @ cx.grad_n.matrix).max() == 0


def test_adjoint_identities(fixture_complex):
    gaps = adjoint_mismatch(fixture_complex)
    assert len(gaps) == 3
    assert max(gaps.values()) <= 1e-14


def test_adjoint_labels():
    cx = complex_for("cube", 4, "T:x-")
    assert adjoint_op(cx.grad, cx.masses).label == "-div_N"
    assert adjoint_op(cx.curl, cx.masses).label == "curl_N"
    assert adjoint_op(cx.div_n, cx.masses).label == "-grad_T"


@pytest.mark.parametrize("name", list(FIXTURES))
def test_masses_sum_to_volume(name):
    cx = complex_for(name, FIXTURES[name], "all-N")
    volume = cx.index.domain.volume
    for kind in ("node", "edge", "face", "cell"):
        # edges and faces carry one weight per direction
        per = {"node": 1, "edge": 3, "face": 3, "cell": 1}[kind]
        assert cx.masses.of(kind).sum() == pytest.approx(per * volume, rel=1e-12)


def test_gradient_of_linear_function_is_exact():
    cx = complex_for("cube", 4, "all-N")
    a = np.array([0.3, -1.2, 2.0])
    u = sample_field(lambda p: p @ a, cx.index, "node")
    g = cx.grad(u)
    expected = sample_field(lambda p: np.tile(a, (len(p), 1)), cx.index, "edge")
    np.testing.assert_allclose(g.coeffs, expected.coeffs, atol=1e-12)


def test_curl_of_rotation_is_exact():
    cx = complex_for("cube", 4, "all-N")
    E = sample_field(lambda p: np.stack([-p[:, 1], p[:, 0], np.zeros(len(p))], axis=1), cx.index, "edge")
    c = cx.curl(E).coeffs
    axis = cx.index.face_axis
    np.testing.assert_allclose(c[axis == 2], 2.0, atol=1e-12)
    np.testing.assert_allclose(c[axis != 2], 0.0, atol=1e-12)


def test_dual_divergence_interior():
    cx = complex_for("cube", 4, "all-N")
    E = sample_field(lambda p: np.stack([p[:, 0], 2 * p[:, 1], -p[:, 2]], axis=1), cx.index, "edge")
    d = cx.div_n(E).coeffs
    interior = cx.index.node_count == 8
    # div_N is minus the adjoint of grad, so it reproduces +div in the interior
    np.testing.assert_allclose(d[interior], 2.0, atol=1e-12)


def test_t_entities_are_masked():
    cx = complex_for("cube", 4, "T:x-")
    assert abs(cx.grad.matrix[:, cx.partition.node_t]).sum() == 0
    assert abs(cx.curl.matrix[:, cx.partition.edge_t]).sum() == 0
    assert abs(cx.div.matrix[:, cx.partition.face_t]).sum() == 0
    assert abs(cx.div_n.matrix[cx.partition.node_t]).sum() == 0


@pytest.mark.parametrize("rule", PARTITIONS)
def test_integration_by_parts(rule):
    cx = complex_for("cavity", 1, rule)
    res = check_integration_by_parts(cx, trials=20, seed=3)
    assert res["max"] <= 1e-12
    if rule == "all-N":
        assert res["negative_control"] <= 1e-12
    else:
        # the unmasked gradient leaves a boundary term on T
        assert res["negative_control"] > 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(PARTITIONS))
def test_green_formula_random_fields(seed, rule):
    cx = complex_for("torus", 1, rule)
    rng = np.random.default_rng(seed)
    u = cx.admissible(Field("node", rng.standard_normal(cx.index.count("node"))))
    H = Field("edge", rng.standard_normal(cx.index.count("edge")))
    lhs = cx.inner(cx.grad(u), H)
    rhs = -cx.inner(u, cx.div_n(H))
    scale = cx.norm(cx.grad(u)) * cx.norm(H) + cx.norm(u) * cx.norm(cx.div_n(H))
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_wrong_kind_rejected():
    cx = complex_for("cube", 4, "all-T")
    with pytest.raises(FieldError):
        cx.grad(Field("edge", np.zeros(cx.index.count("edge"))))
    with pytest.raises(FieldError):
        check_complex_property(cx.grad, cx.div, cx.curl)


def test_partition_from_other_grid_rejected():
    cx = complex_for("cube", 4, "all-T")
    other = tag_boundary(index_for("cube", 2), "all-T")
    with pytest.raises(InconsistentInputs):
        gradient_op(cx.index, other, cx.masses)


def test_invalid_sample():
    index = index_for("cube", 2)
    with pytest.raises(InvalidSample):
        sample_field(lambda p: np.full(len(p), np.nan), index, "node")
    with pytest.raises(FieldError):
        sample_field(lambda p: p[:, 0], index, "edge")


def test_coo_dump(tmp_path):
    cx = assemble(index_for("cube", 1), "all-N")
    text = cx.grad.to_coo_text(tmp_path / "grad.txt")
    lines = text.splitlines()
    assert lines[0].startswith("# grad_T: edge x node")
    assert len(lines) - 1 == cx.grad.matrix.nnz == 24
    assert (tmp_path / "grad.txt").read_text() == text
