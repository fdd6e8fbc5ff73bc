"""Acceptance criteria 1-9 at their stated tolerances.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import json
import math
import time

import numpy as np
import pytest

from dercomplex.cli import parse_config, run
from dercomplex.constants import friedrichs_poincare_constant, maxwell_constant, verify_estimates
from dercomplex.decompose import harmonic_basis, refined_split, simple_split
from dercomplex.divcurl import (DEMONSTRATION, HarnessConfig, HypothesisViolation, bump_cutoff, get_family,
                                oscillation_dual_norms, run_alternative, run_local, run_theorem1)
from dercomplex.grid import enumerate_entities
from dercomplex.operators import Field, adjoint_mismatch, assemble, check_complex_property, check_integration_by_parts
from dercomplex.presets import preset_domain

PARTITIONS = ("all-T", "all-N", "T:x-")
# cube at 8^3; cavity and torus at their base sizes (6^3, 8x8x2)
FIXTURES = (("cube", 8), ("cavity", 1), ("torus", 1))
N_LIST = (1, 2, 4, 8, 16, 32)


def fixture_complexes():
    for name, res in FIXTURES:
        index = enumerate_entities(preset_domain(name, res))
        for rule in PARTITIONS:
            yield f"{name}/{rule}", assemble(index, rule)


@pytest.mark.criterion(1, "structural exactness and integration by parts")
def test_structural_exactness():
    start = time.perf_counter()
    index = enumerate_entities(preset_domain("cube", 8))
    for rule in PARTITIONS:
        cx = assemble(index, rule)
        assert check_complex_property(cx.grad, cx.curl, cx.div) == {"curl_grad": 0.0, "div_curl": 0.0}
        assert check_integration_by_parts(cx, trials=100, seed=0)["max"] <= 1e-12
    assert time.perf_counter() - start <= 10.0
    for label, cx in fixture_complexes():
        assert check_complex_property(cx.grad, cx.curl, cx.div) == {"curl_grad": 0.0, "div_curl": 0.0}, label
        assert check_integration_by_parts(cx, trials=100, seed=0)["max"] <= 1e-12, label


@pytest.mark.criterion(2, "dual operators equal the mass-weighted adjoints")
def test_adjoint_identity():
    start = time.perf_counter()
    for label, cx in fixture_complexes():
        gaps = adjoint_mismatch(cx)
        assert max(gaps.values()) <= 1e-14, (label, gaps)
    assert time.perf_counter() - start <= 5.0


@pytest.mark.criterion(3, "Helmholtz splits: reconstruction, orthogonality, certification")
def test_helmholtz_decomposition():
    for label, cx in fixture_complexes():
        basis = harmonic_basis(cx)
        rng = np.random.default_rng(0)
        for _ in range(50):
            X = Field("edge", rng.standard_normal(cx.index.count("edge")))
            simple = simple_split(X, cx).diagnostics
            assert simple["reconstruction"] <= 1e-10, label
            assert simple["orthogonality"] <= 1e-10, label
            assert simple["div_residual"] <= 1e-8, label
            refined = refined_split(X, cx, basis).diagnostics
            assert refined["reconstruction"] <= 1e-10, label
            assert refined["orthogonality"] <= 1e-10, label
            assert refined["certification"] <= 1e-8, label


@pytest.mark.criterion(4, "Dirichlet-Neumann dimensions, stable across resolutions")
def test_harmonic_dimensions():
    expected = {("cube", "all-T"): 0, ("cube", "all-N"): 0, ("cavity", "all-T"): 1, ("cavity", "all-N"): 0,
                ("torus", "all-N"): 1, ("torus", "all-T"): 0}
    resolutions = {"cube": (4, 8), "cavity": (1, 2), "torus": (1, 2)}
    start = time.perf_counter()
    for (name, rule), dim in expected.items():
        found = [harmonic_basis(assemble(enumerate_entities(preset_domain(name, r)), rule)).dimension
                 for r in resolutions[name]]
        assert found == [dim, dim], (name, rule, found)
    assert time.perf_counter() - start <= 60.0


@pytest.mark.criterion(5, "Friedrichs/Poincare and Maxwell constants on the cube at h = 1/16")
def test_constants():
    start = time.perf_counter()
    index = enumerate_entities(preset_domain("cube", 16))
    expected_fp = {"all-T": (1 / (math.pi * math.sqrt(3)), 0.02), "all-N": (1 / math.pi, 0.02),
                   "T:x-": (2 / math.pi, 0.03)}
    for rule, (value, rtol) in expected_fp.items():
        cx = assemble(index, rule)
        basis = harmonic_basis(cx)
        fp = friedrichs_poincare_constant(cx)
        mx = maxwell_constant(cx, basis)
        assert fp.constant == pytest.approx(value, rel=rtol), rule
        if rule == "all-T":
            assert mx.constant == pytest.approx(1 / (math.pi * math.sqrt(2)), rel=0.03)
        est = verify_estimates(cx, fp, mx, basis, trials=200, seed=0)
        assert est.worst_fp <= 1.0 and est.worst_maxwell <= 1.0
        assert est.eigenfield_fp == pytest.approx(1.0, abs=1e-6)
        assert est.eigenfield_maxwell == pytest.approx(1.0, abs=1e-6)
    assert time.perf_counter() - start <= 300.0


def _check_theorem1(rep, family):
    assert rep.slopes["defect"] <= -0.5, family
    assert rep.checks["terminal_defect"] <= 1e-3, family
    assert min(r["E_diff_norm"] for r in rep.analytic) >= 0.5, family
    assert rep.checks["weak_gaps_decay"], family
    assert rep.verdict == "PASS"


@pytest.mark.criterion(6, "pairing convergence for F1, F3, F4")
def test_theorem1_families():
    start = time.perf_counter()
    for name in ("F1", "F3", "F4"):
        rep = run_theorem1(get_family(name), N_LIST, (12, 24), "all-N")
        _check_theorem1(rep, name)
        if name == "F3":
            assert rep.checks["max_residual_increment"] <= 1e-6
    _check_theorem1(run_theorem1(get_family("F1"), N_LIST, (12, 24), "T:x-"), "F1 mixed")
    assert time.perf_counter() - start <= 120.0


@pytest.mark.criterion(6, "pairing convergence for F1, F3, F4")
def test_theorem1_quadrature_cross_check():
    start = time.perf_counter()
    cfg = HarnessConfig(quadrature=True)
    for name in ("F1", "F3", "F4"):
        rep = run_theorem1(get_family(name), N_LIST, (12,), "all-N", cfg)
        assert rep.checks["quadrature_gap"] <= 1e-10
    assert time.perf_counter() - start <= 600.0


@pytest.mark.criterion(7, "F2 counterexample: local defect and rejection")
def test_counterexample():
    fam = get_family("F2")
    cutoff = bump_cutoff(0.125, 0.125)
    assert cutoff.integral() == pytest.approx(0.125, rel=1e-12)
    rep = run_local(fam, cutoff, N_LIST)
    assert rep.analytic[-1]["n"] == 32
    assert rep.analytic[-1]["defect"] == pytest.approx(0.0625, abs=1e-3)
    with pytest.raises(HypothesisViolation, match="hypothesis violation") as info:
        run_theorem1(fam, N_LIST, (12, 24), "all-N")
    assert info.value.report.checks["div_H_growth_per_doubling"] >= 1.8


@pytest.mark.criterion(8, "dual-norm demonstrations")
def test_dual_norms():
    out = oscillation_dual_norms(N_LIST, resolution=64)
    assert out["label"] == DEMONSTRATION
    assert abs(out["slope"] + 1.0) <= 0.3, out["slope"]
    alt = run_alternative(get_family("F2"), (1, 2, 4), resolution=24)
    assert alt.label == DEMONSTRATION
    values = [r["div_H_dual_hat"] for r in alt.discrete]
    assert min(values) >= 0.5 * values[0]


@pytest.mark.criterion(9, "identical config and seed give identical reports")
def test_determinism(tmp_path):
    texts = []
    for i in range(2):
        out = tmp_path / "run"
        cfg = parse_config(f"domain = cube\nexperiment = all\nseed = 7\noutput = {out}\n")
        code, _ = run(cfg)
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        report.pop("timestamp")
        texts.append(json.dumps(report, sort_keys=True))
    assert texts[0] == texts[1]
