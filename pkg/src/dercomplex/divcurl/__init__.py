"""Div-curl experiments on analytic oscillating sequences."""

from .analytic import AliasingRisk, Scalar, Vector, inner, integrate_product_gl, norm
from .families import (Cutoff, SequenceFamily, builtin_families, bump_cutoff, default_dictionary, get_family,
                       indicator_cutoff, zero_cutoff)
from .harness import (DEMONSTRATION, CutoffNotAdmissible, ExperimentReport, HarnessConfig, HypothesisViolation,
                      fit_slope, neg_sobolev_norm, oscillation_dual_norms, pairing, run_alternative, run_local,
                      run_theorem1, weak_gap)

__all__ = [
    "AliasingRisk", "Scalar", "Vector", "inner", "integrate_product_gl", "norm",
    "Cutoff", "SequenceFamily", "builtin_families", "bump_cutoff", "default_dictionary", "get_family",
    "indicator_cutoff", "zero_cutoff",
    "DEMONSTRATION", "CutoffNotAdmissible", "ExperimentReport", "HarnessConfig", "HypothesisViolation",
    "fit_slope", "neg_sobolev_norm", "oscillation_dual_norms", "pairing", "run_alternative", "run_local",
    "run_theorem1", "weak_gap",
]
