"""Quantum network optimization: combs, testers, process matrices and one-shot entropies."""

from .entropy import (
    EntropyValue,
    ScoreResult,
    cond_min_entropy_state,
    d_max_pair,
    d_max_to_set,
    max_score,
    max_score_causal,
    max_score_definite_order,
    max_score_noncausal,
    network_dmax_witness,
    network_min_entropy,
    test_min_entropy,
)
from .layout import System, SystemLayout
from .netmodel import (
    ConstraintSet,
    Instrument,
    LabeledOperator,
    Party,
    born_probability,
    comb_constraints,
    dual_affine_basis,
    dual_comb_constraints,
    dual_nosig_constraints,
    link_product,
    nosig_constraints,
    tester_constraints,
    validate,
)
from .sdp import SdpProblem, SdpSolution, solve_dual, solve_primal, verify_certificates

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet", "EntropyValue", "Instrument", "LabeledOperator", "Party", "ScoreResult",
    "SdpProblem", "SdpSolution", "System", "SystemLayout", "born_probability", "comb_constraints",
    "cond_min_entropy_state", "d_max_pair", "d_max_to_set", "dual_affine_basis", "dual_comb_constraints",
    "dual_nosig_constraints", "link_product", "max_score", "max_score_causal", "max_score_definite_order",
    "max_score_noncausal", "network_dmax_witness", "network_min_entropy", "nosig_constraints",
    "solve_dual", "solve_primal", "test_min_entropy", "tester_constraints", "validate", "verify_certificates",
]
