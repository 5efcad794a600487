"""Segment auctions for ad-supported generated text.

Per-segment and session-level auction mechanisms driven by Gumbel-perturbed
relevance-weighted scores, with closed-form allocation/payment/welfare
formulas, a Monte Carlo experiment harness, pluggable relevance and
generation providers, and a verification CLI.
"""

from ._kernels import BACKEND
from .core import (
    Ad,
    CombinatorialConfig,
    EmbeddingSpec,
    Mechanism,
    NegativePaymentPolicy,
    RelevanceVector,
    Scenario,
    ScenarioValidationError,
    load_scenario,
    parse_mechanism,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .sim import (
    DsicReport,
    ExperimentResult,
    OracleReport,
    builtin_scenario,
    dsic_probe,
    expected_metrics,
    run_experiment,
    run_suites,
)

__version__ = "0.1.0"

__all__ = [
    "Ad",
    "BACKEND",
    "CombinatorialConfig",
    "DsicReport",
    "EmbeddingSpec",
    "ExperimentResult",
    "Mechanism",
    "NegativePaymentPolicy",
    "OracleReport",
    "RelevanceVector",
    "Scenario",
    "ScenarioValidationError",
    "builtin_scenario",
    "dsic_probe",
    "expected_metrics",
    "load_scenario",
    "parse_mechanism",
    "run_experiment",
    "run_suites",
    "scenario_from_dict",
    "scenario_to_dict",
    "validate_scenario",
    "__version__",
]
