"""Spectral asymptotics for degenerate sum-of-squares operators.

The pipeline: parse vector fields (``fields``), audit the bracket
filtration and homogeneous dimension (``filtration``), cross-check ball
volume growth (``ccball``), assemble the discrete operator pencil
(``assembly``), extract counting and heat-trace data (``spectral``), fit
power laws and compare against the predicted leading term
(``asymptotics``), and drive everything reproducibly (``registry``,
``harness``, ``cli``).
"""

__version__ = "0.1.0"

from .fields import VectorField, parse_field, parse_coeff
from .filtration import (AuditReport, hormander_audit, tangent_filtration,
                         homogeneous_dimension, lambda_poly)
from .ccball import (sample_ball, ball_volume, doubling_exponent,
                     lambda_compare)
from .assembly import (Grid, Scenario, PsiScenario, OperatorPencil,
                       build_grid, assemble_operator, psi_transform)
from .spectral import (Spectrum, TraceEstimate, count_below, count_curve,
                       lowest_eigs, heat_trace, heat_trace_curve, heat_diag,
                       dense_oracle)
from .asymptotics import (PowerFit, TheoryCoefficient, Verdict,
                          fit_power_law, theoretical_coefficient,
                          karamata_check, uniform_bound_probe, verify)
from .registry import ScenarioRegistryEntry, REGISTRY, get, list_entries
from .harness import RunConfig, run_scenario, list_scenarios

__all__ = [
    "__version__",
    "VectorField", "parse_field", "parse_coeff",
    "AuditReport", "hormander_audit", "tangent_filtration",
    "homogeneous_dimension", "lambda_poly",
    "sample_ball", "ball_volume", "doubling_exponent", "lambda_compare",
    "Grid", "Scenario", "PsiScenario", "OperatorPencil", "build_grid",
    "assemble_operator", "psi_transform",
    "Spectrum", "TraceEstimate", "count_below", "count_curve", "lowest_eigs",
    "heat_trace", "heat_trace_curve", "heat_diag", "dense_oracle",
    "PowerFit", "TheoryCoefficient", "Verdict", "fit_power_law",
    "theoretical_coefficient", "karamata_check", "uniform_bound_probe",
    "verify",
    "ScenarioRegistryEntry", "REGISTRY", "get", "list_entries",
    "RunConfig", "run_scenario", "list_scenarios",
]
