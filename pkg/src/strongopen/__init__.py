"""Numerical laboratory for singular hermitian metrics and strong openness.

Modules
-------
expr
    Expression language for metric entries, weights and sections.
metric
    Singular hermitian metrics on trivial bundles over polydiscs.
psh
    Plurisubharmonic toolkit: Lelong numbers, mollifiers, Bergman weights.
quad
    Adaptive quadrature for singular integrands and integrability tests.
openness
    Singularity exponents, capacities, tail curves and the effectiveness function.
stability
    Monotone metric sequences and L^p stability experiments.
cli
    Scenario-driven command line.

Set ``STRONGOPEN_PURE_NUMPY=1`` before import to disable the numba kernels.
"""

__version__ = "0.1.0"

from .expr import EvalPoint, ExprError, ExprSyntaxError, evaluate, parse_expr, to_text  # noqa: E402
from .metric import (MetricError, Polydisc, Section, SingularMetric, check_order, dual_at,  # noqa: E402
                     log_det, metric_at, nakano_min_eigenvalue, normalize, section_norm2, twist)
from .openness import (capacity_C, differential_inequality_check, effectiveness_verdict, g_beta,  # noqa: E402
                       g_curve, lower_bound_check, singularity_exponent, strong_openness_search, theta,
                       theta_identity_residual)
from .quad import Status, Verdict, integrability_at, integrate, integrate_sublevel  # noqa: E402

__all__ = [
    "__version__", "EvalPoint", "ExprError", "ExprSyntaxError", "evaluate", "parse_expr", "to_text",
    "MetricError", "Polydisc", "Section", "SingularMetric", "check_order", "dual_at", "log_det",
    "metric_at", "nakano_min_eigenvalue", "normalize", "section_norm2", "twist",
    "capacity_C", "differential_inequality_check", "effectiveness_verdict", "g_beta", "g_curve",
    "lower_bound_check", "singularity_exponent", "strong_openness_search", "theta",
    "theta_identity_residual", "Status", "Verdict", "integrability_at", "integrate", "integrate_sublevel",
]
