"""Fractional (s-)convex envelopes: operators, solvers and checks."""
from .dirichlet1d import (
    SegmentProblem,
    check_s_convexity,
    is_s_convex_on_segment,
    random_segments,
    solve_segment,
)
from .envelope import (
    ConvergenceWarning,
    EnvelopeResult,
    SConcaveEnvelope,
    SConvexEnvelope,
    SolverConfig,
    classical_convex_envelope_1d,
    clear_scheme_cache,
    nonlocal_mean_update,
    s_concave_envelope,
    solve_envelope,
)
from .geometry import Ball, DirectionSet, Dumbbell, Ellipse, LineSample, Square, clip_line, connected_component, domain_from_spec
from .kernel import FractionalOrder, Quadrature1D, TailModel, build_quadrature, frac_lap_1d, frac_lap_1d_all
from .operator import (
    ExteriorData,
    GridFunction,
    OperatorMode,
    directional_frac_lap,
    lambda_1s,
    lambda_ns,
    monge_ampere_residual,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "ConvergenceWarning",
    "DirectionSet",
    "Dumbbell",
    "Ellipse",
    "EnvelopeResult",
    "ExteriorData",
    "FractionalOrder",
    "GridFunction",
    "LineSample",
    "OperatorMode",
    "Quadrature1D",
    "SConcaveEnvelope",
    "SConvexEnvelope",
    "SegmentProblem",
    "SolverConfig",
    "Square",
    "TailModel",
    "build_quadrature",
    "check_s_convexity",
    "classical_convex_envelope_1d",
    "clear_scheme_cache",
    "clip_line",
    "connected_component",
    "directional_frac_lap",
    "domain_from_spec",
    "frac_lap_1d",
    "frac_lap_1d_all",
    "is_s_convex_on_segment",
    "lambda_1s",
    "lambda_ns",
    "monge_ampere_residual",
    "nonlocal_mean_update",
    "random_segments",
    "s_concave_envelope",
    "solve_envelope",
    "solve_segment",
]
