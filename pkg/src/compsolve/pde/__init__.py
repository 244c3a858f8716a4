"""Discretized boundary-value problems exposed as mappings with prescribed surrogates."""
from .elliptic import (CoefficientEnvelopeViolated, EllipticCoefficients, build_elliptic_operator,
                       check_blend_condition, check_coefficient_envelope, solve_elliptic)
from .navier_stokes import (GalerkinNS, NSConfig, QuadratureUnderResolved, StreamFunctionBasis,
                            build_ns_operator, evolve_ns, solve_ns_steady, verify_ns_conditions)

__all__ = [
    "CoefficientEnvelopeViolated", "EllipticCoefficients", "build_elliptic_operator",
    "check_blend_condition", "check_coefficient_envelope", "solve_elliptic",
    "GalerkinNS", "NSConfig", "QuadratureUnderResolved", "StreamFunctionBasis",
    "build_ns_operator", "evolve_ns", "solve_ns_steady", "verify_ns_conditions",
]
