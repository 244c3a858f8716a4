"""Successive approximation against surrogate mappings, with sampled solvability certificates."""
from .certify import CertificateReport, SamplerConfig, certify
from .operators import (Decomposition, IdentitySurrogate, LinearSurrogate, Mapping,
                        frozen_jacobian_surrogate)
from .solve import Outcome, SolveConfig, SolveTrace, solve_comparison, solve_fixed_point, solve_patched
from .spaces import Lp, SpaceDescriptor

__version__ = "0.1.0"

__all__ = [
    "CertificateReport", "SamplerConfig", "certify", "Decomposition", "IdentitySurrogate",
    "LinearSurrogate", "Mapping", "frozen_jacobian_surrogate", "Outcome", "SolveConfig",
    "SolveTrace", "solve_comparison", "solve_fixed_point", "solve_patched", "Lp", "SpaceDescriptor",
]
