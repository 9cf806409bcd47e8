"""Tensor-recovery uncertainty quantification.

Build a gPC surrogate from simulations at a small random subset of a
tensor-product quadrature grid: recover the full grid as a low-rank CP
tensor with sparse gPC coefficients, then read the coefficients off the
factors.
"""

from .basis import (BasisSet, Distribution, Parameter, ParameterSpace, build_basis,
                    enumerate_multi_indices, gauss_quadrature, orthonormal_poly)
from .errors import NonConvergenceError, ValidationError
from .recovery import (CvReport, FitResult, RecoveryConfig, cross_validate, fit, init_factors,
                       objective, solve_subproblem, subproblem_operators)
from .surrogate import GpcModel, density, evaluate, extract_coefficients, moments, sparsity_report
from .tensor import CpFactors, SampleSet

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "CpFactors", "CvReport", "Distribution", "FitResult", "GpcModel",
    "NonConvergenceError", "Parameter", "ParameterSpace", "RecoveryConfig", "SampleSet",
    "ValidationError", "build_basis", "cross_validate", "density", "enumerate_multi_indices",
    "evaluate", "extract_coefficients", "fit", "gauss_quadrature", "init_factors", "moments",
    "objective", "orthonormal_poly", "solve_subproblem", "sparsity_report",
    "subproblem_operators",
]
