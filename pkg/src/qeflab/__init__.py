"""Spectral toolkit for multimode open quantum harmonic oscillators.

Builds the two-point commutator and covariance kernels of a linear
quantum system, expands them over the eigenbasis of the commutator
integral operator, and evaluates quadratic-exponential performance
functionals in closed form with independent Monte-Carlo and truncated
number-basis cross-checks.
"""

from .eigensolver import (
    EigenPair,
    NystromResult,
    SpectralBasis,
    build_basis,
    nystrom_oracle,
    scan_eigenfrequencies,
)
from .errors import QeflabError
from .fock import TruncatedPair, build_pair, lhs_exponential, rhs_average, verify_ode
from .kernels import KernelContext, apply_L, bvp_matrices, green_function, make_context
from .mc import (
    McConfig,
    McEstimate,
    QefMcResult,
    estimate_qef_mc,
    sample_N_paths,
    sample_Z_paths,
)
from .model import (
    OscillatorSpec,
    SystemMatrices,
    build_system,
    recover_ccr,
    solve_state_ale,
    transform_system,
)
from .qef import QefReport, compute_C, compute_qef, find_critical_theta, pk_eigenvalues
from .qkl import QklBasis, apply_K, build_qkl, surrogate_covariance
from .quadrature import Grid, make_grid

__version__ = "0.1.0"

__all__ = [
    "EigenPair",
    "Grid",
    "KernelContext",
    "McConfig",
    "McEstimate",
    "NystromResult",
    "OscillatorSpec",
    "QefMcResult",
    "QefReport",
    "QeflabError",
    "QklBasis",
    "SpectralBasis",
    "SystemMatrices",
    "TruncatedPair",
    "apply_K",
    "apply_L",
    "build_basis",
    "build_pair",
    "build_qkl",
    "build_system",
    "bvp_matrices",
    "compute_C",
    "compute_qef",
    "estimate_qef_mc",
    "find_critical_theta",
    "green_function",
    "lhs_exponential",
    "make_context",
    "make_grid",
    "nystrom_oracle",
    "pk_eigenvalues",
    "recover_ccr",
    "rhs_average",
    "sample_N_paths",
    "sample_Z_paths",
    "scan_eigenfrequencies",
    "solve_state_ale",
    "surrogate_covariance",
    "transform_system",
    "verify_ode",
]
