"""Polynomial functions of quantum states estimated with the QSF circuit."""

from .applications import estimate_entropy, estimate_fidelity, estimate_polynomial, max_eigenvalue
from .circuit import analytic_joint_distribution, joint_distribution, simulate_full
from .coefficients import PolySpec, entropy_taylor_spec, sqrt_taylor_spec, step_poly_spec
from .errors import QSFError
from .sampler import estimate, sample_shots
from .states import DensityMatrix, random_state

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "PolySpec",
    "QSFError",
    "analytic_joint_distribution",
    "entropy_taylor_spec",
    "estimate",
    "estimate_entropy",
    "estimate_fidelity",
    "estimate_polynomial",
    "joint_distribution",
    "max_eigenvalue",
    "random_state",
    "sample_shots",
    "simulate_full",
    "sqrt_taylor_spec",
    "step_poly_spec",
]
