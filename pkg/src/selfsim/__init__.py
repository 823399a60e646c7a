"""Numerics for self-similar extinction in the critical diffusive
Hamilton-Jacobi equation: profile shooting and classification, Pohozaev
diagnostics, and a radial fast-diffusion finite-difference solver."""

from .params import Params, OutOfRangeError, make_params, weight_rho
from .profile_ode import (
    IntegratorOptions,
    ProfileState,
    Trajectory,
    integrate,
    psi_integrate,
)
from .classify import Classification, GroundStateResult, bisect_a_star, bracket_search, classify

__version__ = "0.1.0"

__all__ = [
    "Params",
    "OutOfRangeError",
    "make_params",
    "weight_rho",
    "IntegratorOptions",
    "ProfileState",
    "Trajectory",
    "integrate",
    "psi_integrate",
    "Classification",
    "GroundStateResult",
    "classify",
    "bracket_search",
    "bisect_a_star",
    "__version__",
]
