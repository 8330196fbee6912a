"""Radial solutions of a penalized Dirichlet energy on the unit disc.

The maps are u(R, theta) = r(R) (cos M theta, sin M theta) and the energy
adds a convex penalty of the Jacobian determinant to the Dirichlet energy.
"""
from ._kernels import BACKEND
from .analysis import SolutionReport, full_report
from .kinematics import RadialProfile, graded_mesh, radial_energy
from .penalty import PenaltyError, PenaltyKind, PenaltySpec, f_of_d, rho, rho_prime, rho_second
from .solvers import (BracketError, MinimizeConfig, NoDelayedSolution, ShootingConfig, SolverError,
                      cross_validate, minimize, minimize_extrapolated, shoot_delayed, shoot_immediate)

__all__ = [
    "BACKEND", "SolutionReport", "full_report", "RadialProfile", "graded_mesh", "radial_energy",
    "PenaltyError", "PenaltyKind", "PenaltySpec", "f_of_d", "rho", "rho_prime", "rho_second",
    "BracketError", "MinimizeConfig", "NoDelayedSolution", "ShootingConfig", "SolverError",
    "cross_validate", "minimize", "minimize_extrapolated", "shoot_delayed", "shoot_immediate",
]
__version__ = "0.1.0"
