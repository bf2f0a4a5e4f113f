"""Layered solutions of -Lap u + u = f(u) on R^N x R by constrained action minimisation."""

from .builder import BrakeOrbitSolution, assemble, mountain_pass_crosscheck, verify
from .minimizer import CoreSegment, MinimizeConfig, detect_sigma_tau, minimize
from .nonlinearity import Nonlinearity, PurePower, TableNonlinearity, validate_hypotheses
from .potential import (PotentialConstants, Side, classify, estimate_constants, evaluate_V,
                        grad_V, ground_state, ray_scan)
from .radial import RadialField, RadialGrid, norms, rearrange
from .trajectory import CylinderGrid, Trajectory, energy_profile, pde_residual, phi

__all__ = [
    "BrakeOrbitSolution", "CoreSegment", "CylinderGrid", "MinimizeConfig", "Nonlinearity",
    "PotentialConstants", "PurePower", "RadialField", "RadialGrid", "Side", "TableNonlinearity",
    "Trajectory", "assemble", "classify", "detect_sigma_tau", "energy_profile", "estimate_constants",
    "evaluate_V", "grad_V", "ground_state", "minimize", "mountain_pass_crosscheck", "norms", "pde_residual",
    "phi", "ray_scan", "rearrange", "validate_hypotheses", "verify",
]
