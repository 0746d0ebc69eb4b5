"""Bounded drift perturbations of Ornstein-Uhlenbeck semigroups."""

from ._core import (
    DriftField,
    FellerError,
    OUModel,
    SpectralHeatModel,
    build_grid,
    choose_t0,
    flow,
    gramian,
    heat_invariant,
    heat_sf_norm,
    hyp_check,
    kalman_index,
    mc_transition,
    sf_norm,
    sf_scaling_fit,
    solve_perturbed,
    stationary_covariance,
)

__all__ = [
    "DriftField",
    "FellerError",
    "OUModel",
    "SpectralHeatModel",
    "build_grid",
    "choose_t0",
    "flow",
    "gramian",
    "heat_invariant",
    "heat_sf_norm",
    "hyp_check",
    "kalman_index",
    "mc_transition",
    "sf_norm",
    "sf_scaling_fit",
    "solve_perturbed",
    "stationary_covariance",
]
