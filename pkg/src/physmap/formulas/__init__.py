"""Closed-form and quadrature evaluators for ocean statistics."""

from .general import (A_gap, J_general, anchor_cumulative, clone_exponent, mean_anchored_count,
                      mean_clone_count, r_one_point, r_two_point)
from .homogeneous import (HomogeneousParams, InhomogeneousBounds, VarianceConstants, J_hom,
                          h_moment, inhomogeneous_bounds, limit_asymptotics, mixing_bound,
                          nu_slope_h, nu_vanishing, phi, rbar, rho_hom, tau_bound,
                          variance_constants, variance_exact)
from .moments import ThirdMoment, third_moment

__all__ = [
    "A_gap", "J_general", "anchor_cumulative", "clone_exponent", "mean_anchored_count",
    "mean_clone_count", "r_one_point", "r_two_point", "HomogeneousParams",
    "InhomogeneousBounds", "VarianceConstants", "J_hom", "h_moment", "inhomogeneous_bounds",
    "limit_asymptotics", "mixing_bound", "nu_slope_h", "nu_vanishing", "phi", "rbar", "rho_hom",
    "tau_bound", "variance_constants", "variance_exact", "ThirdMoment", "third_moment",
]
