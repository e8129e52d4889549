"""Heat kernels, survival and Green functions of isotropic stable processes in cones."""

__version__ = "0.1.0"

from .kernel import StableParams, build_profile, get_profile, heat_kernel_free
from .geometry import Ball, Cone, FullSpace, HalfLine, HalfSpace, parse_domain
from .sampler import SeedSpec, survival_probability
from .estimators import MCConfig, green_function, killed_kernel, lambda1_fit
from .bounds import ConeExponent, heat_shape_cone, survival_shape_cone
from .verify import beta_fit, comparability_report

__all__ = [
    "Ball", "Cone", "ConeExponent", "FullSpace", "HalfLine", "HalfSpace", "MCConfig", "SeedSpec",
    "StableParams", "beta_fit", "build_profile", "comparability_report", "get_profile", "green_function",
    "heat_kernel_free", "heat_shape_cone", "killed_kernel", "lambda1_fit", "parse_domain",
    "survival_probability", "survival_shape_cone",
]
