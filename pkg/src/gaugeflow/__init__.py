"""Numerical laboratory for gradient truncation in anisotropic diffusion.

The package builds Minkowski gauges of planar convex bodies, the associated
degenerate diffusion integrands with their smoothed and uniformly elliptic
regularizations, an implicit variational solver on tensor grids, and the
measurement tools (excess decay, regime classification, continuity moduli)
used to probe regularity of the truncated gradient.  Hot kernels run through
a compiled extension when available; ``gaugeflow._kernels.BACKEND`` names the
active implementation.
"""

__version__ = "0.1.0"

from .bodies import (
    ConvexBody,
    ball,
    ellipsoid,
    polytope,
    radii,
    gauge,
    gauge_many,
    dual_gauge,
    dual_gauge_many,
    sample_dual_boundary,
)
from .gmaps import GDeltaMap
from .grid import Grid, GridField
from .integrand import (
    IntegrandSpec,
    RegularizedIntegrand,
    build_regularized,
    prototype_value,
    prototype_gradient,
    prototype_hessian,
)
from .solver import SolveResult, SolverError, discrete_energy, solve, weak_residual
from .analysis import (
    Cylinder,
    classify_regime,
    continuity_modulus,
    eps_convergence_table,
    excess,
    superlevel_measure,
)
from .config import ConfigError, ExperimentConfig

__all__ = [
    "__version__",
    "ConvexBody",
    "ball",
    "ellipsoid",
    "polytope",
    "radii",
    "gauge",
    "gauge_many",
    "dual_gauge",
    "dual_gauge_many",
    "sample_dual_boundary",
    "GDeltaMap",
    "Grid",
    "GridField",
    "IntegrandSpec",
    "RegularizedIntegrand",
    "build_regularized",
    "prototype_value",
    "prototype_gradient",
    "prototype_hessian",
    "SolveResult",
    "SolverError",
    "discrete_energy",
    "solve",
    "weak_residual",
    "Cylinder",
    "classify_regime",
    "continuity_modulus",
    "eps_convergence_table",
    "excess",
    "superlevel_measure",
    "ExperimentConfig",
    "ConfigError",
]
