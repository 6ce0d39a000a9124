"""Two-sided bounds for transition functions of scalar diffusions.

A diffusion ``dV = nu(V) dt + sigma(V) dW`` is mapped to unit diffusion
coefficient and compared with a reference process (Brownian motion on the
real line, a Bessel process on the half line).  The bounds follow from the
Girsanov density between the two, controlled by the extrema L and M of
``mu' + mu^2`` (less the Bessel centrifugal term).
"""

__version__ = "0.1.0"

from .bounds import (BoundResult, LMEstimate, asymptotic_density, crossing_density_bounds,
                     density_bounds, distribution_bounds, estimate_lm, g_delta, n_integrand,
                     optimize_d)
from .catalog import BUILTINS, get_builtin
from .errors import DiffboundError, InputError, NumericalError
from .expr import compile_expr, differentiate, evaluate, parse
from .mc import SimConfig, SimResult, girsanov_check, kde_density, simulate_paths
from .model import (DiffusionSpec, TransformedDiffusion, build_transformed, lamperti_F,
                    lamperti_F_inv, load_model)
from .reference import ReferenceKernel, bessel_i, ref_cdf, ref_crossing_density, ref_density

__all__ = [
    "BUILTINS", "BoundResult", "DiffboundError", "DiffusionSpec", "InputError", "LMEstimate",
    "NumericalError", "ReferenceKernel", "SimConfig", "SimResult", "TransformedDiffusion",
    "asymptotic_density", "bessel_i", "build_transformed", "compile_expr", "crossing_density_bounds",
    "density_bounds", "differentiate", "distribution_bounds", "estimate_lm", "evaluate", "g_delta",
    "get_builtin", "girsanov_check", "kde_density", "lamperti_F", "lamperti_F_inv", "load_model",
    "n_integrand", "optimize_d", "parse", "ref_cdf", "ref_crossing_density", "ref_density",
    "simulate_paths",
]
