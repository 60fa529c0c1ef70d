"""Numerical checks of the torsion problem ``Delta u + n k u = -1`` on warped products.

Submodules: ``geometry`` (warping functions, curvature), ``catalog`` (named
examples with hypothesis checks), ``radial`` (radial solutions and Hessian
equation), ``field2d`` (finite differences on chart domains), ``geodesics``
(shooting and distances), ``analysis`` (integral identities, P-function) and
``cli``.  ``kernels.BACKEND`` says whether the compiled kernels are in use.
"""
__version__ = "0.1.0"

from .catalog import CatalogEntry, Hypothesis, build_entry, default_entries
from .geometry import Fiber, Interval, WarpedManifold, check_ricci_bound, serrin_coefficient
from .kernels import BACKEND
from .radial import RadialProfile, closed_form_solution, solve_radial_bvp

__all__ = [
    "__version__", "BACKEND", "CatalogEntry", "Hypothesis", "build_entry", "default_entries",
    "Fiber", "Interval", "WarpedManifold", "check_ricci_bound", "serrin_coefficient",
    "RadialProfile", "closed_form_solution", "solve_radial_bvp",
]
