"""Lyapunov exponents of critical random 2x2 transfer-matrix products.

Three independent pipelines (direct products, the projective X chain, and
the edge-measure construction) plus the fluctuation-theory and operator
diagnostics used to cross-check them.
"""

__version__ = "0.1.0"

from .disorder import DisorderLaw, parse_law
from .gridfn import GridFunction, GridSpec, EstimateCI, l1_distance, fit_affine_tail

__all__ = [
    "DisorderLaw",
    "parse_law",
    "GridFunction",
    "GridSpec",
    "EstimateCI",
    "l1_distance",
    "fit_affine_tail",
    "__version__",
]
