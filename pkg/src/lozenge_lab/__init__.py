"""Glauber dynamics on lozenge tilings: simulation, exact analysis and limit shapes."""
import os

# the bundled TBB is too old for numba; OpenMP is always present here
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .errors import *  # noqa: E402,F401,F403
from .lattice import Domain, DomainSpec, build_domain, discretize  # noqa: E402,F401
from .height import (BoundaryHeight, FlipSite, HeightFunction, apply_flip,  # noqa: E402,F401
                     check_admissible, extremal_heights, flippable, forced_boundary,
                     max_below_ceiling, min_above_floor)

__version__ = "0.1.0"
