"""Numerical laboratory for intermittent maps with an infinite invariant measure.

The modules cover the map families and their assumptions (``maps``), the
change of variables to the half-line (``conjugation``), the transfer
operator on monotone grid densities (``grid``, ``transfer``), global
observables and their infinite-volume averages (``observables``), mixing
experiments (``mixing``), hitting-time and Birkhoff limit laws (``limits``),
the laminar distortion machinery (``laminar``) and a batch runner (``cli``).
"""

__version__ = "0.1.0"

from .maps import MapModel, build_builtin, check_assumptions  # noqa: E402,F401
from .grid import GridDensity, seed_density  # noqa: E402,F401
from .transfer import apply_transfer, iterate_transfer  # noqa: E402,F401
from .conjugation import build_conjugation, conjugate_map  # noqa: E402,F401
from .observables import estimate_av, sin_phi, sin2_phi  # noqa: E402,F401
