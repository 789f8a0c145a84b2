"""Numerical laboratory for two-soliton collisions of the quartic gKdV equation

    u_t + (u_xx - u + u^4)_x = 0

in the frame where both solitons move at speed O(mu0).  The package builds the
corrected two-soliton ansatz, integrates the reduced modulation ODEs and the
full PDE, and measures the interaction observables (minimum separation, speed
exchange, remainder norms, inelastic defect).
"""

__version__ = "0.1.0"

from .grids import GridSpec, Profile
from .soliton import SolitonScalars, soliton_scalars

__all__ = ["GridSpec", "Profile", "SolitonScalars", "soliton_scalars", "__version__"]
