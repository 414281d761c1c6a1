"""Band structure and line-defect modes of two-dimensional bubble crystals.

Modules
-------
specfun
    Bessel and Hankel functions of integer order, and the constant eta_k.
greens
    Quasi-periodic Green's functions on the unit square lattice (Ewald).
operators
    Boundary-integral operators as Fourier matrices on circles.
solver
    Muller's method, Bloch bands, band-edge curvature and the defect band.
asymptotics
    Capacitance, dilute defect equation, critical defect size and the
    small-perturbation formula.
cli
    Command-line front end.
"""

from .config import ConfigError, CrystalConfig
from .greens import BlochVector, LatticeGreensEvaluator
from .operators import BlockOperator
from .solver import BandCurve

__all__ = [
    "BandCurve",
    "BlochVector",
    "BlockOperator",
    "ConfigError",
    "CrystalConfig",
    "LatticeGreensEvaluator",
]

__version__ = "0.1.0"
