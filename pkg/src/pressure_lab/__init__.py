"""pressure-lab: thermodynamic formalism for smooth interval maps.

Computes exceptional orbit structures of interval maps, the associated
cohomological transform of the geometric potential, pressure and
hidden-pressure curves with phase-transition detection, and the
oscillation-norm diagnostics of the underlying transfer operators.
"""

__version__ = "0.1.0"

from .map_core import (
    Branch,
    CriticalPoint,
    IntervalMap,
    PeriodicOrbit,
    birkhoff_sum,
    piecewise_linear_map,
    polynomial_map,
)
from .registry import named_map, quadratic_map

__all__ = [
    "Branch",
    "CriticalPoint",
    "IntervalMap",
    "PeriodicOrbit",
    "birkhoff_sum",
    "piecewise_linear_map",
    "polynomial_map",
    "named_map",
    "quadratic_map",
    "__version__",
]
