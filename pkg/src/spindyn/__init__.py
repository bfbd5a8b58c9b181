"""Numerical toolkit for disordered, power-law interacting XXZ spin ensembles.

Unit conventions used across all modules:

* energies are frequencies nu = E/(2*pi*hbar), stored in MHz,
* lengths in micrometres, times in microseconds,
* any dynamical phase is 2*pi*nu*t,
* the quantization axis is the +z axis of the coordinate frame.
"""

__version__ = "0.1.0"

from spindyn.couplings import (
    CouplingMatrix,
    InteractionLaw,
    build_coupling_matrix,
    law_preset,
    pair_coupling,
)
from spindyn.geometry import (
    CloudGeometry,
    SaturationError,
    SpinPositions,
    median_nn_coupling,
    sample_blockaded_positions,
    wigner_seitz_radius,
)

__all__ = [
    "CloudGeometry",
    "CouplingMatrix",
    "InteractionLaw",
    "SaturationError",
    "SpinPositions",
    "build_coupling_matrix",
    "law_preset",
    "median_nn_coupling",
    "pair_coupling",
    "sample_blockaded_positions",
    "wigner_seitz_radius",
]
