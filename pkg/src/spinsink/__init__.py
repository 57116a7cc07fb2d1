"""Dissipative stabilization of many-body states in dipolar spin arrays.

Engineered "source" and "sink" auxiliary atoms with state-selective decay and
tunable detunings steer an interacting spin system toward target eigenstates.
The package builds the lattice models, assembles the composite open-system
problems, integrates them (dense master equation and quantum trajectories),
generates the detuning protocols, and tunes auxiliary parameters.
"""

from . import lattices, schedules, spectral
from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["lattices", "spectral", "schedules", "kernel_backend", "__version__"]
