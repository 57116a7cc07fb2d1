"""Time evolution of composite Lindblad problems.

* :mod:`.dense`  -- adaptive RK45 density-matrix integrator,
* :mod:`.steady` -- null-space steady states of the vectorized Liouvillian,
* :mod:`.mcwf`   -- Monte Carlo wave-function trajectories with parallel,
  seed-reproducible ensembles and several propagation backends.
"""

from .dense import LindbladResult, lindblad_evolve
from .mcwf import TrajectoryEnsemble, mcwf_run
from .steady import SteadyStateResult, steady_state

__all__ = [
    "lindblad_evolve",
    "LindbladResult",
    "steady_state",
    "SteadyStateResult",
    "mcwf_run",
    "TrajectoryEnsemble",
]
