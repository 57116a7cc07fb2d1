"""Observables on composite (system x auxiliaries) states.

Observables are evaluated on normalized pure states (quantum trajectories) or
density matrices (dense solver); each produces one or more named columns.
Fidelities are taken against system states or degenerate-subspace projectors
on the *reduced* system state, i.e. auxiliaries are traced out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Observable",
    "OperatorObservable",
    "EnergyObservable",
    "FidelityObservable",
    "ObservableSeries",
    "standard_observables",
]


class Observable:
    name: str

    @property
    def columns(self) -> list[str]:
        return [self.name]

    def measure_state(self, psi: np.ndarray) -> tuple[float, ...]:
        raise NotImplementedError

    def measure_rho(self, rho: np.ndarray) -> tuple[float, ...]:
        raise NotImplementedError


@dataclass
class OperatorObservable(Observable):
    """Expectation of a Hermitian operator on the composite space."""

    name: str
    matrix: sp.csr_matrix

    def measure_state(self, psi):
        return (float(np.vdot(psi, self.matrix @ psi).real),)

    def measure_rho(self, rho):
        return (float(np.einsum("ij,ji->", self.matrix.toarray(), rho).real),)


@dataclass
class EnergyObservable(Observable):
    """System energy mean and second moment from a single matvec.

    For Hermitian ``H``, ``<H^2> = |H psi|^2``, so no squared operator is ever
    materialized.  Emits columns ``(name, name_sq)``.
    """

    name: str
    matrix: sp.csr_matrix  # embedded system Hamiltonian

    @property
    def columns(self):
        return [self.name, f"{self.name}_sq"]

    def measure_state(self, psi):
        hpsi = self.matrix @ psi
        mean = float(np.vdot(psi, hpsi).real)
        second = float(np.vdot(hpsi, hpsi).real)
        return (mean, second)

    def measure_rho(self, rho):
        h = self.matrix
        hrho = h @ rho
        mean = float(np.trace(hrho).real)
        second = float(np.einsum("ij,ji->", h.toarray(), hrho).real)
        return (mean, second)


@dataclass
class FidelityObservable(Observable):
    """Overlap with a system target state or degenerate target subspace.

    ``targets`` holds orthonormal system-basis columns; the fidelity is
    ``tr(P rho_sys)`` with ``P`` the projector onto their span.
    """

    name: str
    targets: np.ndarray  # (d_sys, k)
    system_dim: int
    aux_dim: int

    def measure_state(self, psi):
        block = psi.reshape(self.system_dim, self.aux_dim)
        amps = self.targets.conj().T @ block
        return (float((np.abs(amps) ** 2).sum()),)

    def measure_rho(self, rho):
        d_s, d_a = self.system_dim, self.aux_dim
        r = rho.reshape(d_s, d_a, d_s, d_a)
        rho_sys = np.einsum("iaja->ij", r)
        return (float(np.einsum("ik,ij,jk->", self.targets.conj(), rho_sys, self.targets).real),)


@dataclass
class ObservableSeries:
    """Per-time observable values on a strictly increasing grid."""

    t_grid: np.ndarray
    data: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        self.t_grid = t


def _project_targets(problem, targets: np.ndarray) -> np.ndarray:
    full = 2**problem.n_sites
    targets = np.atleast_2d(np.asarray(targets, dtype=complex))
    if targets.shape[0] != full and targets.shape[0] != problem.system_dim:
        targets = targets.T
    if targets.shape[0] == full and problem.system_dim != full:
        targets = targets[problem.system_states, :]
        norms = np.linalg.norm(targets, axis=0)
        if np.any(norms < 1 - 1e-9):
            raise ValueError("fidelity target has support outside the kept system basis")
        targets = targets / norms
    return targets


def standard_observables(problem, h_s=None, fidelity_targets=None, aux_populations=False):
    """The bundle used by the runners: excitation number, energy, fidelities.

    ``fidelity_targets`` maps column names to system-basis vectors or
    subspace matrices (columns).
    """
    obs: list[Observable] = [OperatorObservable("number", problem.system_number_op())]
    if h_s is not None:
        obs.append(EnergyObservable("energy", problem.embed_system(h_s)))
    if fidelity_targets:
        d_a = problem.dim // problem.system_dim
        for name, vecs in fidelity_targets.items():
            t = _project_targets(problem, vecs)
            obs.append(FidelityObservable(name, t, problem.system_dim, d_a))
    if aux_populations:
        for a, spec in enumerate(problem.aux_specs):
            for level in problem.aux_levels[a]:
                obs.append(
                    OperatorObservable(f"aux{a}_{spec.kind}_pop_{level}", problem.aux_population(a, level))
                )
    return obs
