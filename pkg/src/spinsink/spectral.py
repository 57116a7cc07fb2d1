"""Sector-resolved exact diagonalization and frequency-resolved jump operators.

Everything here is dense-diagonalization territory: the target scale is a few
thousand basis states per run, matching the small systems that the composite
open-system simulations can handle anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattices import hermiticity_defect

__all__ = [
    "EigenDecomposition",
    "FrequencyResolvedJump",
    "diagonalize",
    "frequency_resolve",
    "rotating_energy",
    "select_filling",
]


@dataclass
class EigenDecomposition:
    """Eigenvalues/eigenvectors of a Hermitian operator, optionally by sector.

    States are columns of ``states``; ``sectors[k]`` is the integer filling of
    eigenstate ``k`` (present only when a number operator was supplied).
    Entries are ordered by (sector, energy), plain energy otherwise.
    """

    energies: np.ndarray
    states: np.ndarray
    sectors: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def sector_labels(self) -> np.ndarray:
        if self.sectors is None:
            raise ValueError("decomposition carries no sector information")
        return np.unique(self.sectors)

    def sector_indices(self, n: int) -> np.ndarray:
        if self.sectors is None:
            raise ValueError("decomposition carries no sector information")
        return np.flatnonzero(self.sectors == n)

    def sector_minima(self) -> dict[int, float]:
        """Ground energy of every filling sector."""
        return {int(n): self.energies[self.sector_indices(n)].min() for n in self.sector_labels()}

    def sector_ground_states(self, n: int, degeneracy_tol: float | None = None) -> tuple[float, np.ndarray]:
        """Ground energy of sector ``n`` and the (possibly degenerate) states.

        Returns ``(energy, states)`` where ``states`` has one column per
        ground state within ``degeneracy_tol`` of the sector minimum.
        """
        idx = self.sector_indices(n)
        e = self.energies[idx]
        e0 = e.min()
        if degeneracy_tol is None:
            spread = self.energies.max() - self.energies.min()
            degeneracy_tol = 1e-8 * max(1.0, spread)
        keep = idx[e <= e0 + degeneracy_tol]
        return e0, self.states[:, keep]

    def ground_state_projector(self, n: int, degeneracy_tol: float | None = None) -> np.ndarray:
        _, vecs = self.sector_ground_states(n, degeneracy_tol)
        return vecs @ vecs.conj().T


@dataclass
class FrequencyResolvedJump:
    """Bohr-frequency-resolved pieces of a raising (or lowering) operator.

    ``blocks[k]`` collects the matrix elements ``<l|S|l'>`` with
    ``l - l' = frequencies[k]`` (within ``eps_omega``), expressed back in the
    computational basis.  Summing all blocks reconstructs the input operator.
    """

    frequencies: np.ndarray
    blocks: list[sp.csr_matrix]
    eps_omega: float

    def reconstruct(self) -> sp.csr_matrix:
        out = self.blocks[0].copy()
        for b in self.blocks[1:]:
            out = out + b
        return out


def diagonalize(
    h: sp.spmatrix,
    number_op: sp.spmatrix | None = None,
    hermiticity_tol: float = 1e-12,
    commutator_tol: float = 1e-10,
) -> EigenDecomposition:
    """Full dense spectrum of ``h``; block-diagonalized per filling sector.

    When ``number_op`` (diagonal, integer spectrum) is given, ``h`` must
    commute with it; the Hamiltonian is then diagonalized independently in
    each sector and eigenstates are tagged with their filling.
    """
    if hermiticity_defect(h) > hermiticity_tol:
        raise ValueError("operator is not Hermitian within tolerance")
    if number_op is None:
        energies, states = np.linalg.eigh(h.toarray())
        return EigenDecomposition(energies, states, None)

    n_diag = number_op.diagonal()
    if sp.issparse(number_op) and abs(number_op - sp.diags(n_diag)).max() > 1e-12:
        raise ValueError("number operator must be diagonal in the computational basis")
    if np.abs(n_diag.imag).max(initial=0.0) > 1e-12:
        raise ValueError("number operator must be real")
    n_int = np.rint(n_diag.real).astype(int)
    if np.abs(n_diag.real - n_int).max() > 1e-9:
        raise ValueError("number operator must have integer spectrum")

    comm = h @ number_op - number_op @ h
    scale = max(np.abs(h.tocoo().data).max(initial=0.0), 1.0)
    if comm.nnz and np.abs(comm.tocoo().data).max() > commutator_tol * scale:
        raise ValueError("Hamiltonian does not commute with the number operator")

    dim = h.shape[0]
    energies = np.empty(dim)
    states = np.zeros((dim, dim), dtype=complex)
    sectors = np.empty(dim, dtype=int)
    h = h.tocsr()
    pos = 0
    for n in np.unique(n_int):
        idx = np.flatnonzero(n_int == n)
        block = h[np.ix_(idx, idx)].toarray()
        e, v = np.linalg.eigh(block)
        k = len(idx)
        energies[pos : pos + k] = e
        states[np.ix_(idx, np.arange(pos, pos + k))] = v
        sectors[pos : pos + k] = n
        pos += k
    return EigenDecomposition(energies, states, sectors)


def frequency_resolve(
    s_op: sp.spmatrix,
    eig: EigenDecomposition,
    eps_omega: float | None = None,
    drop_tol: float = 1e-12,
) -> FrequencyResolvedJump:
    """Group the eigenbasis matrix elements of ``s_op`` by Bohr frequency.

    Elements ``<l|s_op|l'>`` with ``|element| < drop_tol`` are discarded; the
    remaining ones are clustered on ``omega = l - l'`` with tolerance
    ``eps_omega`` (default ``1e-9`` of the spectral width).
    """
    if eps_omega is None:
        spread = eig.energies.max() - eig.energies.min()
        eps_omega = 1e-9 * max(1.0, spread)
    v = eig.states
    m = v.conj().T @ (s_op @ v)
    rows, cols = np.nonzero(np.abs(m) >= drop_tol)
    omegas = eig.energies[rows] - eig.energies[cols]
    order = np.argsort(omegas, kind="stable")
    rows, cols, omegas = rows[order], cols[order], omegas[order]

    freqs = []
    blocks = []
    start = 0
    for stop in range(1, len(omegas) + 1):
        if stop == len(omegas) or omegas[stop] - omegas[stop - 1] > eps_omega:
            sel = slice(start, stop)
            freqs.append(omegas[sel].mean())
            mb = sp.coo_matrix(
                (m[rows[sel], cols[sel]], (rows[sel], cols[sel])),
                shape=m.shape,
            )
            op = v @ (mb @ v.conj().T)
            op[np.abs(op) < drop_tol * 1e-2] = 0.0
            blocks.append(sp.csr_matrix(op))
            start = stop
    return FrequencyResolvedJump(np.asarray(freqs), blocks, eps_omega)


def rotating_energy(eig: EigenDecomposition, omega_c: float) -> list[tuple[int, float, float]]:
    """Rotating-frame energies ``E_rot = lambda - n * omega_c`` per eigenstate."""
    if eig.sectors is None:
        raise ValueError("rotating energies need sector labels")
    return [
        (int(n), float(lam), float(lam - n * omega_c))
        for n, lam in zip(eig.sectors, eig.energies)
    ]


def select_filling(eig: EigenDecomposition, omega_c: float) -> int:
    """Filling that minimizes the tilted sector ground energy.

    ``n* = argmin_n (lambda_n - n * omega_c)`` over sector minima; exact ties
    resolve toward the smaller filling.
    """
    minima = eig.sector_minima()
    ns = sorted(minima)
    tilted = [minima[n] - n * omega_c for n in ns]
    return int(ns[int(np.argmin(tilted))])
