"""Steady states via the null space of the vectorized Liouvillian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["steady_state", "SteadyStateResult", "liouvillian_matrix"]


@dataclass
class SteadyStateResult:
    rho: np.ndarray | None
    degenerate: bool
    null_basis: list[np.ndarray]
    residual: float
    singular_values: np.ndarray


def liouvillian_matrix(problem, t: float = 0.0) -> sp.csr_matrix:
    """Column-stacking superoperator of the (frozen-time) generator."""
    dim = problem.dim
    eye = sp.identity(dim, format="csr", dtype=complex)
    h = problem.hamiltonian_at(t)
    out = -1j * (sp.kron(eye, h, format="csr") - sp.kron(h.T, eye, format="csr"))
    for jump in problem.jumps:
        l_mat = jump.at(t)
        m_mat = (l_mat.getH() @ l_mat).tocsr()
        out = out + sp.kron(l_mat.conj(), l_mat, format="csr")
        out = out - 0.5 * (sp.kron(eye, m_mat, format="csr") + sp.kron(m_mat.T, eye, format="csr"))
    return out.tocsr()


def steady_state(problem, null_tol: float = 1e-9, max_dim: int = 150) -> SteadyStateResult:
    """Solve ``L[rho] = 0`` with trace normalization.

    The full Liouvillian is built and its null space obtained by dense SVD
    (singular values below ``null_tol`` relative to the largest).  A unique
    null vector is Hermitized, trace-normalized and residual-checked; a
    multidimensional null space is returned as a basis with the degeneracy
    flag set.
    """
    if not problem.is_constant:
        raise ValueError("steady states need a time-independent problem")
    if problem.dim > max_dim:
        raise ValueError(f"dimension {problem.dim} exceeds the dense-Liouvillian guard {max_dim}")
    liou = liouvillian_matrix(problem).toarray()
    _, s, vh = np.linalg.svd(liou)
    scale = s[0] if s[0] > 0 else 1.0
    null_idx = np.flatnonzero(s <= null_tol * scale)
    dim = problem.dim
    basis = [vh[k].conj().reshape(dim, dim, order="F") for k in null_idx]
    if len(basis) == 0:
        raise RuntimeError("no Liouvillian null vector found; increase null_tol")
    if len(basis) > 1:
        return SteadyStateResult(None, True, basis, float(s[null_idx].max() / scale), s)
    rho = basis[0]
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise RuntimeError("null vector is traceless; the steady state is not unique")
    rho = rho / tr
    resid = np.linalg.norm(liou @ rho.reshape(-1, order="F")) / max(1.0, np.linalg.norm(liou, ord="fro") / dim)
    return SteadyStateResult(rho, False, [rho], float(resid), s)
