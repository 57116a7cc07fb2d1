"""Dense density-matrix integration of the Lindblad master equation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..kernels import DOPRI_A, DOPRI_B5, DOPRI_C, DOPRI_ERR
from ..measure import Observable, ObservableSeries

__all__ = ["lindblad_evolve", "LindbladResult"]

DENSITY_ENTRY_GUARD = 4_000_000


@dataclass
class LindbladResult:
    series: ObservableSeries
    rho_final: np.ndarray
    trace_drift: float
    stats: dict = field(default_factory=dict)


class _RhsCache:
    """Hamiltonian / jump assembly with constant parts precomputed.

    Time-dependent jumps are kept as stacked dense term arrays so that
    ``L(t)`` assembly is a single tensor contraction per evaluation.
    """

    def __init__(self, problem):
        from ..coefficients import Constant, ModulatedPhase, ScheduleCoefficient
        from ..kernels import TermOperator, _eval_coeff

        self.problem = problem
        self.h_op = TermOperator(problem.hamiltonian, problem.dim)
        self.h_const = self.h_op.matrix_at(0.0) if self.h_op.is_constant else None
        self._eval = _eval_coeff
        self.jumps = []
        for jump in problem.jumps:
            if jump.is_constant:
                l_mat = jump.at(0.0)
                self.jumps.append((l_mat, (l_mat.getH() @ l_mat).tocsr(), None))
            else:
                stack = np.stack([m.toarray() for m, _ in jump.terms])
                coeffs = [c for _, c in jump.terms]
                self.jumps.append((None, None, (stack, coeffs)))

    def _l_at(self, td, t):
        stack, coeffs = td
        c = np.array([coeff(t) for coeff in coeffs])
        return np.tensordot(c, stack, axes=1)

    def __call__(self, t, rho):
        h = self.h_const if self.h_const is not None else self.h_op.matrix_at(t)
        hrho = h @ rho
        out = -1j * (hrho - hrho.conj().T)
        for l_mat, m_mat, td in self.jumps:
            if td is not None:
                l_dense = self._l_at(td, t)
                lrho = l_dense @ rho
                out += lrho @ l_dense.conj().T
                m_rho = l_dense.conj().T @ lrho
                out -= 0.5 * (m_rho + m_rho.conj().T)
                continue
            lrho = l_mat @ rho
            # L rho L^dag == (L (L rho)^dag)^dag keeps both products sparse @ dense
            out += (l_mat @ lrho.conj().T).conj().T
            mrho = m_mat @ rho
            out -= 0.5 * (mrho + mrho.conj().T)
        return out


def lindblad_evolve(
    problem,
    rho0: np.ndarray,
    t_grid,
    observables: list[Observable] = (),
    rtol: float = 1e-8,
    atol: float = 1e-10,
    h0: float | None = None,
    max_steps: int = 20_000_000,
) -> LindbladResult:
    """Integrate ``drho/dt = -i[H(t), rho] + sum_k D[L_k] rho`` adaptively.

    The state is Hermitian-symmetrized after every accepted step; the trace is
    monitored (never renormalized) and its maximal drift is reported.
    Observables are recorded at every grid point, including ``t_grid[0]``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dim = problem.dim
    if rho0.shape != (dim, dim):
        raise ValueError("initial state has the wrong shape")
    if dim * dim > DENSITY_ENTRY_GUARD:
        raise ValueError(
            f"density matrix would hold {dim * dim} entries; use trajectories instead"
        )
    tr = np.trace(rho0)
    if abs(tr - 1.0) > 1e-9:
        raise ValueError("initial state must have unit trace")
    evals = np.linalg.eigvalsh(rho0)
    if evals.min() < -1e-9:
        raise ValueError("initial state must be positive semidefinite")

    rhs = _RhsCache(problem)
    rho = rho0.astype(complex, copy=True)
    t = t_grid[0]
    h = h0 if h0 else min(1e-4, (t_grid[-1] - t_grid[0]) / 100 + 1e-30)
    drift = abs(np.trace(rho).real - 1.0)
    columns = [c for obs in observables for c in obs.columns]
    records = {c: [] for c in columns}

    def record(r):
        for obs in observables:
            for col, val in zip(obs.columns, obs.measure_rho(r)):
                records[col].append(val)

    record(rho)
    nsteps = nrej = 0
    k1 = rhs(t, rho)
    for t_next in t_grid[1:]:
        while t < t_next - 1e-14 * max(1.0, abs(t_next)):
            h = min(h, t_next - t)
            ks = [k1]
            for i, arow in enumerate(DOPRI_A):
                yi = rho + h * sum(a * k for a, k in zip(arow, ks) if a != 0.0)
                ks.append(rhs(t + DOPRI_C[i + 1] * h, yi))
            y5 = rho + h * sum(b * k for b, k in zip(DOPRI_B5, ks) if b != 0.0)
            err = h * sum(e * k for e, k in zip(DOPRI_ERR, ks) if e != 0.0)
            sc = atol + rtol * np.maximum(np.abs(rho), np.abs(y5))
            err_norm = float(np.sqrt(np.mean(np.abs(err / sc) ** 2)))
            if nsteps + nrej > max_steps:
                raise RuntimeError("dense integrator exceeded the step budget")
            if err_norm > 1.0:
                nrej += 1
                h *= max(0.2, 0.9 * err_norm**-0.2)
                if h < 1e-15 * max(1.0, abs(t)):
                    raise RuntimeError("step size underflow in the dense integrator")
                k1 = ks[0]
                continue
            nsteps += 1
            t += h
            rho = 0.5 * (y5 + y5.conj().T)
            drift = max(drift, abs(np.trace(rho).real - 1.0))
            k1 = rhs(t, rho)
            h *= min(5.0, max(0.2, 0.9 * err_norm**-0.2)) if err_norm > 0 else 5.0
        record(rho)
        t = t_next
    series = ObservableSeries(t_grid, {c: np.asarray(v) for c, v in records.items()})
    return LindbladResult(series, rho, drift, {"steps": nsteps, "rejected": nrej})
