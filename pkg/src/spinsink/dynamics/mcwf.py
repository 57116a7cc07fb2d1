"""Monte Carlo wave-function (quantum trajectory) ensembles.

First-order unraveling: between jumps the unnormalized state evolves under
``H_eff = H - (i/2) sum L^dag L``; a jump fires when the squared norm crosses
a uniform random threshold, the channel is drawn proportionally to
``|L_k psi|^2``, and the state is renormalized.  Per-trajectory RNG streams
derive deterministically from ``(master_seed, trajectory_index)``, and
ensemble reduction is performed in trajectory order, so results are
bit-reproducible for a fixed backend regardless of worker scheduling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..kernels import STATUS_JUMP
from ..measure import Observable
from .backends import make_backend, select_backend_name

__all__ = ["mcwf_run", "TrajectoryEnsemble"]


@dataclass
class TrajectoryEnsemble:
    """Per-time trajectory statistics for a set of observable columns.

    ``values`` has shape ``(n_traj, n_times, n_columns)``; ``mean`` /
    ``std`` (sample, ddof=1) / ``stderr = std / sqrt(n_traj)`` reduce over
    trajectories.
    """

    t_grid: np.ndarray
    columns: list[str]
    values: np.ndarray
    master_seed: int
    backend: str
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.values.shape[0]

    def _col(self, name):
        return self.columns.index(name)

    def mean(self, column: str) -> np.ndarray:
        return self.values[:, :, self._col(column)].mean(axis=0)

    def std(self, column: str) -> np.ndarray:
        if self.n_traj < 2:
            return np.zeros(self.values.shape[1])
        return self.values[:, :, self._col(column)].std(axis=0, ddof=1)

    def stderr(self, column: str) -> np.ndarray:
        return self.std(column) / np.sqrt(self.n_traj)

    def quantum_energy_std(self, mean_col="energy", sq_col="energy_sq") -> np.ndarray:
        """Energy standard deviation of the ensemble-averaged state."""
        e = self.mean(mean_col)
        e2 = self.mean(sq_col)
        return np.sqrt(np.maximum(e2 - e**2, 0.0))


def _trajectory(problem, backend, psi0, t_grid, observables, seed_pair, norm_floor=1e-14):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_pair)))
    psi = psi0.astype(complex, copy=True)
    n_cols = sum(len(o.columns) for o in observables)
    out = np.empty((len(t_grid), n_cols))
    jump_times = []

    def record(k):
        nrm = np.linalg.norm(psi)
        if nrm < norm_floor:
            raise RuntimeError("trajectory state vanished")
        normed = psi / nrm
        vals = []
        for obs in observables:
            vals.extend(obs.measure_state(normed))
        out[k] = vals

    jumps = problem.jumps
    jump_const = [j.at(0.0) if j.is_constant else None for j in jumps]
    record(0)
    r = rng.random()
    t = t_grid[0]
    for k, t_next in enumerate(t_grid[1:], start=1):
        while True:
            status, t_reached, psi = backend.advance(psi, t, t_next, r)
            t = t_reached
            if status != STATUS_JUMP:
                break
            weights = np.empty(len(jumps))
            applied = []
            for i, jump in enumerate(jumps):
                l_mat = jump_const[i] if jump_const[i] is not None else jump.at(t)
                lpsi = l_mat @ psi
                applied.append(lpsi)
                weights[i] = np.vdot(lpsi, lpsi).real
            total = weights.sum()
            if total <= norm_floor:
                raise RuntimeError("all jump channels vanished at a jump event")
            channel = int(np.searchsorted(np.cumsum(weights / total), rng.random()))
            channel = min(channel, len(jumps) - 1)
            psi = applied[channel] / np.sqrt(weights[channel])
            jump_times.append((t, channel))
            r = rng.random()
        record(k)
    return out, jump_times


def _worker(args):
    (problem, backend_name, rtol, atol, norm_tol, krylov_step, psi0, t_grid, observables, master_seed, indices) = args
    if "OMP_NUM_THREADS" not in os.environ:
        # trajectory workers are already process-parallel
        os.environ["OMP_NUM_THREADS"] = "1"
    backend = make_backend(problem, backend_name, rtol, atol, norm_tol, krylov_step)
    results = []
    for idx in indices:
        vals, jt = _trajectory(problem, backend, psi0, t_grid, observables, (master_seed, idx))
        results.append((idx, vals, len(jt)))
    return results


def mcwf_run(
    problem,
    psi0: np.ndarray,
    t_grid,
    n_traj: int,
    master_seed: int,
    observables: list[Observable],
    backend: str = "auto",
    rtol: float = 1e-6,
    atol: float = 1e-9,
    norm_tol: float = 1e-10,
    krylov_step: float | None = None,
    n_workers: int | None = None,
    return_jump_times: bool = False,
):
    """Run ``n_traj`` independent trajectories and reduce them in index order.

    ``psi0`` must be normalized.  Parallelism is over trajectories
    (``n_workers`` processes, default = available cores); the reduction uses
    per-trajectory arrays summed in a fixed order, so the output is
    independent of scheduling.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    backend_name = select_backend_name(problem, backend)
    columns = [c for obs in observables for c in obs.columns]
    if n_workers is None:
        n_workers = min(os.cpu_count() or 1, n_traj)
    if return_jump_times:
        n_workers = 1  # jump logs are only collected on the serial path

    all_values = np.empty((n_traj, len(t_grid), len(columns)))
    jump_counts = np.zeros(n_traj, dtype=int)
    jump_log = []

    if n_workers <= 1 or n_traj == 1:
        bk = make_backend(problem, backend_name, rtol, atol, norm_tol, krylov_step)
        for idx in range(n_traj):
            vals, jt = _trajectory(problem, bk, psi0, t_grid, observables, (master_seed, idx))
            all_values[idx] = vals
            jump_counts[idx] = len(jt)
            if return_jump_times:
                jump_log.append(jt)
    else:
        import multiprocessing as mp

        chunks = [list(range(w, n_traj, n_workers)) for w in range(n_workers)]
        args = [
            (problem, backend_name, rtol, atol, norm_tol, krylov_step, psi0, t_grid, observables, master_seed, chunk)
            for chunk in chunks
            if chunk
        ]
        try:
            ctx = mp.get_context("fork")
        except ValueError:
            ctx = mp.get_context("spawn")
        with ctx.Pool(len(args)) as pool:
            for results in pool.map(_worker, args):
                for idx, vals, njumps in results:
                    all_values[idx] = vals
                    jump_counts[idx] = njumps

    ens = TrajectoryEnsemble(
        t_grid,
        columns,
        all_values,
        master_seed,
        backend_name,
        meta={"n_traj": n_traj, "jump_counts": jump_counts, "rtol": rtol, "atol": atol},
    )
    if return_jump_times:
        ens.meta["jump_times"] = jump_log
    return ens
