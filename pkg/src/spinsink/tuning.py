"""Bayesian tuning of auxiliary parameters against a preparation objective.

A Gaussian-process surrogate (Matern-5/2 kernel with fitted observation
noise) and expected-improvement acquisition search the parameter box, seeded
by a Latin-hypercube design.  Objectives are deterministic given (point,
seed): trajectory-based objectives fix their simulation seed per candidate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

__all__ = ["OptimizationProblem", "OptimizationResult", "optimize_params"]

DEFAULT_BOUNDS = {"J_over_V": (0.0, 0.1), "Omega_over_V": (0.0, 0.1), "gamma_over_V": (0.0, 0.1)}


@dataclass
class OptimizationProblem:
    """Maximization problem over an open-low, closed-high box.

    ``objective(params: dict) -> float``; failures (exceptions) are recorded
    as a penalized value and the search continues.  ``bounds`` maps parameter
    names to ``(low, high)`` with ``low`` excluded (points are sampled in
    ``(low, high]``).
    """

    objective: callable
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    budget: int = 100
    initial_design: int = 10
    seed: int = 0
    penalty: float = -1.0

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if not np.isfinite([lo, hi]).all() or hi <= lo:
                raise ValueError(f"invalid bounds for {name}: ({lo}, {hi})")
        if self.budget < self.initial_design:
            raise ValueError("budget must cover the initial design")


@dataclass
class OptimizationResult:
    best_params: dict[str, float]
    best_value: float
    history: list[dict]

    def incumbents(self) -> np.ndarray:
        best = -np.inf
        out = []
        for rec in self.history:
            best = max(best, rec["value"])
            out.append(best)
        return np.asarray(out)


def _unit_to_box(u, bounds):
    # open at the lower edge: map [0,1) -> (lo, hi]
    out = {}
    for uk, (name, (lo, hi)) in zip(u, bounds.items()):
        out[name] = hi - (hi - lo) * uk * (1.0 - 1e-12)
    return out


def _evaluate(problem, params):
    try:
        val = float(problem.objective(params))
        if not np.isfinite(val):
            raise ValueError("objective returned a non-finite value")
        return val, None
    except Exception as exc:  # noqa: BLE001 - recorded, optimization continues
        return problem.penalty, str(exc)


def optimize_params(problem: OptimizationProblem) -> OptimizationResult:
    """Latin-hypercube design + GP/expected-improvement maximization.

    Reruns with the same seed reproduce the identical evaluation sequence.
    """
    names = list(problem.bounds)
    d = len(names)
    rng = np.random.default_rng(problem.seed)
    sampler = qmc.LatinHypercube(d=d, seed=problem.seed)
    n_init = min(problem.initial_design, problem.budget)
    units = list(sampler.random(n_init))

    xs, ys, history = [], [], []

    def run_point(u):
        params = _unit_to_box(u, problem.bounds)
        val, err = _evaluate(problem, params)
        xs.append(np.asarray(u, dtype=float))
        ys.append(val)
        rec = {"iteration": len(history), "params": params, "value": val}
        if err:
            rec["error"] = err
        history.append(rec)

    for u in units:
        run_point(u)

    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * Matern(
        length_scale=0.3 * np.ones(d), length_scale_bounds=(1e-2, 10.0), nu=2.5
    ) + WhiteKernel(noise_level=1e-6, noise_level_bounds=(1e-12, 1e-1))

    n_candidates = 2048
    while len(history) < problem.budget:
        x_arr = np.vstack(xs)
        y_arr = np.asarray(ys)
        y_mean, y_std = y_arr.mean(), max(y_arr.std(), 1e-12)
        gp = GaussianProcessRegressor(kernel=kernel, normalize_y=False, alpha=1e-10, random_state=problem.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gp.fit(x_arr, (y_arr - y_mean) / y_std)
        cand = rng.random((n_candidates, d))
        mu, sigma = gp.predict(cand, return_std=True)
        best = ((y_arr - y_mean) / y_std).max()
        sigma = np.maximum(sigma, 1e-12)
        z = (mu - best) / sigma
        ei = sigma * (z * norm.cdf(z) + norm.pdf(z))
        run_point(cand[int(np.argmax(ei))])

    k = int(np.argmax(ys))
    return OptimizationResult(_unit_to_box(xs[k], problem.bounds), ys[k], history)
