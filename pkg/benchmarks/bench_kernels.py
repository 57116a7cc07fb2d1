"""Benchmark the compiled kernel core against the pure-Python fallback.

Run with the package installed:

    python benchmarks/bench_kernels.py

Measures the fused Hamiltonian application and a short MCWF integration on a
representative composite problem (six-site dipolar ring + source + sink,
rastered detunings), for both kernel backends.
"""

import os
import sys
import time

import numpy as np


def build_problem():
    from spinsink import lattices as lat
    from spinsink.open_system import AuxiliarySpec, build_reduced_model
    from spinsink.schedules import SawtoothSchedule, ground_state_protocol

    v = 20.0
    h_s = lat.build_xy(lat.dipolar_couplings(lat.hexagon(), v))
    prot = ground_state_protocol((-55.0, 40.0), -41.0, 200.0, mode="raster-single")
    src = AuxiliarySpec("source", exchange=1.0, drive=0.12, gamma=0.65,
                        detuning=prot.sources[0], weights=[1, 0, 0, 0, 0, 0])
    snk = AuxiliarySpec("sink", exchange=1.0, drive=0.12, gamma=0.65,
                        detuning=prot.sinks[0], weights=[0, 0, 0, 1, 0, 0])
    return build_reduced_model(h_s, [src, snk])


def bench(force_python: bool):
    env = os.environ.copy()
    if force_python:
        os.environ["SPINSINK_PURE_PYTHON"] = "1"
    else:
        os.environ.pop("SPINSINK_PURE_PYTHON", None)
    for mod in [m for m in list(sys.modules) if m.startswith("spinsink")]:
        del sys.modules[mod]
    import spinsink
    from spinsink.kernels import MCWFIntegrator, TermOperator

    problem = build_problem()
    op = TermOperator(problem.effective_terms(), problem.dim)
    psi = problem.initial_state()

    # fused H_eff(t) @ psi
    out = np.empty_like(psi)
    n_apply = 2000
    t0 = time.perf_counter()
    for k in range(n_apply):
        op.apply(0.01 * k, psi, out)
    dt_apply = (time.perf_counter() - t0) / n_apply

    # short trajectory segment, no jumps
    integ = MCWFIntegrator(op, rtol=1e-6, atol=1e-9)
    t0 = time.perf_counter()
    integ.integrate(psi, 0.0, 2.0, -1.0, None)
    dt_seg = time.perf_counter() - t0
    steps = integ.stats["steps"] + integ.stats["rejected"]

    os.environ.clear()
    os.environ.update(env)
    return spinsink.kernel_backend, dt_apply, dt_seg, steps


def main():
    rows = []
    for force in (False, True):
        backend, dt_apply, dt_seg, steps = bench(force)
        rows.append((backend, dt_apply, dt_seg, steps))
        print(f"{backend:>9s}:  apply = {dt_apply * 1e6:8.1f} us   "
              f"2-time-unit segment = {dt_seg * 1e3:8.1f} ms  ({steps} steps)")
    if len({r[0] for r in rows}) == 2:
        print(f"speedup: apply x{rows[1][1] / rows[0][1]:.1f}, segment x{rows[1][2] / rows[0][2]:.1f}")
    else:
        print("compiled core unavailable; both runs used the python fallback")


if __name__ == "__main__":
    main()
