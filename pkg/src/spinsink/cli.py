"""Declarative experiment runner.

``spinsink run config.yaml`` drives the full pipeline (model -> spectrum ->
protocol -> evolve/trajectories -> measure); the stages are also exposed as
standalone subcommands operating on the serialized intermediates, and
``spinsink optimize`` runs the auxiliary-parameter search.  Outputs are
deterministic for a fixed (config, seed): rerunning produces byte-identical
CSV files.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 missing
intermediate files.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import lattices, sparseio, spectral
from .measure import standard_observables
from .open_system import AuxiliarySpec, build_effective_model, build_full_model, build_reduced_model
from .schedules import (
    ConstantSchedule,
    SawtoothSchedule,
    excited_window_protocol,
    ground_state_protocol,
    highest_state_protocol,
    schedule_from_csv,
    schedule_to_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_MISSING = 4


class ConfigError(ValueError):
    pass


class MissingIntermediate(FileNotFoundError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "solver", "seed"],
    "properties": {
        "units": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"energy": {"type": "string"}, "note": {"type": "string"}},
        },
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family", "geometry"],
            "properties": {
                "family": {"enum": ["xy", "hofstadter", "ising"]},
                "geometry": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["chain", "hexagon", "torus"]},
                        "n": {"type": "integer", "minimum": 1},
                        "lx": {"type": "integer", "minimum": 2},
                        "ly": {"type": "integer", "minimum": 2},
                    },
                },
                "v_nn": _num,
                "alpha": {"type": ["number", "string"]},
                "field": _num,
                "include_dipolar_tail": {"type": "boolean"},
                "max_filling": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "auxiliaries": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind", "exchange", "drive"],
                "properties": {
                    "kind": {"enum": ["source", "sink"]},
                    "exchange": _nonneg,
                    "drive": _nonneg,
                    "gamma": _nonneg,
                    "big_gamma": _pos,
                    "omega_i": _nonneg,
                    "weights": {"type": "array", "items": _num},
                    "label": {"type": "string"},
                    "detuning": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["protocol", "constant", "sawtooth", "table"]},
                            "value": _num,
                            "minimum": _num,
                            "maximum": _num,
                            "period": _pos,
                            "path": {"type": "string"},
                        },
                    },
                },
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "filling": {"type": "integer", "minimum": 0},
                        "window": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "highest": {"type": "boolean"},
                    },
                },
                "mode": {"enum": ["raster-single", "static-multi"]},
                "duration": _pos,
                "omega_c": _num,
                "spectral_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "raster_period": _pos,
                "n_aux": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["method", "t_max"],
            "properties": {
                "representation": {"enum": ["reduced", "full", "effective"]},
                "frame": {"enum": ["lab", "rotating"]},
                "method": {"enum": ["dense", "trajectories"]},
                "backend": {"enum": ["auto", "rk45", "krylov", "expeig"]},
                "t_max": _pos,
                "n_times": {"type": "integer", "minimum": 2},
                "n_traj": {"type": "integer", "minimum": 1},
                "rtol": _pos,
                "atol": _pos,
                "krylov_step": _pos,
                "n_workers": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "target": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "filling": {"type": "integer", "minimum": 0},
                "eigenstate_index": {"type": ["integer", "null"], "minimum": 0},
                "all_sector_ground_states": {"type": "boolean"},
            },
        },
        "observables": {
            "type": "array",
            "items": {"enum": ["number", "energy", "fidelity", "aux_populations"]},
        },
        "initial_state": {"type": ["string"]},
        "optimize": {
            "type": "object",
            "additionalProperties": False,
            "required": ["objective"],
            "properties": {
                "objective": {"enum": ["steady_state_fidelity", "horizon_fidelity"]},
                "bounds": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                },
                "budget": {"type": "integer", "minimum": 1},
                "initial_design": {"type": "integer", "minimum": 1},
            },
        },
    },
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    import jsonschema

    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message} (at {'/'.join(map(str, exc.path))})") from exc
    return cfg


def _parse_alpha(alpha) -> float:
    if isinstance(alpha, str):
        return float(Fraction(alpha))
    return float(alpha)


def build_system(cfg_model: dict):
    """Returns (h_s, n_sites, geometry-or-None)."""
    geo_cfg = dict(cfg_model["geometry"])
    kind = geo_cfg.pop("kind")
    family = cfg_model["family"]
    if family == "hofstadter":
        if kind != "torus":
            raise ConfigError("hofstadter models require a torus geometry")
        lx, ly = geo_cfg["lx"], geo_cfg["ly"]
        h_s = lattices.build_hofstadter_hardcore(lx, ly, _parse_alpha(cfg_model.get("alpha", 0.0)), cfg_model.get("v_nn", 1.0))
        return h_s, lx * ly, lattices.torus(lx, ly)
    geom = lattices.build_geometry(kind, **geo_cfg)
    couplings = lattices.dipolar_couplings(geom, cfg_model.get("v_nn", 1.0))
    if not cfg_model.get("include_dipolar_tail", True):
        d = geom.distance_matrix()
        couplings = np.where(np.isclose(d, 1.0), couplings, 0.0)
    if family == "xy":
        return lattices.build_xy(couplings), geom.n_sites, geom
    if family == "ising":
        return lattices.build_ising_longitudinal(couplings, cfg_model.get("field", 0.0)), geom.n_sites, geom
    raise ConfigError(f"unknown model family {family!r}")


def compute_eig(cfg, h_s, n_sites):
    return spectral.diagonalize(h_s, lattices.number_operator(n_sites))


def default_omega_c(eig, filling: int) -> float:
    """Midpoint of the tilt interval that selects ``filling`` (sector minima)."""
    minima = eig.sector_minima()
    ns = sorted(minima)
    if filling not in ns:
        raise ConfigError(f"target filling {filling} outside the sector range")
    lo = -np.inf if filling == ns[0] else minima[filling] - minima[filling - 1]
    hi = np.inf if filling == ns[-1] else minima[filling + 1] - minima[filling]
    if not lo < hi:
        raise ConfigError(f"filling {filling} is never selected by the tilt rule")
    if np.isinf(lo) or np.isinf(hi):
        span = eig.energies.max() - eig.energies.min()
        lo = hi - 0.2 * span if np.isinf(lo) else lo
        hi = lo + 0.2 * span if np.isinf(hi) else hi
    return 0.5 * (lo + hi)


def generate_protocol(cfg, eig, s_plus=None):
    """ProtocolSchedules from the config's protocol block."""
    pcfg = cfg.get("protocol")
    if not pcfg:
        return None
    duration = pcfg.get("duration", cfg["solver"]["t_max"])
    target = pcfg.get("target", {})
    if "spectral_range" in pcfg:
        spectrum_range = tuple(pcfg["spectral_range"])
    else:
        from .schedules import default_spectrum_range

        if s_plus is None:
            raise ConfigError("spectral_range must be given explicitly for this model")
        spectrum_range = default_spectrum_range(eig, s_plus)
    mode = pcfg.get("mode", "raster-single")
    n_aux = pcfg.get("n_aux", 1)
    period = pcfg.get("raster_period")
    if "window" in target:
        lo, hi = target["window"]
        return excited_window_protocol(lo, hi, spectrum_range, duration, raster_period=period)
    if target.get("highest"):
        omega_c = pcfg.get("omega_c")
        if omega_c is None:
            raise ConfigError("highest-state protocols need an explicit omega_c")
        return highest_state_protocol(spectrum_range, omega_c, duration, mode, n_aux, period)
    omega_c = pcfg.get("omega_c")
    if omega_c is None:
        omega_c = default_omega_c(eig, target.get("filling", 0))
    return ground_state_protocol(spectrum_range, omega_c, duration, mode, n_aux, period)


def _uniform_splus(n_sites):
    op = None
    for i in range(n_sites):
        r = lattices.raising_operator(n_sites, i)
        op = r if op is None else op + r
    return op


def resolve_detunings(cfg, protocol, out_dir: Path | None = None, replay: bool = False):
    """Per-auxiliary schedules; protocol-driven ones consume the generated bands.

    With ``replay=True`` every schedule is read back from the stage CSV files
    (written by the protocol stage) so downstream stages see bit-identical
    detunings.
    """
    aux_cfgs = cfg.get("auxiliaries", [])
    if replay:
        if out_dir is None:
            raise ValueError("replay needs the output directory")
        replayed = []
        for k in range(len(aux_cfgs)):
            path = out_dir / f"schedule_aux{k}.csv"
            if not path.exists():
                raise MissingIntermediate(f"missing schedule file {path}; run the protocol stage first")
            replayed.append(schedule_from_csv(path))
        return replayed
    schedules = []
    sources = list(protocol.sources) if protocol else []
    sinks = list(protocol.sinks) if protocol else []
    for k, acfg in enumerate(aux_cfgs):
        det = acfg.get("detuning", {"kind": "protocol"})
        kind = det.get("kind", "protocol")
        if kind == "protocol":
            pool = sources if acfg["kind"] == "source" else sinks
            if not pool:
                raise ConfigError(
                    f"auxiliary {k} ({acfg['kind']}) asks for a protocol detuning but none are left; "
                    "check protocol mode/n_aux against the auxiliary list"
                )
            schedules.append(pool.pop(0))
        elif kind == "constant":
            schedules.append(ConstantSchedule(det["value"]))
        elif kind == "sawtooth":
            duration = cfg.get("protocol", {}).get("duration", cfg["solver"]["t_max"])
            schedules.append(
                SawtoothSchedule(det["minimum"], det["maximum"], det.get("period", duration / 10.0))
            )
        elif kind == "table":
            schedules.append(schedule_from_csv(det["path"]))
        else:
            raise ConfigError(f"unknown detuning kind {kind!r}")
    return schedules


def build_auxiliaries(cfg, schedules):
    specs = []
    for acfg, sched in zip(cfg.get("auxiliaries", []), schedules):
        specs.append(
            AuxiliarySpec(
                kind=acfg["kind"],
                exchange=acfg["exchange"],
                drive=acfg["drive"],
                gamma=acfg.get("gamma"),
                big_gamma=acfg.get("big_gamma"),
                omega_i=acfg.get("omega_i"),
                weights=acfg.get("weights"),
                detuning=sched,
                label=acfg.get("label", ""),
            )
        )
    return specs


def build_problem(cfg, h_s, aux_specs, eig=None):
    scfg = cfg["solver"]
    rep = scfg.get("representation", "reduced")
    frame = scfg.get("frame", "lab")
    max_filling = cfg["model"].get("max_filling")
    if rep == "reduced":
        return build_reduced_model(h_s, aux_specs, frame=frame, eig=eig, max_filling=max_filling)
    if rep == "full":
        return build_full_model(h_s, aux_specs, frame=frame, eig=eig, max_filling=max_filling)
    if rep == "effective":
        return build_effective_model(h_s, eig, aux_specs)
    raise ConfigError(f"unknown representation {rep!r}")


def fidelity_targets(cfg, eig):
    tcfg = cfg.get("target", {})
    targets = {}
    if tcfg.get("all_sector_ground_states") or "filling" in tcfg:
        fillings = (
            sorted(int(n) for n in eig.sector_labels())
            if tcfg.get("all_sector_ground_states")
            else [tcfg["filling"]]
        )
        for n in fillings:
            _, vecs = eig.sector_ground_states(n)
            targets[f"fid_n{n}"] = vecs
    if tcfg.get("eigenstate_index") is not None:
        k = tcfg["eigenstate_index"]
        targets[f"fid_eig{k}"] = eig.states[:, [k]]
    return targets


# ---------------------------------------------------------------------------
# stages


def stage_spectrum(cfg, out: Path):
    h_s, n_sites, _ = build_system(cfg["model"])
    eig = compute_eig(cfg, h_s, n_sites)
    out.mkdir(parents=True, exist_ok=True)
    sparseio.write_spectrum_csv(out / "spectrum.csv", eig)
    return eig


def stage_protocol(cfg, out: Path):
    h_s, n_sites, _ = build_system(cfg["model"])
    eig = compute_eig(cfg, h_s, n_sites)
    protocol = generate_protocol(cfg, eig, _uniform_splus(n_sites))
    schedules = resolve_detunings(cfg, protocol)
    duration = cfg.get("protocol", {}).get("duration", cfg["solver"]["t_max"])
    out.mkdir(parents=True, exist_ok=True)
    for k, sched in enumerate(schedules):
        schedule_to_csv(sched, duration, out / f"schedule_aux{k}.csv")
    return schedules


def _prepare_run(cfg, out: Path):
    h_s, n_sites, _ = build_system(cfg["model"])
    eig = compute_eig(cfg, h_s, n_sites)
    schedules = resolve_detunings(cfg, None, out_dir=out, replay=True)
    aux = build_auxiliaries(cfg, schedules)
    need_eig = cfg["solver"].get("representation") == "effective" or cfg["solver"].get("frame") == "rotating"
    problem = build_problem(cfg, h_s, aux, eig=eig if need_eig else None)
    names = cfg.get("observables", ["number", "energy", "fidelity"])
    targets = fidelity_targets(cfg, eig) if "fidelity" in names else None
    obs = standard_observables(
        problem,
        h_s if "energy" in names else None,
        fidelity_targets=targets,
        aux_populations="aux_populations" in names,
    )
    if "number" not in names:
        obs = [o for o in obs if o.name != "number"]
    scfg = cfg["solver"]
    t_grid = np.linspace(0.0, scfg["t_max"], scfg.get("n_times", 101))
    init = cfg.get("initial_state", "vacuum")
    if isinstance(init, str) and init != "vacuum":
        if set(init) <= {"0", "1"} and len(init) == problem.n_sites:
            init = int(init, 2)  # rightmost character is site 0
        else:
            raise ConfigError(f"initial_state must be 'vacuum' or a {problem.n_sites}-char bitstring")
    psi0 = problem.initial_state(init)
    with open(out / "problem_summary.txt", "w") as fh:
        fh.write(problem.summary() + "\n")
    return problem, h_s, eig, obs, t_grid, psi0


def stage_evolve(cfg, out: Path):
    from .dynamics import lindblad_evolve

    out.mkdir(parents=True, exist_ok=True)
    problem, h_s, eig, obs, t_grid, psi0 = _prepare_run(cfg, out)
    scfg = cfg["solver"]
    rho0 = np.outer(psi0, psi0.conj())
    res = lindblad_evolve(
        problem, rho0, t_grid, observables=obs,
        rtol=scfg.get("rtol", 1e-8), atol=scfg.get("atol", 1e-10),
    )
    cols = {
        name: (vals, np.zeros_like(vals), np.zeros_like(vals))
        for name, vals in res.series.data.items()
    }
    sparseio.write_series_csv(out / "observables.csv", t_grid, cols)
    sparseio.write_metadata(
        out / "metadata.json", cfg,
        {"method": "dense", "trace_drift": res.trace_drift, "steps": res.stats["steps"]},
    )
    return res


def stage_trajectories(cfg, out: Path):
    from .dynamics import mcwf_run

    out.mkdir(parents=True, exist_ok=True)
    problem, h_s, eig, obs, t_grid, psi0 = _prepare_run(cfg, out)
    scfg = cfg["solver"]
    ens = mcwf_run(
        problem, psi0, t_grid,
        n_traj=scfg.get("n_traj", 500),
        master_seed=cfg["seed"],
        observables=obs,
        backend=scfg.get("backend", "auto"),
        rtol=scfg.get("rtol", 1e-6),
        atol=scfg.get("atol", 1e-9),
        krylov_step=scfg.get("krylov_step"),
        n_workers=scfg.get("n_workers"),
    )
    cols = {name: (ens.mean(name), ens.std(name), ens.stderr(name)) for name in ens.columns}
    sparseio.write_series_csv(out / "observables.csv", t_grid, cols)
    sparseio.write_metadata(
        out / "metadata.json", cfg,
        {"method": "trajectories", "n_traj": ens.n_traj, "backend": ens.backend,
         "mean_jumps": float(np.mean(ens.meta["jump_counts"]))},
    )
    return ens


def stage_optimize(cfg, out: Path):
    from .tuning import OptimizationProblem, optimize_params

    ocfg = cfg.get("optimize")
    if not ocfg:
        raise ConfigError("config has no optimize block")
    out.mkdir(parents=True, exist_ok=True)
    h_s, n_sites, _ = build_system(cfg["model"])
    eig = compute_eig(cfg, h_s, n_sites)
    targets = fidelity_targets(cfg, eig)
    if not targets:
        raise ConfigError("optimization needs a fidelity target block")
    target_vecs = next(iter(targets.values()))
    v_nn = cfg["model"].get("v_nn", 1.0)
    protocol = generate_protocol(cfg, eig, _uniform_splus(n_sites))
    base_schedules = resolve_detunings(cfg, protocol)

    def objective(params):
        aux = build_auxiliaries(cfg, base_schedules)
        for spec in aux:
            spec.exchange = params["J_over_V"] * abs(v_nn)
            spec.drive = params["Omega_over_V"] * abs(v_nn)
            spec.gamma = params["gamma_over_V"] * abs(v_nn)
        problem = build_problem(cfg, h_s, aux, eig=eig)
        if ocfg["objective"] == "steady_state_fidelity":
            from .dynamics import steady_state

            ss = steady_state(problem)
            if ss.degenerate:
                raise RuntimeError("degenerate steady state")
            rho_sys = problem.partial_trace_aux(ss.rho)
            t = target_vecs
            return float(np.einsum("ik,ij,jk->", t.conj(), rho_sys, t).real)
        from .dynamics import lindblad_evolve

        obs = standard_observables(problem, fidelity_targets={"fid": target_vecs})
        psi0 = problem.initial_state(cfg.get("initial_state", "vacuum"))
        t_grid = np.linspace(0.0, cfg["solver"]["t_max"], 3)
        res = lindblad_evolve(problem, np.outer(psi0, psi0.conj()), t_grid, observables=obs,
                              rtol=cfg["solver"].get("rtol", 1e-8), atol=cfg["solver"].get("atol", 1e-10))
        return float(res.series.data["fid"][-1])

    bounds = {k: tuple(v) for k, v in ocfg.get("bounds", {}).items()} or None
    prob = OptimizationProblem(
        objective,
        bounds=bounds or {"J_over_V": (0.0, 0.1), "Omega_over_V": (0.0, 0.1), "gamma_over_V": (0.0, 0.1)},
        budget=ocfg.get("budget", 100),
        initial_design=ocfg.get("initial_design", 10),
        seed=cfg["seed"],
    )
    result = optimize_params(prob)
    with open(out / "optimization_log.csv", "w") as fh:
        names = list(prob.bounds)
        fh.write("iteration," + ",".join(names) + ",objective,incumbent\n")
        best = -np.inf
        for rec in result.history:
            best = max(best, rec["value"])
            vals = ",".join(repr(rec["params"][n]) for n in names)
            fh.write(f"{rec['iteration']},{vals},{rec['value']!r},{best!r}\n")
    sparseio.write_metadata(out / "metadata.json", cfg, {"method": "optimize", "best": result.best_params,
                                                         "best_value": result.best_value})
    return result


def stage_run(cfg, out: Path):
    stage_spectrum(cfg, out)
    stage_protocol(cfg, out)
    if cfg["solver"]["method"] == "dense":
        return stage_evolve(cfg, out)
    return stage_trajectories(cfg, out)


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spinsink", description=__doc__)
    parser.add_argument("command", choices=["run", "spectrum", "protocol", "evolve", "trajectories", "optimize"])
    parser.add_argument("config", help="experiment config (YAML)")
    parser.add_argument("-o", "--output-dir", default=None, help="override the config's output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="trajectory worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg.setdefault("solver", {})["n_workers"] = args.workers
        out = Path(args.output_dir or cfg.get("output_dir", "spinsink_out"))
        stage = {
            "run": stage_run,
            "spectrum": stage_spectrum,
            "protocol": stage_protocol,
            "evolve": stage_evolve,
            "trajectories": stage_trajectories,
            "optimize": stage_optimize,
        }[args.command]
        result = stage(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingIntermediate as exc:
        print(f"missing intermediate: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (RuntimeError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.verbose:
        print(f"{args.command} finished -> {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
