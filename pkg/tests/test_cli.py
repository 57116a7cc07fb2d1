import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from spinsink import cli


def base_config(tmp_path, **overrides):
    cfg = {
        "units": {"energy": "V"},
        "seed": 77,
        "output_dir": str(tmp_path / "out"),
        "model": {"family": "xy", "geometry": {"kind": "chain", "n": 2}, "v_nn": 1.0},
        "auxiliaries": [
            {"kind": "source", "exchange": 0.05, "drive": 0.1, "gamma": 0.2,
             "weights": [1, 0], "detuning": {"kind": "constant", "value": 1.0}},
            {"kind": "sink", "exchange": 0.05, "drive": 0.1, "gamma": 0.2,
             "weights": [0, 1], "detuning": {"kind": "constant", "value": -1.0}},
        ],
        "solver": {"representation": "reduced", "method": "trajectories", "backend": "expeig",
                   "t_max": 30.0, "n_times": 7, "n_traj": 8, "rtol": 1e-6, "atol": 1e-9},
        "target": {"filling": 1, "eigenstate_index": 2},
        "observables": ["number", "energy", "fidelity"],
        "initial_state": "vacuum",
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.yaml"):
    path = tmp_path / name
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh)
    return path


class TestValidation:
    def test_negative_gamma_rejected_before_outputs(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["auxiliaries"][0]["gamma"] = -0.1
        path = write_config(tmp_path, cfg)
        rc = cli.main(["run", str(path)])
        assert rc == cli.EXIT_CONFIG
        assert not (tmp_path / "out").exists()

    def test_unknown_key_rejected(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["model"]["graviton_mass"] = 1.0
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.yaml")]) == cli.EXIT_CONFIG

    def test_missing_intermediates_reported(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path))
        rc = cli.main(["trajectories", str(path)])
        assert rc == cli.EXIT_MISSING


class TestStages:
    def test_spectrum_row_count(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path))
        assert cli.main(["spectrum", str(path)]) == 0
        lines = (tmp_path / "out" / "spectrum.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 4  # header + 2-spin spectrum

    def test_protocol_replay_bit_exact(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["auxiliaries"][0]["detuning"] = {"kind": "sawtooth", "minimum": -2.0, "maximum": 2.0, "period": 7.0}
        path = write_config(tmp_path, cfg)
        assert cli.main(["protocol", str(path)]) == 0
        first = (tmp_path / "out" / "schedule_aux0.csv").read_bytes()
        assert cli.main(["protocol", str(path)]) == 0
        assert (tmp_path / "out" / "schedule_aux0.csv").read_bytes() == first

    def test_run_end_to_end_and_determinism(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path))
        assert cli.main(["run", str(path)]) == 0
        out = tmp_path / "out"
        obs1 = (out / "observables.csv").read_bytes()
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["method"] == "trajectories"
        assert (out / "spectrum.csv").exists()
        assert (out / "problem_summary.txt").exists()
        # byte-identical rerun
        assert cli.main(["run", str(path)]) == 0
        assert (out / "observables.csv").read_bytes() == obs1
        # different seed changes the trajectories
        assert cli.main(["run", str(path), "--seed", "123"]) == 0
        assert (out / "observables.csv").read_bytes() != obs1

    def test_pipeline_composability(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path))
        assert cli.main(["run", str(path)]) == 0
        combined = (tmp_path / "out" / "observables.csv").read_bytes()
        out2 = tmp_path / "staged"
        for stage in ["spectrum", "protocol", "trajectories"]:
            assert cli.main([stage, str(path), "-o", str(out2)]) == 0
        assert (out2 / "observables.csv").read_bytes() == combined

    def test_dense_method(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["solver"]["method"] = "dense"
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", str(path)]) == 0
        meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
        assert meta["method"] == "dense"
        assert meta["trace_drift"] < 1e-8

    def test_protocol_driven_run(self, tmp_path):
        cfg = base_config(tmp_path)
        for aux in cfg["auxiliaries"]:
            aux["detuning"] = {"kind": "protocol"}
        cfg["protocol"] = {
            "target": {"filling": 1},
            "mode": "raster-single",
            "duration": 30.0,
            "spectral_range": [-1.6, 1.6],
        }
        cfg["solver"]["backend"] = "rk45"
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", str(path)]) == 0
        sched = (tmp_path / "out" / "schedule_aux0.csv").read_text()
        assert len(sched.splitlines()) > 5  # rastered table, not a constant

    def test_bitstring_initial_state(self, tmp_path):
        cfg = base_config(tmp_path, initial_state="11")
        path = write_config(tmp_path, cfg)
        assert cli.main(["run", str(path)]) == 0
        rows = [l for l in (tmp_path / "out" / "observables.csv").read_text().splitlines() if l.startswith("0.0,number")]
        assert rows and float(rows[0].split(",")[2]) == 2.0


class TestOptimizeCommand:
    def test_log_has_budget_rows(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["optimize"] = {"objective": "steady_state_fidelity", "budget": 12, "initial_design": 5}
        path = write_config(tmp_path, cfg)
        assert cli.main(["optimize", str(path)]) == 0
        lines = (tmp_path / "out" / "optimization_log.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 12
        header = lines[0].split(",")
        assert header == ["iteration", "J_over_V", "Omega_over_V", "gamma_over_V", "objective", "incumbent"]
        # incumbent column is monotone
        inc = [float(l.split(",")[-1]) for l in lines[1:]]
        assert all(a <= b + 1e-15 for a, b in zip(inc, inc[1:]))


def test_reference_configs_validate():
    import glob

    paths = glob.glob(str(Path(__file__).resolve().parents[1] / "configs" / "*.yaml"))
    assert len(paths) >= 5
    for p in paths:
        cli.load_config(p)
