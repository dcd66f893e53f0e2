import json
import subprocess
import sys

import numpy as np
import pytest

from exactq.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_RUNTIME, main
from exactq.experiment import (ScenarioConfig, emit_summary, load_preset, preset_names, read_replica_csv,
                               replica_rng)
from exactq.oracles import mean_ci

LIGHT_CFG = {
    "name": "small_light",
    "distribution": {"kind": "lattice_pareto", "alpha_prime": 7, "c": 3, "h": 0.1},
    "mu": 1.0,
    "params": {"m": 16, "L": 1.1, "alpha": 4, "gamma": 1.7, "delta": 0.38},
    "replicas": 300,
    "lindley": {"length": 30_000, "batch": 25},
    "seed": 11,
}


def write_cfg(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def test_presets_load():
    names = preset_names()
    assert {"light_tail_light_traffic", "heavy_tail_infeasible_m1", "nonlattice_light_tail"} <= set(names)
    for n in names:
        assert load_preset(n).name == n


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({**LIGHT_CFG, "bogus": 1})
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({**LIGHT_CFG, "replicas": 0})
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({**LIGHT_CFG, "distribution": {"kind": "weibull"}})


def test_replica_streams_fixed_by_index():
    a = replica_rng(5, 17).random(4)
    b = replica_rng(5, 17).random(4)
    c = replica_rng(5, 18).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_writes_outputs_and_ci_recomputes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, LIGHT_CFG)
    out = tmp_path / "run"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "small_light" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())[0]
    rows = read_replica_csv(out / "replicas.csv")
    assert [r.replica_id for r in rows] == list(range(300))
    ci = mean_ci([r.M0 for r in rows])
    assert summary["exact"]["lower"] == pytest.approx(ci.lower, rel=1e-12)
    assert summary["exact"]["upper"] == pytest.approx(ci.upper, rel=1e-12)
    assert (out / "lindley_batches.csv").exists() and (out / "summary.txt").exists()
    assert summary["ratio_violations"] == 0


def test_threads_give_identical_files(tmp_path):
    cfg = write_cfg(tmp_path, LIGHT_CFG)
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["sample", "--config", cfg, "--out", str(out), "--threads", threads, "--no-lindley"]) == 0
        outs.append((out / "replicas.csv").read_bytes())
    assert outs[0] == outs[1]


def test_exit_code_infeasible(tmp_path, capsys):
    code = main(["sample", "--config", "heavy_tail_infeasible_m1", "--out", str(tmp_path / "x")])
    assert code == EXIT_INFEASIBLE == 2
    assert "infeasible" in capsys.readouterr().out
    assert main(["audit", "--config", "heavy_tail_infeasible_m1", "--kmax", "12"]) == EXIT_INFEASIBLE


def test_exit_code_runtime_assertion(tmp_path):
    raw = {**LIGHT_CFG, "distribution": {"kind": "lattice_pareto", "alpha_prime": 2.9, "c": 8, "h": 0.1},
           "params": {"m": 1, "L": 1.1, "alpha": 2.01, "gamma": 0.74, "delta": 0.38},
           "replicas": 3000, "check_feasibility": False}
    cfg = write_cfg(tmp_path, raw)
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "r"), "--no-lindley"]) == EXIT_RUNTIME == 1


def test_no_strict_records_violations(tmp_path):
    raw = {**LIGHT_CFG, "distribution": {"kind": "lattice_pareto", "alpha_prime": 2.9, "c": 8, "h": 0.1},
           "params": {"m": 1, "L": 1.1, "alpha": 2.01, "gamma": 0.74, "delta": 0.38},
           "replicas": 3000, "check_feasibility": False}
    cfg = write_cfg(tmp_path, raw)
    out = tmp_path / "r"
    assert main(["sample", "--config", cfg, "--out", str(out), "--no-lindley", "--no-strict"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())[0]
    assert summary["ratio_violations"] > 0 and summary["max_violation_ratio"] > 1


def test_solve_and_lindley_commands(tmp_path, capsys):
    raw = {**LIGHT_CFG, "params": "solve", "solve": {"alpha": 4, "delta": 0.38, "gamma": 1.7}}
    cfg = write_cfg(tmp_path, raw)
    assert main(["solve-params", "--config", cfg]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["feasibility"]["feasible"] and res["params"]["m"] <= 16
    csv_path = tmp_path / "bm.csv"
    assert main(["lindley", "--config", cfg, "--length", "5000", "--batch", "50", "--out", str(csv_path)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["n_batches"] == 100 and csv_path.exists()


def test_emit_summary_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_summary([], tmp_path)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "exactq.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "solve-params" in res.stdout
