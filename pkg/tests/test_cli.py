import json
from pathlib import Path

import pytest

from epiecon import cli, config as cfgmod


def small_config(**grid_overrides):
    cfg = {
        "grid": {"a_max": 8.0, "n_age": 16, "t0": 0.0, "n_steps": 8},
        "epidemic": {
            "mu_S": {"type": "constant", "value": 0.02},
            "mu_R": {"type": "constant", "value": 0.02},
            "mu_I_base": {"type": "constant", "value": 0.15},
            "gamma": {"type": "constant", "value": 0.5},
            "beta": {"type": "constant", "value": 0.05},
            "xi": {"type": "constant", "value": 0.2},
            "contact": {"type": "constant", "m0": 1.8},
            "initial": {
                "s": {"type": "constant", "value": 1.0},
                "i": {"type": "band", "lo_age": 1.0, "hi_age": 4.0,
                      "value": 0.02, "background": 0.0},
                "r": {"type": "constant", "value": 0.0},
            },
        },
        "economy": {
            "alpha": {"type": "constant", "value": 1.0},
            "e": {"type": "constant", "value": 1.0},
            "delta": 0.05,
            "production": {"type": "linear", "a_k": 0.04, "a_l": 1.0},
            "K0": 100.0,
        },
        "objective": {"which": "J1", "rho": 0.08},
        "policy": {"preset": "laissez_faire", "c_level": 0.1},
        "output": {"dir": "out", "snapshot_times": [0.0, 2.0]},
    }
    cfg["grid"].update(grid_overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_missing_delta_names_field(tmp_path, capsys):
    cfg = small_config()
    del cfg["economy"]["delta"]
    code = cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "economy.delta" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = small_config()
    cfg["economy"]["unknown_knob"] = 3.0
    code = cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "unknown_knob" in capsys.readouterr().err


def test_invalid_json_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code = cli.main(["simulate", "--config", str(path),
                     "--out", str(tmp_path / "out")])
    assert code == 2


def test_simulate_writes_expected_files(tmp_path):
    cfg = small_config()
    out = tmp_path / "out"
    code = cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)])
    assert code == 0
    rows = (out / "trajectory.csv").read_text().strip().splitlines()
    assert rows[0].split(",")[:4] == ["t", "S", "I", "R"]
    assert len(rows) == 1 + cfg["grid"]["n_steps"] + 1
    snap = (out / "snapshots.csv").read_text().strip().splitlines()
    assert len(snap) == 1 + 2 * cfg["grid"]["n_age"]
    assert (out / "resolved_config.json").exists()


def test_simulate_zero_steps_single_row(tmp_path):
    cfg = small_config(n_steps=0)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    rows = (out / "trajectory.csv").read_text().strip().splitlines()
    assert len(rows) == 2


def test_model_error_exit_code(tmp_path, capsys):
    cfg = small_config()
    cfg["epidemic"]["mu_S"] = {"type": "constant", "value": 50.0}
    cfg["epidemic"]["mu_R"] = {"type": "constant", "value": 50.0}
    cfg["epidemic"]["mu_I_base"] = {"type": "constant", "value": 50.0}
    code = cli.main(["simulate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(tmp_path / "out")])
    assert code == 3
    assert "step" in capsys.readouterr().err


def test_optimizer_infeasible_start_exit_code(tmp_path):
    cfg = small_config()
    cfg["epidemic"]["mu_S"] = {"type": "constant", "value": 50.0}
    cfg["epidemic"]["mu_R"] = {"type": "constant", "value": 50.0}
    cfg["epidemic"]["mu_I_base"] = {"type": "constant", "value": 50.0}
    code = cli.main(["optimize", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(tmp_path / "out")])
    assert code == 4


def test_evaluate_matches_library_bitwise(tmp_path):
    cfg = small_config()
    out = tmp_path / "out"
    assert cli.main(["evaluate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    payload = json.loads((out / "evaluation.json").read_text())

    scenario = cfgmod.build_scenario(cfgmod.resolve_config(cfg))
    report = scenario.evaluate()
    assert payload["value"] == report.value
    assert payload["feasible"] == report.feasible
    assert payload["violation"] == report.violation


def test_composite_target_through_cli(tmp_path):
    cfg = small_config()
    cfg["objective"]["composite"] = {"J5": 1.0, "J6": -2.0}
    out = tmp_path / "out"
    assert cli.main(["evaluate", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    payload = json.loads((out / "evaluation.json").read_text())
    assert set(payload["components"]) == {"J5", "J6"}
    expected = payload["components"]["J5"] * 1.0 + payload["components"]["J6"] * (-2.0)
    assert payload["value"] == pytest.approx(expected, rel=1e-15)


def test_optimize_writes_report_and_policy(tmp_path):
    cfg = small_config()
    cfg["optimizer"] = {"initial_step": 1e-4, "max_iters": 2,
                        "max_backtracks": 20, "seed": 1}
    out = tmp_path / "out"
    assert cli.main(["optimize", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    report = json.loads((out / "optim_report.json").read_text())
    trace = report["objective_trace"]
    assert len(trace) >= 1
    assert all(b > a for a, b in zip(trace, trace[1:]))
    policy_rows = (out / "best_policy.csv").read_text().strip().splitlines()
    assert policy_rows[0] == "t_block,a_block,t_start,a_start,c,theta,eta"
    assert len(policy_rows) == 2  # 1x1 blocks by default


def test_check_writes_diagnostics(tmp_path):
    # fine enough (and rates mild enough) that the two-point order estimate
    # sits in the asymptotic regime; bump weights decay to ~1e-6 at the
    # birth boundary
    cfg = small_config(n_age=128, n_steps=64)
    cfg["epidemic"]["gamma"] = {"type": "constant", "value": 0.25}
    cfg["epidemic"]["contact"] = {"type": "constant", "m0": 0.9}
    cfg["epidemic"]["mu_I_base"] = {"type": "constant", "value": 0.075}
    cfg["verification"] = {
        "value_function": {
            "type": "linear",
            "w1": {"type": "bump", "center": 4.0, "width": 1.0, "height": 1.0},
            "w2": {"type": "bump", "center": 4.0, "width": 1.0, "height": 0.5},
            "w3": {"type": "bump", "center": 4.0, "width": 1.0, "height": 1.0},
            "q": 0.2,
        },
        "adjoint_pairs": 10,
    }
    out = tmp_path / "out"
    assert cli.main(["check", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    payload = json.loads((out / "check.json").read_text())
    adj = payload["adjoint_identity"]
    assert adj["max_rel_residual"] <= adj["bound_5da"]
    assert payload["chain_rule_identity"]["order"] >= 0.9
    assert payload["hamiltonian_gap"]["min"] >= -1e-10
    conv = payload["transport_convergence"]
    assert conv["age_dependent_mu"]["order"] >= 0.9
    assert max(conv["constant_mu"]["max_rel_errors"]) <= 1e-12


def test_sweep_matrix_shape(tmp_path):
    cfg = small_config()
    cfg["policy"] = {"preset": "blocks", "c_level": 0.1,
                     "theta_level": 1.0, "eta_level": 1.0}
    cfg["sweep"] = {"axes": [
        {"path": "policy.theta_level", "values": [0.5, 1.0]},
        {"path": "policy.eta_level", "values": [0.25, 0.5, 1.0]},
    ]}
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 theta rows
    assert len(rows[1].split(",")) == 4  # label + 3 eta columns
    details = (out / "sweep_details.csv").read_text().strip().splitlines()
    assert len(details) == 1 + 6


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = small_config()
    cfg["policy"] = {"preset": "blocks", "c_level": 0.1,
                     "theta_level": 1.0, "eta_level": 1.0}
    cfg["sweep"] = {"axes": [
        {"path": "policy.theta_level", "values": [0.5, 1.0]},
        {"path": "policy.eta_level", "values": [0.5, 1.0]},
    ]}
    path = write_config(tmp_path, cfg)
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    assert cli.main(["sweep", "--config", str(path), "--out", str(serial)]) == 0
    assert cli.main(["sweep", "--config", str(path), "--out", str(parallel),
                     "--jobs", "2"]) == 0
    assert (serial / "sweep.csv").read_bytes() == (parallel / "sweep.csv").read_bytes()


def test_sweep_requires_sweep_block(tmp_path, capsys):
    cfg = small_config()
    code = cli.main(["sweep", "--config", str(write_config(tmp_path, cfg)),
                     "--out", str(tmp_path / "out")])
    assert code == 2


def test_byte_determinism(tmp_path):
    cfg = small_config()
    path = write_config(tmp_path, cfg)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli.main(["simulate", "--config", str(path), "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", str(path), "--out", str(out2)]) == 0
    for name in ("trajectory.csv", "snapshots.csv", "resolved_config.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_config_round_trip(tmp_path):
    cfg = small_config()
    path = write_config(tmp_path, cfg)
    out1 = tmp_path / "r1"
    assert cli.main(["simulate", "--config", str(path), "--out", str(out1)]) == 0
    echoed = out1 / "resolved_config.json"
    out2 = tmp_path / "r2"
    assert cli.main(["simulate", "--config", str(echoed), "--out", str(out2)]) == 0
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    first = json.loads(echoed.read_text())
    second = json.loads((out2 / "resolved_config.json").read_text())
    assert first == second


def test_shipped_demo_configs_validate():
    root = Path(__file__).resolve().parent.parent / "configs"
    for name in ("demo_covid.json", "demo_sweep.json"):
        cfg = cfgmod.load_config(root / name)
        scenario = cfgmod.build_scenario(cfg)
        assert scenario.age_grid.n_age >= 8


def test_demo_covid_smoke(tmp_path):
    root = Path(__file__).resolve().parent.parent / "configs"
    out = tmp_path / "demo"
    code = cli.main(["simulate", "--config", str(root / "demo_covid.json"),
                     "--out", str(out)])
    assert code == 0
    assert (out / "trajectory.csv").exists()
