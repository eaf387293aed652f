import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from levyrefract import cli
from levyrefract.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, **overrides):
    doc = {
        "model": {"gamma_tilde": 2.0, "sigma": 0.3, "kappa": 1.0,
                  "phase_type": {"alpha": [1.0], "T": [[-1.0]]}},
        "problem": {"q": 0.5, "delta": 1.0, "beta": 0.2,
                    "cost": {"kind": "quadratic", "params": {"alpha": 1.0}}},
        "command": {"name": "solve", "x_grid": {"start": -2, "stop": 2, "num": 21},
                    "mc": {"n_paths": 200, "dt": 0.01, "seed": 1, "antithetic": True}},
        "output": {"directory": str(tmp_path / "out")},
    }
    for dotted, value in overrides.items():
        node = doc
        *head, last = dotted.split(".")
        for k in head:
            node = node[k]
        node[last] = value
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.mark.parametrize("name", ["weibull_example_beta_plus5.yaml", "weibull_example_beta_minus5.yaml"])
def test_shipped_config_solves(tmp_path, capsys, name):
    assert cli.main(["--config", str(CONFIGS / name), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "solve.json").read_text())
    assert isinstance(doc["b_star"], float) and doc["kind"] == "finite"
    assert doc["smooth_fit_residual"] <= 1e-6
    assert doc["passed"]
    header, data = read_csv(tmp_path / "solve_values.csv")
    assert header == ["x", "v", "v_prime"] and data.shape == (101, 3)


def test_empty_x_grid_is_config_fault(tmp_path, capsys):
    path = small_config(tmp_path, **{"command.x_grid": []})
    assert cli.main(["--config", str(path)]) == cli.EXIT_CONFIG
    assert "command.x_grid" in capsys.readouterr().err


def test_diagnostic_names_field_and_line(tmp_path):
    path = small_config(tmp_path, **{"problem.q": -1.0})
    with pytest.raises(ConfigError) as err:
        cli.load_config(path)
    msg = str(err.value)
    assert "problem.q" in msg and "line" in msg


def test_module_invariant_violation_is_config_fault(tmp_path):
    path = small_config(tmp_path, **{"model.phase_type": {"alpha": [0.5], "T": [[-1.0]]}})
    assert cli.main(["--config", str(path)]) == cli.EXIT_CONFIG


def test_missing_file_is_config_fault(tmp_path):
    assert cli.main(["--config", str(tmp_path / "nope.yaml")]) == cli.EXIT_CONFIG


def test_curve_minimum_at_offset_zero(tmp_path):
    path = small_config(tmp_path, **{"command.name": "curve"})
    assert cli.main(["--config", str(path)]) == 0
    header, data = read_csv(tmp_path / "out" / "curve.csv")
    assert header == ["x", "v_b_star", "v_prime_b_star", "v_b_offset_-1", "v_b_offset_-0.5",
                      "v_b_offset_+0.5", "v_b_offset_+1"]
    values = data[:, [1, 3, 4, 5, 6]]
    assert np.all(values[:, 0] <= values.min(axis=1) + 1e-7)
    with open(tmp_path / "out" / "curve_markers.csv") as fh:
        markers = list(csv.reader(fh))
    assert markers[0] == ["label", "offset", "b", "v_b_at_b"]
    assert [r[0] for r in markers[1:]] == ["b_star", "offset_-1", "offset_-0.5", "offset_+0.5", "offset_+1"]


def test_check_command_passes_and_writes_report(tmp_path, capsys):
    path = small_config(tmp_path, **{"command.name": "check"})
    assert cli.main(["--config", str(path)]) == 0
    doc = json.loads((tmp_path / "out" / "check.json").read_text())
    assert doc["passed"]
    out = capsys.readouterr().out
    assert "PASS resolvent_mass" in out and "FAIL" not in out


def test_check_command_flags_violation(tmp_path, monkeypatch):
    from levyrefract import refraction

    real = refraction.solve

    def shifted(problem):
        sol = real(problem)
        return refraction.RefractionSolution(problem, sol.b_star + 0.5, sol.kind, sol.bracket)

    monkeypatch.setattr(refraction, "solve", shifted)
    path = small_config(tmp_path, **{"command.name": "check"})
    assert cli.main(["--config", str(path)]) == cli.EXIT_CHECK


def test_convergence_command_outputs(tmp_path):
    path = small_config(tmp_path, **{"model.gamma_tilde": 1.5, "problem.beta": -0.4,
                                     "command.delta_grid": [1, 10, 100]})
    assert cli.main(["--config", str(path), "--command", "convergence"]) == 0
    header, data = read_csv(tmp_path / "out" / "convergence_thresholds.csv")
    assert header == ["delta", "b_star", "delta_phi_q", "delta_W_at_1"]
    assert data.shape == (3, 4) and np.all(np.diff(data[:, 1]) <= 1e-9)
    vheader, _ = read_csv(tmp_path / "out" / "convergence_values.csv")
    assert vheader == ["delta", "x", "v_tilde"]


def test_simulate_command_and_seed_override(tmp_path):
    path = small_config(tmp_path, **{"command.x_grid": [0.0]})
    outs = []
    for seed in ("3", "3", "4"):
        out = tmp_path / f"sim{len(outs)}"
        assert cli.main(["--config", str(path), "--command", "simulate", "--seed", seed, "--out", str(out)]) == 0
        header, data = read_csv(out / "simulate.csv")
        outs.append(data)
    assert header == ["x", "analytic", "mean", "stderr", "n", "tail_bound"]
    assert np.array_equal(outs[0], outs[1]) and not np.array_equal(outs[0], outs[2])
    pheader, _ = read_csv(tmp_path / "sim0" / "path_0.csv")
    assert pheader == ["t", "U"]


def test_negative_seed_rejected(tmp_path):
    path = small_config(tmp_path)
    assert cli.main(["--config", str(path), "--seed", "-1"]) == cli.EXIT_CONFIG


def test_round_trip(tmp_path):
    cfg = cli.load_config(small_config(tmp_path))
    again = cli.parse_config(yaml.safe_load(cfg.dump()))
    assert again == cfg
    shipped = cli.load_config(CONFIGS / "weibull_example_beta_plus5.yaml")
    assert cli.parse_config(yaml.safe_load(shipped.dump())) == shipped


def test_linear_cost_classification_reported(tmp_path, capsys):
    # alpha = 0.05 < q beta = 0.1 gives b* = +inf
    path = small_config(tmp_path, **{"problem.cost": {"kind": "linear", "params": {"alpha": 0.05}}})
    assert cli.main(["--config", str(path)]) == 0
    doc = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert doc["b_star"] == "+inf" and doc["kind"] == "+inf"
