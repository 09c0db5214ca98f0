import json

import pytest

from smoothbary.cli import main


def test_props_exit_code(capsys):
    assert main(["props", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "PASS  strong_concavity" in out
    assert "FAIL" not in out


def test_oracle_command(tmp_path, capsys):
    prob = {"grid": {"n": 257}, "weights": [0.5, 0.5], "marginals": [
        {"family": "uniform", "lo": 0.1, "hi": 0.4}, {"family": "uniform", "lo": 0.6, "hi": 0.9}]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(prob))
    assert main(["oracle", str(path), "--solve", "--barycenter", str(tmp_path / "b.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["functional"] == pytest.approx(1 / 32, rel=1e-6)
    assert out["relative_gap"] < 0.02
    assert (tmp_path / "b.csv").read_text().startswith("x,density")


def test_run_command(tmp_path, capsys):
    spec = {"mode": "barycenter_rate", "m": 2, "n_ladder": [200, 400, 800], "replications": 10,
            "grid": {"bounds": [[0.0, 1.0]], "sizes": [64]}, "estimator": {"bounds": [0.1, 50.0]},
            "marginals": [{"family": "truncated_gaussian", "mean": 0.35, "sd": 0.08, "floor": 0.2},
                          {"family": "truncated_gaussian", "mean": 0.65, "sd": 0.12, "floor": 0.2}]}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "res"
    assert main(["run", str(path), "--output", str(out), "--emit-plot-script"]) == 0
    assert (tmp_path / "res.csv").exists()
    assert (tmp_path / "res.plot.py").exists()
    assert "w1_bary slope" in capsys.readouterr().out


def test_bad_spec_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"mode": "functional_rate", "unknown": 1}))
    assert main(["run", str(path)]) == 2
    assert "unknown spec keys" in capsys.readouterr().err
