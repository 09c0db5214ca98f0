import csv
import json

import numpy as np
import pytest

import smoothbary.experiments as ex
from smoothbary.experiments import (
    CSV_HEADER,
    ExperimentSpec,
    fit_slope,
    plot_script,
    run_experiment,
    run_functional_rate,
    summarize,
)

TG = [{"family": "truncated_gaussian", "mean": 0.35, "sd": 0.08, "floor": 0.2},
      {"family": "truncated_gaussian", "mean": 0.65, "sd": 0.12, "floor": 0.2}]


def _small(**kw):
    d = dict(mode="functional_rate", m=2, marginals=TG, n_ladder=[200, 400, 800], replications=10,
             seed=3, grid={"bounds": [[0.0, 1.0]], "sizes": [64]},
             estimator={"bounds": [0.1, 50.0]})
    d.update(kw)
    return ExperimentSpec.from_dict(d)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"mode": "functional_rate", "colour": 1})
    with pytest.raises(ValueError):
        _small(mode="magic")
    with pytest.raises(ValueError):
        _small(replications=5)
    with pytest.raises(ValueError):
        _small(n_ladder=[400, 200, 800])
    with pytest.raises(ValueError):
        _small(n_ladder=[200, 400])
    with pytest.raises(ValueError):
        _small(solver={"momentum": 0.9})
    with pytest.raises(ValueError):
        _small(estimator={"bandwidth": 0.1})
    with pytest.raises(ValueError):
        _small(marginals=TG[:1])
    with pytest.raises(ValueError):
        _small(mode="two_layer", vary="m", m_ladder=[2, 4, 8])


def test_fit_slope_exact():
    n = np.array([100, 200, 400, 800])
    assert fit_slope(n, 3.0 * n**-0.5) == pytest.approx(-0.5)


def test_summarize_fields():
    res = summarize("x", [1, 2, 4], [[1.0, 1.2], [0.5, 0.6], [0.25, 0.3]], seed=0)
    assert res.slope == pytest.approx(-1.0, abs=0.05)
    assert res.slope_ci_lo <= res.slope <= res.slope_ci_hi
    assert res.counts == [2, 2, 2]


def test_run_writes_csv_and_summary(tmp_path):
    spec = _small()
    summary = run_experiment(spec, output=str(tmp_path / "run"))
    rows = list(csv.reader(open(tmp_path / "run.csv")))
    assert rows[0] == CSV_HEADER
    assert {r[7] for r in rows[1:]} >= {"sq_err", "w1_bary", "iterations"}
    on_disk = json.load(open(tmp_path / "run.summary.json"))
    for key in ("slope", "slope_ci_lo", "slope_ci_hi", "ladder", "means", "stderrs", "excluded"):
        assert key in on_disk["sq_err"]
    assert summary["primary_metric"] == "sq_err"
    assert summary["excluded"] == 0


def test_determinism(tmp_path):
    spec = _small(n_ladder=[200, 300, 400])
    run_experiment(spec, output=str(tmp_path / "a"))
    run_experiment(spec, output=str(tmp_path / "b"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_identical_marginals_floor():
    spec = _small(marginals=[TG[0], TG[0]])
    res = run_functional_rate(spec)
    assert max(res.means) < 1e-6


def test_exclusions_are_recorded(tmp_path, monkeypatch):
    real = ex._estimate

    def flaky(samples, cfg, grid):
        if len(samples) == 400 and samples.source_id == 1:
            raise FloatingPointError("synthetic divergence")
        return real(samples, cfg, grid)

    monkeypatch.setattr(ex, "_estimate", flaky)
    summary = run_experiment(_small(), output=str(tmp_path / "x"))
    assert summary["excluded"] == 10
    assert all("synthetic divergence" in e["cause"] for e in summary["exclusions"])
    assert summary["sq_err"]["counts"] == [10, 0, 10]
    text = (tmp_path / "x.csv").read_text()
    assert text.count(",excluded,nan") == 10


def test_density_mode_metrics():
    spec = ExperimentSpec.from_dict(dict(
        mode="density_rate", m=1, marginals=TG[:1], n_ladder=[500, 2000, 8000], replications=10,
        estimator={"bounds": [0.1, 50.0]}))
    summary = run_experiment(spec)
    assert summary["hneg1_sq"]["slope"] < -0.5
    assert len(summary["risk_ratio"]) == 3


def test_two_layer_degenerate_population():
    # identity maps: the error is the single-layer estimation error of mu* itself
    spec = ExperimentSpec.from_dict(dict(
        mode="two_layer", vary="m", n=4000, m_ladder=[2, 4, 8], replications=10,
        population={"reference": {"family": "bump", "lo": 0.2, "hi": 0.8, "floor": 0.2},
                    "kappa": 1.0, "lam": 1.0, "shift": 0.0},
        estimator={"bounds": [0.1, 50.0]}, solver={"geometry": "symmetric"}))
    rows = ex._two_layer(spec, 4000, 4, 0)
    vals = dict(rows)
    assert vals["w1_pop"] <= 1e-12
    assert vals["w1_star"] < 0.01


def test_plot_script_compiles(tmp_path):
    src = plot_script(str(tmp_path / "r.csv"))
    compile(src, "plot.py", "exec")
    assert "m_outer" in src


def test_property_suite_mode(tmp_path):
    spec = ExperimentSpec.from_dict({"mode": "property_suite", "seed": 0})
    report = run_experiment(spec, output=str(tmp_path / "p"))
    assert report["passed"]
    assert (tmp_path / "p.summary.json").exists()
