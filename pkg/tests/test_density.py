import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothbary.density import (
    EstimatorConfig,
    choose_resolution,
    estimate_density,
    load_samples_csv,
    project_to_bounds,
    save_samples_csv,
)
from smoothbary.families import truncated_gaussian
from smoothbary.grid import Grid, SampleSet, integrate, sample
from smoothbary.oracles import w1_1d


@pytest.mark.parametrize("n, s, d, J", [(1024, 1, 1, 3), (1, 0, 1, 0), (1, 3, 2, 0), (2**20, 0, 2, 10)])
def test_choose_resolution(n, s, d, J):
    assert choose_resolution(n, s, d) == J


def test_choose_resolution_clamped_by_grid():
    assert choose_resolution(2**20, 0, 1, grid_size=256) == 7


def test_uniform_sup_norm_automatic_level(grid256):
    # a constant density is smooth of every order; s = 2 gives J = 3 at n = 1e4
    cfg = EstimatorConfig(smoothness_hint=2.0)
    hits = 0
    seeds = range(100)
    for seed in seeds:
        x = np.random.default_rng(seed).uniform(size=10_000)
        mu = estimate_density(SampleSet(x), cfg, grid256)
        hits += np.max(np.abs(mu.values - 1.0)) <= 0.1
    assert hits / len(seeds) >= 0.95


def test_bounds_postcondition(grid256):
    mu = truncated_gaussian(grid256, 0.5, 0.15)
    s = sample(mu, 10_000, seed=3)
    est = estimate_density(s, EstimatorConfig(bounds=(0.01, 4.0)), grid256)
    assert est.values.min() >= 0.01 and est.values.max() <= 4.0
    assert integrate(est) == pytest.approx(1.0, abs=1e-12)
    assert est.bounds == (0.01, 4.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.9), st.floats(1.1, 5.0))
def test_projection_is_feasible_and_idempotent(seed, L, U):
    g = Grid.uniform(64)
    v = np.random.default_rng(seed).gamma(1.0, size=64)
    v /= np.sum(v * g.weights)
    p = project_to_bounds(g, v, L, U)
    assert p.min() >= L - 1e-12 and p.max() <= U + 1e-12
    assert np.sum(p * g.weights) == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(project_to_bounds(g, p, L, U), p, atol=1e-10)


def test_errors(grid256):
    with pytest.raises(ValueError):
        estimate_density(SampleSet(np.empty((0, 1))), EstimatorConfig(), grid256)
    with pytest.raises(ValueError):
        estimate_density(SampleSet(np.zeros((5, 2))), EstimatorConfig(), grid256)
    x = SampleSet(np.full(10, 0.5))
    with pytest.raises(ValueError):
        estimate_density(x, EstimatorConfig(bounds=(0.1, 0.5)), grid256)
    with pytest.raises(ValueError):
        estimate_density(x, EstimatorConfig(bounds=(1.5, 3.0)), grid256)
    with pytest.raises(ValueError):
        EstimatorConfig(method="spline")
    with pytest.raises(ValueError):
        EstimatorConfig.from_dict({"method": "wavelet", "level": 3})


def test_config_roundtrip():
    cfg = EstimatorConfig("kernel", 0.05, (0.1, 9.0), 1.0)
    assert EstimatorConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("method", ["wavelet", "histogram", "kernel"])
def test_methods_return_densities(grid256, method):
    s = sample(truncated_gaussian(grid256, 0.4, 0.1, 0.1), 5000, seed=0)
    est = estimate_density(s, EstimatorConfig(method), grid256)
    assert integrate(est) == pytest.approx(1.0)
    assert w1_1d(est, truncated_gaussian(grid256, 0.4, 0.1, 0.1)) < 0.03


def test_two_dimensional_estimate():
    g = Grid.uniform(32, 0.0, 1.0, dim=2)
    s = SampleSet(np.random.default_rng(0).uniform(size=(4000, 2)))
    est = estimate_density(s, EstimatorConfig(bounds=(0.5, 2.0)), g)
    assert est.values.shape == (32, 32)
    assert integrate(est) == pytest.approx(1.0)


def test_consistency_in_n(grid256):
    mu = truncated_gaussian(grid256, 0.45, 0.12, 0.1)
    medians = []
    for n in [500, 1000, 2000, 4000, 8000, 16000, 32000]:
        errs = [w1_1d(estimate_density(sample(mu, n, seed=[n, r]), EstimatorConfig(), grid256), mu)
                for r in range(15)]
        medians.append(np.median(errs))
    assert all(b < a for a, b in zip(medians, medians[1:]))


def test_csv_roundtrip(tmp_path):
    s = SampleSet(np.random.default_rng(0).uniform(size=(20, 2)), 3)
    path = tmp_path / "s.csv"
    save_samples_csv(s, path)
    back = load_samples_csv(path, source_id=3, bounds=((0, 1), (0, 1)))
    assert np.array_equal(back.points, s.points)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_samples_csv(bad)
