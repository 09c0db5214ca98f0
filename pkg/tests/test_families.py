import numpy as np
import pytest

from smoothbary.families import (
    AffinePopulation,
    build_density,
    product_density,
    truncated_gaussian,
    uniform_density,
)
from smoothbary.families import factor_densities
from smoothbary.grid import Grid, integrate
from smoothbary.oracles import w1_1d


def test_truncated_gaussian_floor(grid256):
    mu = truncated_gaussian(grid256, 0.5, 0.05, 0.3)
    assert mu.values.min() >= 0.3 - 1e-12
    with pytest.raises(ValueError):
        truncated_gaussian(grid256, 0.5, 0.0)
    with pytest.raises(ValueError):
        truncated_gaussian(Grid.uniform(8, 0, 1, 2), 0.5, 0.1)


def test_uniform_density_exact_cells():
    g = Grid.uniform(101)
    mu = uniform_density(g, 0.2, 0.6)
    inside = (g.axes[0] > 0.2 + g.h) & (g.axes[0] < 0.6 - g.h)
    assert np.allclose(mu.values[inside], 2.5)
    assert integrate(mu) == pytest.approx(1.0)


def test_bump_support_is_exact(grid256):
    mu = build_density(grid256, {"family": "bump", "lo": 0.2, "hi": 0.8})
    x = grid256.axes[0]
    assert np.all(mu.values[(x <= 0.2) | (x >= 0.8)] == 0)


def test_build_density_descriptors(grid256):
    d = build_density(grid256, {"family": "truncated_gaussian", "mean": 0.4, "sd": 0.1, "floor": 0.1})
    assert w1_1d(d, truncated_gaussian(grid256, 0.4, 0.1, 0.1)) == 0.0
    with pytest.raises(ValueError):
        build_density(grid256, {"family": "cauchy"})
    with pytest.raises(ValueError):
        build_density(grid256, {"family": "uniform", "lo": 0, "hi": 1, "width": 2})


def test_product_density():
    g = Grid.uniform(32, 0.0, 1.0, dim=2)
    desc = {"family": "product", "factors": [
        {"family": "truncated_gaussian", "mean": 0.3, "sd": 0.1},
        {"family": "uniform", "lo": 0.0, "hi": 1.0}]}
    mu = build_density(g, desc)
    assert integrate(mu) == pytest.approx(1.0)
    f0, f1 = factor_densities(g, desc)
    assert np.allclose(mu.values, np.outer(f0.values, f1.values))
    with pytest.raises(ValueError):
        product_density(Grid.uniform(32), desc["factors"])


def test_population_validation():
    with pytest.raises(ValueError):
        AffinePopulation(kappa=0.5, lam=1.6)
    with pytest.raises(ValueError):
        AffinePopulation(kappa=1.2, lam=1.0)
    with pytest.raises(ValueError):
        AffinePopulation(shift=-0.1)


def test_population_maps_stay_inside(rng):
    pop = AffinePopulation(0.9, 1.1, 0.2)
    cs, bs = pop.draw(rng, 200, (0.2, 0.8), (0.0, 1.0))
    assert np.all((cs >= 0.9) & (cs <= 1.1))
    assert np.all(pop.apply(cs, bs, 0.2) >= 0) and np.all(pop.apply(cs, bs, 0.8) <= 1)


def test_population_degenerate_is_identity(grid256):
    pop = AffinePopulation(1.0, 1.0, 0.0)
    ref = build_density(grid256, {"family": "bump", "lo": 0.2, "hi": 0.8})
    out = pop.push(ref, 1.0, 0.0)
    assert w1_1d(out, ref) <= 1e-12


def test_population_mean_map_recovers_reference(grid256, rng):
    # kappa + lam = 2: the average map tends to the identity
    pop = AffinePopulation(0.9, 1.1, 0.05)
    ref = build_density(grid256, {"family": "bump", "lo": 0.2, "hi": 0.8})
    cs, bs = pop.draw(rng, 4000, (0.2, 0.8), (0.0, 1.0))
    assert w1_1d(pop.push(ref, cs.mean(), bs.mean()), ref) <= 3e-3
