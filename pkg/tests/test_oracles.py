import numpy as np
import pytest
from scipy.optimize import linprog

from smoothbary.families import truncated_gaussian, uniform_density
from smoothbary.grid import Grid, GridDensity, pushforward
from smoothbary.oracles import (
    barycenter_1d_oracle,
    barycenter_functional_oracle,
    location_scatter_oracle,
    lp_barycenter_fixed_support,
    sinkhorn_divergence_2d,
    variance_functional_1d,
    w1_1d,
    w2_1d,
    w2_entropic_2d,
)
from smoothbary.semidual import BarycenterProblem
from smoothbary.simplex import solve_lp


@pytest.fixture
def g2():
    return Grid.uniform(401, 0.0, 2.0)


def test_w2_examples(g2):
    a = uniform_density(g2, 0.0, 1.0)
    assert w2_1d(a, a) == 0.0
    assert abs(w2_1d(a, uniform_density(g2, 0.2, 1.2)) - 0.2) <= 1e-3
    assert abs(w2_1d(a, uniform_density(g2, 0.0, 0.5)) - 1 / (2 * np.sqrt(3))) <= 1e-3


def test_w1_examples(g2):
    a = uniform_density(g2, 0.0, 1.0)
    assert w1_1d(a, a) == 0.0
    assert abs(w1_1d(a, uniform_density(g2, 0.3, 1.3)) - 0.3) <= 1e-3
    assert abs(w1_1d(a, uniform_density(g2, 0.0, 0.5)) - 0.25) <= 1e-3


def test_distances_need_1d():
    g = Grid.uniform(16, 0, 1, dim=2)
    mu = GridDensity.normalized(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        w2_1d(mu, mu)
    with pytest.raises(ValueError):
        barycenter_functional_oracle(BarycenterProblem((mu, mu), (0.5, 0.5)))


def test_barycenter_oracle_identical_and_translates(g2):
    mu = truncated_gaussian(g2, 0.8, 0.1, 0.1)
    prob = BarycenterProblem((mu, mu), (0.3, 0.7))
    assert w1_1d(barycenter_1d_oracle(prob), mu) <= 1e-4
    assert barycenter_functional_oracle(prob) == pytest.approx(0.0, abs=1e-14)
    a, b = uniform_density(g2, 0.1, 0.5), uniform_density(g2, 1.1, 1.5)
    mid = barycenter_1d_oracle(BarycenterProblem((a, b), (0.5, 0.5)))
    assert w1_1d(mid, uniform_density(g2, 0.6, 1.0)) <= 1e-4


def test_barycenter_oracle_resolution_consistency():
    def bary(N):
        g = Grid.uniform(N)
        mus = (truncated_gaussian(g, 0.35, 0.08), truncated_gaussian(g, 0.65, 0.12))
        return barycenter_1d_oracle(BarycenterProblem(mus, (0.5, 0.5)))

    coarse, fine = bary(257), bary(513)
    assert np.all(np.diff(np.cumsum(coarse.values)) >= 0)
    assert w1_1d(coarse, fine) <= 2 * coarse.grid.h


def test_functional_two_narrow_bumps():
    g = Grid.uniform(2049)
    a = 0.4
    mus = (truncated_gaussian(g, 0.3, 0.004), truncated_gaussian(g, 0.3 + a, 0.004))
    assert barycenter_functional_oracle(BarycenterProblem(mus, (0.5, 0.5))) == pytest.approx(
        a * a / 8, rel=1e-3)


def test_functional_three_translates(g2):
    d = 0.3
    mus = tuple(truncated_gaussian(g2, 1.0 + s, 0.05) for s in (-d, 0.0, d))
    prob = BarycenterProblem(mus, (1 / 3,) * 3)
    assert barycenter_functional_oracle(prob) == pytest.approx(d * d / 3, rel=1e-3)


def test_functional_equals_variance_of_oracle_barycenter():
    g = Grid.uniform(513)
    mus = (truncated_gaussian(g, 0.35, 0.08), truncated_gaussian(g, 0.65, 0.12))
    prob = BarycenterProblem(mus, (0.5, 0.5))
    ref = barycenter_functional_oracle(prob)
    assert variance_functional_1d(barycenter_1d_oracle(prob), prob) == pytest.approx(ref, rel=1e-2)


def test_location_scatter(g2):
    ref = uniform_density(g2, 0.0, 0.25)
    same = location_scatter_oracle(ref, [1.0, 1.0], [0.0, 0.0], [0.5, 0.5])
    assert w1_1d(same, ref) <= 1e-8
    scaled = location_scatter_oracle(ref, [1.0, 3.0], [0.0, 0.0], [0.5, 0.5])
    pushed = [ref, pushforward(3.0 * g2.axes[0], ref)]
    quant = barycenter_1d_oracle(BarycenterProblem(tuple(pushed), (0.5, 0.5)))
    assert w1_1d(scaled, uniform_density(g2, 0.0, 0.5)) <= g2.h
    assert w1_1d(scaled, quant) <= g2.h
    shifted = location_scatter_oracle(ref, [1.0, 1.0], [0.2, 0.6], [0.5, 0.5])
    assert w1_1d(shifted, uniform_density(g2, 0.4, 0.65)) <= g2.h
    with pytest.raises(ValueError):
        location_scatter_oracle(ref, [0.0, 1.0], [0, 0], [0.5, 0.5])


def test_lp_two_atoms():
    res = lp_barycenter_fixed_support(
        [(np.array([[0.0]]), np.array([1.0])), (np.array([[1.0]]), np.array([1.0]))],
        np.linspace(0, 1, 11)[:, None], [0.5, 0.5])
    assert res.status == "optimal"
    assert res.value == pytest.approx(1 / 8)
    assert res.masses[5] == pytest.approx(1.0)


def test_lp_identical_marginals():
    pts = np.array([[0.1], [0.4], [0.9]])
    mass = np.array([0.2, 0.5, 0.3])
    res = lp_barycenter_fixed_support([(pts, mass), (pts, mass)], np.linspace(0, 1, 11)[:, None],
                                      [0.5, 0.5])
    assert res.value == pytest.approx(0.0, abs=1e-12)


def test_lp_matches_quantile_oracle():
    m1 = (np.array([[0.3], [0.5]]), np.array([0.5, 0.5]))
    m2 = (np.array([[0.6], [0.7]]), np.array([0.5, 0.5]))
    res = lp_barycenter_fixed_support([m1, m2], np.linspace(0, 1, 21)[:, None], [0.5, 0.5])
    g = Grid.uniform(2049)

    def embed(pts, mass):
        vals = sum(w * truncated_gaussian(g, p[0], 0.003).values for p, w in zip(pts, mass))
        return GridDensity.normalized(g, vals)

    ref = barycenter_functional_oracle(BarycenterProblem((embed(*m1), embed(*m2)), (0.5, 0.5)))
    assert res.value == pytest.approx(ref, rel=2e-2)


def test_lp_caps():
    pts = (np.linspace(0, 1, 7)[:, None], np.full(7, 1 / 7))
    with pytest.raises(ValueError):
        lp_barycenter_fixed_support([pts, pts], np.zeros((3, 1)), [0.5, 0.5])
    one = (np.zeros((1, 1)), np.ones(1))
    with pytest.raises(ValueError):
        lp_barycenter_fixed_support([one, one], np.zeros((41, 1)), [0.5, 0.5])


@pytest.mark.parametrize("seed", range(5))
def test_simplex_matches_linprog(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 1, size=(4, 9))
    x0 = rng.uniform(0, 1, size=9)
    b = A @ x0
    c = rng.normal(size=9) + 1.0
    ours = solve_lp(c, A, b)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ref.status in (0, 3)
    if ref.status == 0:
        assert ours.status == "optimal"
        assert ours.value == pytest.approx(ref.fun, rel=1e-7, abs=1e-9)
    else:
        assert ours.status == "unbounded"


def test_simplex_infeasible():
    res = solve_lp(np.ones(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert res.status == "infeasible"


@pytest.fixture(scope="module")
def g48():
    return Grid.uniform(48, 0.0, 1.0, dim=2)


def _bump2d(grid, center, width=0.1):
    p = grid.points
    r2 = np.sum((p - np.asarray(center)) ** 2, axis=-1)
    return GridDensity.normalized(grid, np.exp(-r2 / (2 * width**2)))


def test_sinkhorn_self_and_translation(g48):
    mu = _bump2d(g48, (0.4, 0.5))
    assert abs(sinkhorn_divergence_2d(mu, mu)) <= 1e-6
    nu = _bump2d(g48, (0.6, 0.5))
    assert abs(w2_entropic_2d(mu, nu) - 0.2) <= 2 * g48.h


def test_sinkhorn_product_separability(g48):
    g1 = Grid.uniform(48)
    a, b = truncated_gaussian(g1, 0.35, 0.08, 0.2), truncated_gaussian(g1, 0.6, 0.12, 0.2)
    mu = GridDensity.normalized(g48, np.outer(a.values, b.values))
    nu = GridDensity.normalized(g48, np.outer(b.values, a.values))
    ref = np.sqrt(2 * w2_1d(a, b) ** 2)
    assert w2_entropic_2d(mu, nu) == pytest.approx(ref, rel=0.05)


def test_sinkhorn_guards(g48):
    mu = _bump2d(g48, (0.5, 0.5))
    with pytest.raises(ValueError):
        sinkhorn_divergence_2d(mu, mu, epsilon=-1.0)
    big = Grid.uniform(65, 0, 1, dim=2)
    mb = GridDensity.normalized(big, np.ones(big.shape))
    with pytest.raises(ValueError):
        sinkhorn_divergence_2d(mb, mb)
