import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothbary.grid import Grid, GridPotential, SignedGridMeasure
from smoothbary.sobolev import (
    ProductTangent,
    hdot1_inner,
    hdot1_norm,
    hneg1_norm,
    hneg1_sq_array,
    inverse_laplacian_array,
    mean_zero,
    neumann_inverse_laplacian,
    product_norm,
)

# sqrt(sum_i w_i |g_i|^2_{H^1}) for cos(pi x), cos(2 pi x), w = (1/2, 1/2),
# from adaptive quadrature of the squared derivatives (scipy.integrate.quad)
PRODUCT_NORM_COS = 3.5124073655203634


def _signed(grid, values):
    return SignedGridMeasure(grid, mean_zero(grid, values))


@pytest.mark.parametrize("k", [1, 2])
def test_inverse_laplacian_eigenfunctions(grid256, k):
    x = grid256.axes[0]
    g = SignedGridMeasure(grid256, np.cos(k * np.pi * x))
    phi = neumann_inverse_laplacian(g)
    assert np.max(np.abs(phi.values - np.cos(k * np.pi * x) / (k * np.pi) ** 2)) <= 1e-4


def test_inverse_laplacian_2d_tensor_mode():
    g2 = Grid.uniform(64, 0.0, 1.0, dim=2)
    p = g2.points
    vals = np.cos(np.pi * p[..., 0]) * np.cos(np.pi * p[..., 1])
    phi = neumann_inverse_laplacian(SignedGridMeasure(g2, vals))
    assert np.max(np.abs(phi.values - vals / (2 * np.pi**2))) <= 1e-3


def test_inverse_laplacian_rejects_mass(grid256):
    with pytest.raises(ValueError):
        inverse_laplacian_array(grid256, np.ones(256))


def test_inverse_laplacian_batched(grid256):
    x = grid256.axes[0]
    stack = np.stack([np.cos(np.pi * x), np.cos(3 * np.pi * x)])
    batch = inverse_laplacian_array(grid256, stack)
    for row, v in zip(batch, stack):
        assert np.allclose(row, inverse_laplacian_array(grid256, v))


@pytest.mark.parametrize("k, expected", [(1, 1 / (np.pi * np.sqrt(2))), (2, 1 / (2 * np.pi * np.sqrt(2)))])
def test_hneg1_norm_eigenfunctions(grid256, k, expected):
    g = SignedGridMeasure(grid256, np.cos(k * np.pi * grid256.axes[0]))
    assert abs(hneg1_norm(g) - expected) <= 1e-3


def test_hneg1_norm_zero(grid256):
    assert hneg1_norm(SignedGridMeasure(grid256, np.zeros(256))) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_hneg1_matches_primitive_l2(coef):
    # in 1-D the H^-1 norm of a zero-mass g is the L2 norm of its primitive
    g = Grid.uniform(512)
    x = g.axes[0]
    vals = sum(c * np.cos((k + 1) * np.pi * x) for k, c in enumerate(coef))
    prim = sum(c * np.sin((k + 1) * np.pi * x) / ((k + 1) * np.pi) for k, c in enumerate(coef))
    ref = np.sqrt(np.sum(prim**2 * g.weights))
    assert hneg1_norm(_signed(g, vals)) == pytest.approx(ref, rel=1e-2, abs=1e-6)


def test_hneg1_sq_array_nonneg(grid256, rng):
    vals = np.stack([mean_zero(grid256, rng.normal(size=256)) for _ in range(3)])
    assert np.all(hneg1_sq_array(grid256, vals) >= 0)


def test_hdot1_examples(grid256):
    x = grid256.axes[0]
    lin = GridPotential(grid256, x)
    assert abs(hdot1_inner(lin, lin) - 1.0) <= 1e-10
    c1 = GridPotential(grid256, np.cos(np.pi * x))
    c2 = GridPotential(grid256, np.cos(2 * np.pi * x))
    assert abs(hdot1_inner(c1, c2)) <= 1e-6
    assert abs(hdot1_inner(c1, c1) - np.pi**2 / 2) <= 1e-2
    assert hdot1_norm(lin) == pytest.approx(1.0)


def test_product_norm_primal(grid256):
    x = grid256.axes[0]
    lin = GridPotential(grid256, x)
    assert product_norm(ProductTangent((lin, lin), (0.5, 0.5), "primal")) == pytest.approx(1.0)
    c1 = GridPotential(grid256, np.cos(np.pi * x))
    c2 = GridPotential(grid256, np.cos(2 * np.pi * x))
    val = product_norm(ProductTangent((c1, c2), (0.5, 0.5), "primal"))
    assert val == pytest.approx(PRODUCT_NORM_COS, rel=1e-2)


def test_product_norm_dual(grid256):
    x = grid256.axes[0]
    zero = SignedGridMeasure(grid256, np.zeros(256))
    g = SignedGridMeasure(grid256, np.cos(np.pi * x))
    assert product_norm(ProductTangent((zero,), (1.0,))) == 0.0
    assert abs(product_norm(ProductTangent((g,), (1.0,))) - 1 / (np.pi * np.sqrt(2))) <= 1e-3
    both = product_norm(ProductTangent((g, g), (0.5, 0.5)))
    assert both == pytest.approx(product_norm(ProductTangent((g,), (1.0,))))
    one_zero = product_norm(ProductTangent((g, zero), (0.3, 0.7)))
    assert one_zero == pytest.approx(np.sqrt(0.3) * hneg1_norm(g))


def test_product_tangent_validation(grid256):
    g = SignedGridMeasure(grid256, np.zeros(256))
    other = SignedGridMeasure(Grid.uniform(64), np.zeros(64))
    with pytest.raises(ValueError):
        ProductTangent((g, other), (0.5, 0.5))
    with pytest.raises(ValueError):
        ProductTangent((g,), (0.5, 0.5))
    with pytest.raises(ValueError):
        ProductTangent((g,), (1.0,), mode="other")
