"""Homogeneous Sobolev geometry on grids: Neumann inverse Laplacian, H^1 and H^-1.

The discrete Neumann Laplacian (second differences with mirrored ghost nodes)
is diagonalized by the type-I discrete cosine transform, so ``(-Delta)^-1`` is a
pointwise division in cosine space. The trapezoidal mean of a grid function is
proportional to its zero cosine coefficient, which makes the compatibility
condition ``int g = 0`` exact at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .grid import Grid, GridPotential, SignedGridMeasure

__all__ = [
    "ProductTangent",
    "neumann_inverse_laplacian",
    "inverse_laplacian_array",
    "hneg1_norm",
    "hneg1_sq_array",
    "hdot1_inner",
    "hdot1_norm",
    "product_norm",
    "mean_zero",
]

_MEAN_TOL = 1e-8


def _eigenvalues(grid: Grid) -> np.ndarray:
    lam = np.zeros(())
    for h, n in zip(grid.spacing, grid.sizes):
        k = np.arange(n)
        lam = np.add.outer(lam, (2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / h**2)
    return lam


_EIG_CACHE: dict = {}


def _inv_eigenvalues(grid: Grid) -> np.ndarray:
    inv = _EIG_CACHE.get(grid)
    if inv is None:
        lam = _eigenvalues(grid)
        inv = np.zeros_like(lam)
        inv[lam > 0] = 1.0 / lam[lam > 0]
        _EIG_CACHE[grid] = inv
    return inv


def _check_mean(grid: Grid, values: np.ndarray) -> None:
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    total = np.sum(values * grid.weights, axis=axes)
    scale = np.maximum(1.0, np.sum(np.abs(values) * grid.weights, axis=axes))
    if np.any(np.abs(total) > _MEAN_TOL * scale):
        raise ValueError(
            f"compatibility condition violated: integral {np.max(np.abs(total))!r} != 0"
        )


def inverse_laplacian_array(grid: Grid, values: np.ndarray, check: bool = True) -> np.ndarray:
    """``(-Delta)^-1`` on raw arrays; leading axes are treated as a batch."""
    values = np.asarray(values, dtype=float)
    if check:
        _check_mean(grid, values)
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    coef = dctn(values, type=1, axes=axes)
    coef *= _inv_eigenvalues(grid)
    return idctn(coef, type=1, axes=axes)


def neumann_inverse_laplacian(g: SignedGridMeasure) -> GridPotential:
    """Solve ``-Delta phi = g`` with zero Neumann data and zero mean.

    Args:
        g: zero-mass grid function (a ``SignedGridMeasure`` or any object with
            ``grid`` and ``values``).

    Returns:
        The potential ``phi`` with trapezoidal mean zero.

    Raises:
        ValueError: if ``int g`` is not zero to ``1e-8`` (relative to ``int |g|``
            when that exceeds one).
    """
    return GridPotential(g.grid, inverse_laplacian_array(g.grid, g.values))


def hneg1_sq_array(grid: Grid, values: np.ndarray, check: bool = True) -> np.ndarray:
    """Squared H^-1 norms ``<(-Delta)^-1 g, g>`` for a batch of raw arrays."""
    phi = inverse_laplacian_array(grid, values, check=check)
    axes = tuple(range(np.ndim(values) - grid.dim, np.ndim(values)))
    return np.maximum(np.sum(phi * values * grid.weights, axis=axes), 0.0)


def hneg1_norm(g) -> float:
    """``||g||_{H^-1} = ||grad (-Delta)^-1 g||_{L^2}``.

    Evaluated as ``sqrt(<(-Delta)^-1 g, g>)``, which equals the discrete
    Dirichlet energy of the potential.
    """
    return float(np.sqrt(hneg1_sq_array(g.grid, g.values)))


def _gradients(grid: Grid, values: np.ndarray):
    if grid.dim == 1:
        return [np.gradient(values, grid.spacing[0])]
    return np.gradient(values, *grid.spacing)


def hdot1_inner(f, g) -> float:
    """``int <grad f, grad g>`` with central differences and trapezoidal weights."""
    if f.grid != g.grid:
        raise ValueError("grids differ")
    grid = f.grid
    total = 0.0
    for df, dg in zip(_gradients(grid, f.values), _gradients(grid, g.values)):
        total += float(np.sum(df * dg * grid.weights))
    return total


def hdot1_norm(f) -> float:
    return float(np.sqrt(max(hdot1_inner(f, f), 0.0)))


@dataclass(frozen=True, eq=False)
class ProductTangent:
    """Element of the weighted product space over ``m - 1`` potentials.

    ``mode`` is ``"primal"`` (components are potentials, H^1 norms) or
    ``"dual"`` (components are zero-mass measures, H^-1 norms).
    """

    components: tuple
    weights: tuple
    mode: str = "dual"

    def __post_init__(self):
        comps = tuple(self.components)
        w = tuple(float(x) for x in self.weights)
        if len(comps) != len(w) or not comps:
            raise ValueError("need one positive weight per component")
        if any(x <= 0 for x in w):
            raise ValueError("weights must be positive")
        grid = comps[0].grid
        if any(c.grid != grid for c in comps):
            raise ValueError("all components must share one grid")
        if self.mode not in ("primal", "dual"):
            raise ValueError(f"mode must be 'primal' or 'dual', got {self.mode!r}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def grid(self) -> Grid:
        return self.components[0].grid


def product_norm(t: ProductTangent) -> float:
    """``sqrt(sum_i w_i ||t_i||^2)`` with H^1 (primal) or H^-1 (dual) components."""
    if t.mode == "primal":
        sq = [hdot1_inner(c, c) for c in t.components]
    else:
        vals = np.stack([c.values for c in t.components])
        sq = hneg1_sq_array(t.grid, vals)
    return float(np.sqrt(sum(w * s for w, s in zip(t.weights, sq))))


def mean_zero(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Subtract the trapezoidal mean (per batch row)."""
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    mean = np.sum(values * grid.weights, axis=axes, keepdims=True) / grid.volume
    return values - mean

