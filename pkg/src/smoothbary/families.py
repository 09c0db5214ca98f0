"""Marginal families and population generators used by tests and experiments.

A family descriptor is a small JSON-able dict; :func:`build_density` turns it
into a :class:`GridDensity`. The density that is sampled from is always the
grid interpolant itself, so oracle values computed from the same object are
exact references.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridDensity, pushforward

__all__ = [
    "build_density",
    "truncated_gaussian",
    "uniform_density",
    "product_density",
    "AffinePopulation",
]

_KEYS = {
    "truncated_gaussian": {"family", "mean", "sd", "floor"},
    "uniform": {"family", "lo", "hi"},
    "product": {"family", "factors"},
    "bump": {"family", "lo", "hi", "floor"},
}


def truncated_gaussian(grid: Grid, mean: float, sd: float, floor: float = 0.0) -> GridDensity:
    """Gaussian restricted to the grid box, mixed with ``floor`` parts uniform.

    ``floor`` in ``[0, 1)`` keeps the density bounded below by ``floor / vol``.
    """
    if grid.dim != 1:
        raise ValueError("use product_density for d = 2")
    if sd <= 0 or not 0 <= floor < 1:
        raise ValueError("need sd > 0 and 0 <= floor < 1")
    x = grid.axes[0]
    g = np.exp(-0.5 * ((x - mean) / sd) ** 2)
    g = g / float(np.sum(g * grid.weights))
    return GridDensity.normalized(grid, (1 - floor) * g + floor / grid.volume)


def uniform_density(grid: Grid, lo: float, hi: float) -> GridDensity:
    """Uniform density on ``[lo, hi]`` with exact dual-cell mass on the grid."""
    if grid.dim != 1 or not hi > lo:
        raise ValueError("need a 1-D grid and hi > lo")
    x = grid.axes[0]
    h = grid.spacing[0]
    glo, ghi = grid.bounds[0]
    left = np.maximum(x - h / 2, glo)
    right = np.minimum(x + h / 2, ghi)
    overlap = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0, None)
    return GridDensity.normalized(grid, overlap / (hi - lo) / grid.weights)


def _bump(grid: Grid, lo: float, hi: float, floor: float) -> GridDensity:
    """Smooth compactly supported ``cos^2`` bump on ``[lo, hi]``, plus a floor."""
    x = grid.axes[0]
    t = (x - lo) / (hi - lo)
    b = np.where((t > 0) & (t < 1), np.sin(np.pi * t) ** 2, 0.0)
    b = b / float(np.sum(b * grid.weights))
    return GridDensity.normalized(grid, (1 - floor) * b + floor / grid.volume)


def product_density(grid: Grid, factors) -> GridDensity:
    """Tensor product of 1-D densities given as descriptors or ``GridDensity``."""
    if grid.dim != 2:
        raise ValueError("product densities need a 2-D grid")
    parts = []
    for ax, fac in enumerate(factors):
        g1 = Grid((grid.bounds[ax],), (grid.sizes[ax],))
        parts.append(fac if isinstance(fac, GridDensity) else build_density(g1, fac))
    return GridDensity.normalized(grid, np.outer(parts[0].values, parts[1].values))


def build_density(grid: Grid, desc: dict) -> GridDensity:
    """Construct a marginal from a descriptor dict.

    Raises:
        ValueError: on an unknown family or unknown keys.
    """
    fam = desc.get("family")
    if fam not in _KEYS:
        raise ValueError(f"unknown family {fam!r}")
    extra = set(desc) - _KEYS[fam]
    if extra:
        raise ValueError(f"unknown keys for {fam}: {sorted(extra)}")
    if fam == "truncated_gaussian":
        return truncated_gaussian(grid, desc["mean"], desc["sd"], desc.get("floor", 0.0))
    if fam == "uniform":
        return uniform_density(grid, desc["lo"], desc["hi"])
    if fam == "bump":
        return _bump(grid, desc["lo"], desc["hi"], desc.get("floor", 0.0))
    return product_density(grid, desc["factors"])


def factor_densities(grid: Grid, desc: dict):
    """1-D factor densities of a product descriptor, one per axis."""
    if desc.get("family") != "product":
        raise ValueError("not a product descriptor")
    return [build_density(Grid((grid.bounds[ax],), (grid.sizes[ax],)), f)
            for ax, f in enumerate(desc["factors"])]


@dataclass(frozen=True)
class AffinePopulation:
    """Random measures ``T # mu_star`` with ``T(x) = c (x - center) + center + b``.

    ``c ~ U[kappa, lam]`` and ``b ~ U[-shift, shift]``. Each map is the gradient
    of a ``kappa``-strongly convex, ``lam``-smooth quadratic; with
    ``kappa + lam = 2`` the mean map is the identity, so ``mu_star`` is the
    population barycenter.
    """

    kappa: float = 0.9
    lam: float = 1.1
    shift: float = 0.05
    center: float = 0.5

    def __post_init__(self):
        if not 0 < self.kappa <= self.lam:
            raise ValueError("need 0 < kappa <= lam")
        if self.lam - self.kappa >= 1:
            raise ValueError("need lam - kappa < 1")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")

    def draw(self, rng, m: int, support: tuple, domain: tuple, retries: int = 100):
        """Draw ``m`` maps ``(c_j, b_j)`` that send ``support`` into ``domain``.

        A map leaving the domain has its shift redrawn (then shrunk) until it fits.
        """
        cs, bs = [], []
        lo, hi = support
        dlo, dhi = domain
        for _ in range(m):
            c = rng.uniform(self.kappa, self.lam)
            b = rng.uniform(-self.shift, self.shift)
            for k in range(retries):
                a = c * (lo - self.center) + self.center + b
                z = c * (hi - self.center) + self.center + b
                if a >= dlo and z <= dhi:
                    break
                b = rng.uniform(-self.shift, self.shift) * 0.5 ** (k // 10)
            else:
                raise ValueError("could not fit a map inside the domain")
            cs.append(c)
            bs.append(b)
        return np.array(cs), np.array(bs)

    def apply(self, c: float, b: float, x):
        return c * (np.asarray(x) - self.center) + self.center + b

    def push(self, mu_star: GridDensity, c: float, b: float) -> GridDensity:
        return pushforward(self.apply(c, b, mu_star.grid.axes[0]), mu_star)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "lam": self.lam, "shift": self.shift, "center": self.center}
