"""Uniform box grids on a compact domain, grid functions, sampling and pushforwards.

Every grid function stores one value per node of a node-centred grid; the
continuous object it stands for is the piecewise-(multi)linear interpolant,
whose integral is exactly the trapezoidal rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels

__all__ = [
    "Grid",
    "GridDensity",
    "GridPotential",
    "SignedGridMeasure",
    "SampleSet",
    "integrate",
    "pushforward",
    "sample",
    "inverse_cdf",
    "cdf_1d",
    "deposit_masses",
]


@dataclass(frozen=True)
class Grid:
    """Axis-aligned uniform grid on a box ``prod_k [lo_k, hi_k]`` (d = 1 or 2)."""

    bounds: tuple
    sizes: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        sizes = tuple(int(n) for n in self.sizes)
        if len(bounds) != len(sizes):
            raise ValueError("bounds and sizes must have the same length")
        if len(sizes) not in (1, 2):
            raise ValueError(f"only d = 1 or 2 is supported, got d = {len(sizes)}")
        for (lo, hi), n in zip(bounds, sizes):
            if not hi > lo:
                raise ValueError(f"empty axis: lo={lo}, hi={hi}")
            if n < 4:
                raise ValueError(f"need at least 4 points per axis, got {n}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def uniform(cls, n: int = 256, lo: float = 0.0, hi: float = 1.0, dim: int = 1) -> "Grid":
        return cls(((lo, hi),) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple:
        return self.sizes

    @cached_property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.sizes))

    @property
    def h(self) -> float:
        """Largest spacing; the scale used in discretization tolerances."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in self.bounds)))

    @cached_property
    def axes(self) -> tuple:
        return tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.sizes))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, d)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def sqnorm(self) -> np.ndarray:
        """``|x|^2 / 2`` at the nodes."""
        return 0.5 * np.sum(self.points**2, axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (tensor product), shape ``shape``."""
        w = np.ones(())
        for h, n in zip(self.spacing, self.sizes):
            w1 = np.full(n, h)
            w1[0] = w1[-1] = h / 2
            w = np.multiply.outer(w, w1)
        return w

    def clamp(self, pts: np.ndarray) -> np.ndarray:
        """Project points with trailing axis ``d`` onto the box."""
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(pts, lo, hi)

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        lo = np.array([b[0] for b in self.bounds]) - tol
        hi = np.array([b[1] for b in self.bounds]) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "sizes": list(self.sizes)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(tuple(b) for b in d["bounds"]), tuple(d["sizes"]))


def _frozen(values, grid: Grid) -> np.ndarray:
    v = np.array(values, dtype=float)
    if v.shape != grid.shape:
        raise ValueError(f"values have shape {v.shape}, grid has shape {grid.shape}")
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class GridPotential:
    """Real function sampled at the grid nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, self.grid)
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return GridPotential(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridPotential(self.grid, self.values - _vals(other))

    def __mul__(self, c: float):
        return GridPotential(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridPotential(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density on the grid: nonnegative, trapezoidal mass one.

    ``bounds`` optionally records known ``(L, U)`` with ``L <= values <= U``;
    ``degenerate`` is set by :func:`pushforward` when all mass lands on one node.
    """

    grid: Grid
    values: np.ndarray
    bounds: tuple | None = None
    degenerate: bool = False

    def __post_init__(self):
        v = _frozen(self.values, self.grid)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and nonnegative")
        mass = float(np.sum(v * self.grid.weights))
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"density integrates to {mass!r}, expected 1")
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid: Grid, values, bounds=None) -> "GridDensity":
        """Clip negatives, then rescale to unit trapezoidal mass."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = float(np.sum(v * grid.weights))
        if not mass > 0:
            raise ValueError("cannot normalize a density with zero mass")
        return cls(grid, v / mass, bounds=bounds)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridDensity":
        """Sample ``fn`` (taking an array of points ``(..., d)``) and normalize."""
        pts = grid.points
        vals = fn(pts[..., 0]) if grid.dim == 1 else fn(pts)
        return cls.normalized(grid, vals)


@dataclass(frozen=True, eq=False)
class SignedGridMeasure:
    """Grid function with zero trapezoidal total mass."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, self.grid)
        total = float(np.sum(v * self.grid.weights))
        if not np.all(np.isfinite(v)) or abs(total) > 1e-8:
            raise ValueError(f"signed measure must have zero mass, got {total!r}")
        object.__setattr__(self, "values", v)

    @classmethod
    def difference(cls, a, b) -> "SignedGridMeasure":
        return cls(a.grid, a.values - b.values)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """I.i.d. sample from marginal ``source_id``; ``points`` has shape ``(n, d)``."""

    points: np.ndarray
    source_id: int = 0
    bounds: tuple | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must have shape (n, d)")
        if self.bounds is not None and len(pts):
            lo = np.array([b[0] for b in self.bounds])
            hi = np.array([b[1] for b in self.bounds])
            if np.any(pts < lo) or np.any(pts > hi):
                raise ValueError("sample points must lie inside the grid bounds")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _vals(f):
    return f.values if hasattr(f, "values") else np.asarray(f, dtype=float)


def integrate(f, grid: Grid | None = None) -> float:
    """Trapezoidal integral of a grid function (or of a raw array on ``grid``)."""
    if grid is None:
        grid = f.grid
    return float(np.sum(_vals(f) * grid.weights))


# ---------------------------------------------------------------------------
# 1-D piecewise-linear densities: CDF and its inverse


def _cell_masses(grid: Grid, values: np.ndarray) -> np.ndarray:
    h = grid.spacing[0]
    return 0.5 * h * (values[..., :-1] + values[..., 1:])


def cdf_1d(mu, x: np.ndarray) -> np.ndarray:
    """CDF of the piecewise-linear interpolant of a 1-D density at points ``x``."""
    grid = mu.grid
    (lo, hi), = grid.bounds
    h = grid.spacing[0]
    v = mu.values
    cum = np.concatenate([[0.0], np.cumsum(_cell_masses(grid, v))])
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    k = np.clip(np.floor((x - lo) / h).astype(int), 0, grid.sizes[0] - 2)
    t = x - (lo + k * h)
    a, b = v[k], v[k + 1]
    return cum[k] + a * t + (b - a) * t * t / (2 * h)


def inverse_cdf(mu, u: np.ndarray) -> np.ndarray:
    """Quantile function of the piecewise-linear interpolant of a 1-D density.

    Exact inversion of the piecewise-quadratic CDF; ``u`` in ``[0, 1]``.
    """
    grid = mu.grid
    if grid.dim != 1:
        raise ValueError("inverse_cdf needs a 1-D grid")
    (lo, _), = grid.bounds
    h = grid.spacing[0]
    v = mu.values
    masses = _cell_masses(grid, v)
    cum = np.cumsum(masses)
    total = cum[-1]
    u = np.asarray(u, dtype=float) * total
    k = np.searchsorted(cum, u, side="left")
    k = np.clip(k, 0, len(masses) - 1)
    # skip empty cells so the quantile sits inside the support
    r = u - (cum[k] - masses[k])
    r = np.clip(r, 0.0, masses[k])
    a, b = v[k], v[k + 1]
    disc = np.maximum(a * a + 2.0 * (b - a) * r / h, 0.0)
    denom = a + np.sqrt(disc)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0, 2.0 * r / denom, 0.0)
    return lo + k * h + np.clip(t, 0.0, h)


def sample(mu: GridDensity, n: int, seed=None, source_id: int = 0) -> SampleSet:
    """Draw ``n`` i.i.d. points from the interpolated density.

    Inverse-CDF sampling in 1-D, rejection against ``sup mu`` with a uniform
    proposal in 2-D. Deterministic given ``seed`` (int, SeedSequence or Generator).
    """
    grid = mu.grid
    rng = np.random.default_rng(seed)
    if n == 0:
        return SampleSet(np.empty((0, grid.dim)), source_id, grid.bounds)
    if grid.dim == 1:
        pts = inverse_cdf(mu, rng.random(n))[:, None]
    else:
        pts = _rejection_2d(mu, n, rng)
    return SampleSet(pts, source_id, grid.bounds)


def _bilinear(grid: Grid, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of node values (trailing shape ``grid.shape``)."""
    idx, frac = [], []
    for ax in range(2):
        lo = grid.bounds[ax][0]
        h = grid.spacing[ax]
        s = (pts[..., ax] - lo) / h
        i = np.clip(np.floor(s).astype(int), 0, grid.sizes[ax] - 2)
        idx.append(i)
        frac.append(np.clip(s - i, 0.0, 1.0))
    (i, j), (s, t) = idx, frac
    return (
        values[..., i, j] * (1 - s) * (1 - t)
        + values[..., i + 1, j] * s * (1 - t)
        + values[..., i, j + 1] * (1 - s) * t
        + values[..., i + 1, j + 1] * s * t
    )


def _rejection_2d(mu: GridDensity, n: int, rng) -> np.ndarray:
    grid = mu.grid
    lo = np.array([b[0] for b in grid.bounds])
    span = np.array([b[1] - b[0] for b in grid.bounds])
    top = float(mu.values.max())
    out = []
    have = 0
    while have < n:
        batch = max(1024, int(1.3 * (n - have) * top * grid.volume) + 16)
        prop = lo + span * rng.random((batch, 2))
        dens = _bilinear(grid, mu.values, prop)
        keep = prop[rng.random(batch) * top < dens]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# pushforward by mass deposition

_OVERSAMPLE_2D = 4


def deposit_masses(grid: Grid, T: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Move node masses along the map ``T`` and deposit them on the grid.

    ``T`` has shape ``(B, *shape, d)``, ``masses`` shape ``(B, *shape)``; returns
    deposited node masses with the shape of ``masses``. Each node carries the
    mass of its dual cell; the cell is mapped with the piecewise-linear
    interpolant of ``T`` and its mass spread uniformly over the image.
    """
    T = grid.clamp(T)
    B = masses.shape[0]
    if grid.dim == 1:
        n = grid.sizes[0]
        (lo, _), = grid.bounds
        h = grid.spacing[0]
        t = T[..., 0]
        edges = np.empty((B, n + 1))
        edges[:, 0] = t[:, 0]
        edges[:, -1] = t[:, -1]
        edges[:, 1:-1] = 0.5 * (t[:, :-1] + t[:, 1:])
        out = np.zeros((B, n))
        _kernels.deposit_intervals(
            np.ascontiguousarray(edges[:, :-1]),
            np.ascontiguousarray(edges[:, 1:]),
            np.ascontiguousarray(masses, dtype=float),
            lo, h, n, out,
        )
        return out
    return _deposit_2d(grid, T, masses)


def _subcell_offsets(grid: Grid, ax: int, s: int):
    """Sub-point positions inside each node's dual cell along one axis."""
    lo, hi = grid.bounds[ax]
    x = grid.axes[ax]
    h = grid.spacing[ax]
    left = np.maximum(x - h / 2, lo)
    right = np.minimum(x + h / 2, hi)
    frac = (np.arange(s) + 0.5) / s
    return left[:, None] + (right - left)[:, None] * frac[None, :]


def _deposit_2d(grid: Grid, T: np.ndarray, masses: np.ndarray) -> np.ndarray:
    s = _OVERSAMPLE_2D
    n0, n1 = grid.sizes
    B = masses.shape[0]
    sub0 = _subcell_offsets(grid, 0, s)  # (n0, s)
    sub1 = _subcell_offsets(grid, 1, s)
    P0 = sub0.reshape(-1)
    P1 = sub1.reshape(-1)
    pts = np.stack(np.meshgrid(P0, P1, indexing="ij"), axis=-1)  # (n0*s, n1*s, 2)
    Tx = _bilinear(grid, T[..., 0], pts)  # (B, n0*s, n1*s)
    Ty = _bilinear(grid, T[..., 1], pts)
    m = np.repeat(np.repeat(masses, s, axis=1), s, axis=2) / (s * s)
    out = np.zeros((B, n0, n1))
    _kernels.ngp_deposit_2d(
        np.ascontiguousarray(Tx.reshape(B, -1)),
        np.ascontiguousarray(Ty.reshape(B, -1)),
        np.ascontiguousarray(m.reshape(B, -1)),
        grid.bounds[0][0], grid.spacing[0], n0,
        grid.bounds[1][0], grid.spacing[1], n1,
        out,
    )
    return out


def pushforward(T: np.ndarray, mu):
    """Pushforward ``T # mu`` of a density or signed measure by a grid map.

    ``T`` holds the image of every node, shape ``(*grid.shape, d)`` (``(N,)``
    accepted in 1-D). Images outside the box are clamped onto it. Mass is
    conserved to rounding error. For densities whose image collapses onto a
    single node the result carries ``degenerate=True`` and a warning is issued.
    """
    grid = mu.grid
    T = np.asarray(T, dtype=float)
    if grid.dim == 1 and T.shape == grid.shape:
        T = T[..., None]
    if T.shape != grid.shape + (grid.dim,):
        raise ValueError(f"map has shape {T.shape}, expected {grid.shape + (grid.dim,)}")
    masses = (mu.values * grid.weights)[None]
    out = deposit_masses(grid, T[None], masses)[0] / grid.weights
    if isinstance(mu, SignedGridMeasure):
        out -= integrate(out, grid) / grid.volume
        return SignedGridMeasure(grid, out)
    out = np.clip(out, 0.0, None)
    out /= integrate(out, grid)
    degenerate = int(np.count_nonzero(out > 0)) <= 1
    if degenerate:
        warnings.warn("pushforward collapsed all mass onto a single node", RuntimeWarning)
    return GridDensity(grid, out, degenerate=degenerate)
