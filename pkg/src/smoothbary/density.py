"""Smoothed density estimation from samples, with optional [L, U] bound projection.

The default estimator is the Haar truncated expansion at level ``J``: the
empirical scaling coefficients of the ``2^J`` dyadic cells per axis, which is
the ``2^J``-bin histogram. Grid node values are the averages of that piecewise
constant function over each node's dual cell, so the trapezoidal mass is
exactly one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid, GridDensity, SampleSet

__all__ = [
    "EstimatorConfig",
    "estimate_density",
    "choose_resolution",
    "project_to_bounds",
    "load_samples_csv",
    "save_samples_csv",
]

METHODS = ("wavelet", "histogram", "kernel")


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator settings.

    Attributes:
        method: ``"wavelet"`` (Haar level ``J``), ``"histogram"`` (``resolution``
            bins per axis) or ``"kernel"`` (Gaussian, ``resolution`` = bandwidth).
        resolution: level, bin count or bandwidth; ``None`` picks it from ``n``
            through :func:`choose_resolution`.
        bounds: optional ``(L, U)`` density bounds enforced by projection.
        smoothness_hint: Sobolev smoothness ``s`` used by the automatic choice.
            The default 1 matches the regularity a Haar expansion can exploit.
    """

    method: str = "wavelet"
    resolution: float | None = None
    bounds: tuple | None = None
    smoothness_hint: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.resolution is not None and self.resolution < 0:
            raise ValueError("resolution must be nonnegative")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError(f"need L < U, got {self.bounds}")
            object.__setattr__(self, "bounds", (float(lo), float(hi)))
        if self.smoothness_hint < 0:
            raise ValueError("smoothness_hint must be >= 0")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "resolution": self.resolution,
            "bounds": list(self.bounds) if self.bounds else None,
            "smoothness_hint": self.smoothness_hint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        allowed = {"method", "resolution", "bounds", "smoothness_hint"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown estimator keys: {sorted(extra)}")
        b = d.get("bounds")
        return cls(d.get("method", "wavelet"), d.get("resolution"),
                   tuple(b) if b is not None else None, d.get("smoothness_hint", 1.0))


def choose_resolution(n: int, s: float, d: int, grid_size: int | None = None) -> int:
    """Truncation level with ``2^J ~ n^{1/(d + 2s)}``.

    ``J = round(log2(n) / (d + 2s))`` (halves round up), clamped to
    ``[0, floor(log2(grid_size - 1))]`` when a grid size is given, so that a
    dyadic cell is never narrower than a grid cell.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    J = int(math.floor(math.log2(n) / (d + 2.0 * s) + 0.5))
    J = max(J, 0)
    if grid_size is not None:
        J = min(J, int(math.floor(math.log2(max(grid_size - 1, 1)))))
    return J


def _overlap_matrix(grid: Grid, ax: int, edges: np.ndarray) -> np.ndarray:
    """Length of (dual cell of node k) intersected with (bin b), shape (N, B)."""
    lo, hi = grid.bounds[ax]
    x = grid.axes[ax]
    h = grid.spacing[ax]
    left = np.maximum(x - h / 2, lo)[:, None]
    right = np.minimum(x + h / 2, hi)[:, None]
    return np.clip(np.minimum(right, edges[None, 1:]) - np.maximum(left, edges[None, :-1]), 0, None)


def _binned(samples: SampleSet, grid: Grid, bins: int) -> np.ndarray:
    """Piecewise-constant histogram density averaged over dual cells."""
    n = len(samples)
    edges = [np.linspace(lo, hi, bins + 1) for lo, hi in grid.bounds]
    counts, _ = np.histogramdd(samples.points, bins=edges)
    widths = [np.diff(e) for e in edges]
    dens = counts / n
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = -1
        dens = dens / widths[ax].reshape(shape)
    out = dens
    for ax in range(grid.dim):
        M = _overlap_matrix(grid, ax, edges[ax])
        out = np.moveaxis(np.tensordot(M, out, axes=([1], [ax])), 0, ax)
    return out / grid.weights


def _kernel(samples: SampleSet, grid: Grid, bandwidth: float) -> np.ndarray:
    """Gaussian smoothing of linearly binned samples, reflected at the walls."""
    n = len(samples)
    mass = np.zeros(grid.shape)
    idx, frac = [], []
    for ax in range(grid.dim):
        lo = grid.bounds[ax][0]
        s = (samples.points[:, ax] - lo) / grid.spacing[ax]
        i = np.clip(np.floor(s).astype(int), 0, grid.sizes[ax] - 2)
        idx.append(i)
        frac.append(np.clip(s - i, 0.0, 1.0))
    if grid.dim == 1:
        np.add.at(mass, idx[0], 1 - frac[0])
        np.add.at(mass, idx[0] + 1, frac[0])
    else:
        (i, j), (s, t) = idx, frac
        np.add.at(mass, (i, j), (1 - s) * (1 - t))
        np.add.at(mass, (i + 1, j), s * (1 - t))
        np.add.at(mass, (i, j + 1), (1 - s) * t)
        np.add.at(mass, (i + 1, j + 1), s * t)
    dens = mass / (n * grid.weights)
    sigma = [bandwidth / h for h in grid.spacing]
    return ndimage.gaussian_filter(dens, sigma=sigma, mode="mirror")


def project_to_bounds(grid: Grid, values: np.ndarray, L: float, U: float) -> np.ndarray:
    """Trapezoid-weighted L2 projection onto ``{L <= mu <= U, int mu = 1}``.

    The projection has the form ``clip(mu + c, L, U)``; ``c`` is bracketed by
    bisection, then fixed exactly by a linear solve on the unclipped set.

    Raises:
        ValueError: if the constraint set is empty on this grid.
    """
    w = grid.weights
    vol = float(w.sum())
    if U * vol < 1.0 - 1e-12 or L * vol > 1.0 + 1e-12:
        raise ValueError(f"bounds ({L}, {U}) infeasible on a domain of volume {vol}")
    v = np.asarray(values, dtype=float)

    def mass(c):
        return float(np.sum(w * np.clip(v + c, L, U)))

    a, b = L - v.max(), U - v.min()
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mass(mid) < 1.0:
            a = mid
        else:
            b = mid
        if b - a < 1e-15 * max(1.0, abs(mid)):
            break
    c = 0.5 * (a + b)
    out = np.clip(v + c, L, U)
    free = (v + c > L) & (v + c < U)
    if np.any(free):
        fixed = float(np.sum(w[~free] * out[~free]))
        c_exact = (1.0 - fixed - float(np.sum(w[free] * v[free]))) / float(np.sum(w[free]))
        trial = v + c_exact
        if np.all(trial[free] >= L) and np.all(trial[free] <= U):
            out = out.copy()
            out[free] = trial[free]
    return out


def estimate_density(samples: SampleSet, cfg: EstimatorConfig, grid: Grid) -> GridDensity:
    """Smoothed density estimate on ``grid`` from an i.i.d. sample.

    Raises:
        ValueError: on an empty sample, a dimension mismatch, or infeasible bounds.
    """
    n = len(samples)
    if n == 0:
        raise ValueError("cannot estimate a density from zero samples")
    if samples.dim != grid.dim:
        raise ValueError(f"samples are {samples.dim}-D, grid is {grid.dim}-D")
    if cfg.bounds is not None:
        L, U = cfg.bounds
        vol = grid.volume
        if U * vol < 1.0 or L * vol > 1.0:
            raise ValueError(f"bounds {cfg.bounds} infeasible on a domain of volume {vol}")
    grid_cells = min(grid.sizes)
    if cfg.method == "wavelet":
        J = cfg.resolution
        if J is None:
            J = choose_resolution(n, cfg.smoothness_hint, grid.dim, grid_cells)
        vals = _binned(samples, grid, 2 ** int(J))
    elif cfg.method == "histogram":
        bins = cfg.resolution
        if bins is None:
            bins = 2 ** choose_resolution(n, cfg.smoothness_hint, grid.dim, grid_cells)
        vals = _binned(samples, grid, max(int(bins), 1))
    else:
        bw = cfg.resolution
        if bw is None:
            J = choose_resolution(n, cfg.smoothness_hint, grid.dim, grid_cells)
            span = min(hi - lo for lo, hi in grid.bounds)
            bw = 0.5 * span * 2.0 ** (-J)
        vals = _kernel(samples, grid, float(bw))
    if cfg.bounds is None:
        return GridDensity.normalized(grid, vals)
    L, U = cfg.bounds
    vals = np.clip(vals, 0.0, None)
    vals = vals / float(np.sum(vals * grid.weights))
    out = project_to_bounds(grid, vals, L, U)
    out = np.clip(out, L, U)
    return GridDensity(grid, out, bounds=(L, U))


def load_samples_csv(path, source_id: int = 0, bounds=None) -> SampleSet:
    """Read a sample file with header ``x1[,x2]`` and one point per row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = [f"x{k + 1}" for k in range(len(header))]
        if header != expected or len(header) not in (1, 2):
            raise ValueError(f"{path}: header must be x1 or x1,x2, got {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    pts = np.array(rows, dtype=float).reshape(-1, len(header))
    return SampleSet(pts, source_id, bounds)


def save_samples_csv(samples: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k + 1}" for k in range(samples.dim)])
        for p in samples.points:
            writer.writerow([repr(float(v)) for v in p])
