"""Legendre conjugates, c-transforms and transport maps for the cost |x - y|^2 / 2.

All suprema run over the grid nodes. The discrete conjugate is computed exactly
(lower hull + merge per 1-D line, one pass per axis). Optionally the maximizer
is refined below grid resolution by fitting a parabola through the maximizing
node and its axis neighbours; this is exact when the objective is quadratic
and is what keeps pushforwards of smooth maps from being lumpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import Grid, GridPotential

__all__ = [
    "PotentialClassParams",
    "Bump",
    "FabSpec",
    "legendre_conjugate",
    "legendre_batch",
    "refine_maximizers",
    "c_transform_batch",
    "c_transform",
    "transport_map",
    "make_fab_potential",
    "random_fab_spec",
    "verify_conjugate_curvature",
    "CurvatureReport",
]


@dataclass(frozen=True)
class PotentialClassParams:
    """Curvature band ``alpha I <= Hess phi <= beta I`` for ``phi = |x|^2/2 - f``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 < self.alpha <= self.beta < np.inf):
            raise ValueError(f"need 0 < alpha <= beta < inf, got {self.alpha}, {self.beta}")


# ---------------------------------------------------------------------------
# discrete Legendre transform


def _pass(axis_y: np.ndarray, vals: np.ndarray, axis_x: np.ndarray):
    vals = np.ascontiguousarray(vals, dtype=float)
    R = vals.shape[0]
    out_v = np.empty((R, axis_x.shape[0]))
    out_i = np.empty((R, axis_x.shape[0]), dtype=np.int64)
    _kernels.legendre_rows(axis_y, vals, axis_x, out_v, out_i)
    return out_v, out_i


def _refine_1d(g_minus, g0, g_plus, h):
    a = g0 - g_minus
    b = g0 - g_plus
    s = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(s > 0, h * (a - b) / (2.0 * s), 0.0)
        dv = np.where(s > 0, (a - b) ** 2 / (8.0 * s), 0.0)
    return np.clip(t, -h / 2, h / 2), dv


def legendre_batch(grid: Grid, theta: np.ndarray, refine: bool = False):
    """Conjugate ``theta*(x) = max_y <x, y> - theta(y)`` for a batch of arrays.

    Args:
        grid: the grid carrying both ``x`` and ``y``.
        theta: values of shape ``(B, *grid.shape)``.
        refine: if True, correct maximizers and values by a three-point
            parabola fit along each axis (interior maximizers only).

    Returns:
        ``(conj, argmax)`` where ``conj`` has shape ``(B, *shape)`` and ``argmax``
        has shape ``(B, *shape, d)``. Without refinement ``argmax`` holds node
        indices (as floats would lose the tie rule, they are int64); with
        refinement it holds maximizer coordinates.
    """
    theta = np.asarray(theta, dtype=float)
    B = theta.shape[0]
    if grid.dim == 1:
        (y,) = grid.axes
        conj, idx = _pass(y, theta, y)
        idx = idx[..., None]
    else:
        y1, y2 = grid.axes
        n1, n2 = grid.sizes
        # inner pass over y2 for each (b, y1)
        A, I2 = _pass(y2, theta.reshape(B * n1, n2), y2)
        A = A.reshape(B, n1, n2)
        I2 = I2.reshape(B, n1, n2)
        # outer pass over y1 for each (b, x2)
        negA = -np.swapaxes(A, 1, 2).reshape(B * n2, n1)
        C, I1 = _pass(y1, negA, y1)
        conj = np.swapaxes(C.reshape(B, n2, n1), 1, 2)
        I1 = np.swapaxes(I1.reshape(B, n2, n1), 1, 2)  # (B, x1, x2) -> y1 index
        bidx = np.arange(B)[:, None, None]
        x2idx = np.arange(n2)[None, None, :]
        I2at = I2[bidx, I1, x2idx]
        idx = np.stack([I1, I2at], axis=-1)
    if not refine:
        return conj, idx
    return refine_maximizers(grid, theta, conj, idx)


def refine_maximizers(grid: Grid, theta, conj, idx):
    """Parabolic sub-grid correction of discrete maximizers and values.

    Along each axis, fits a parabola through the maximizing node and its two
    neighbours; the vertex offset lies in ``[-h/2, h/2]``. Maximizers on the
    boundary of the box are left in place.

    Returns:
        ``(refined_conj, coords)`` with ``coords`` of shape ``idx.shape``.
    """
    B = theta.shape[0]
    pts = grid.points
    coords = np.empty(idx.shape, dtype=float)
    conj = conj.copy()
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        n = grid.sizes[ax]
        k = idx[..., ax]
        coords[..., ax] = grid.axes[ax][k]
        inner = (k > 0) & (k < n - 1)
        km = np.clip(k - 1, 0, n - 1)
        kp = np.clip(k + 1, 0, n - 1)

        def g_at(kk):
            full = [idx[..., j] for j in range(grid.dim)]
            full[ax] = kk
            yv = sum(pts[..., j][None] * grid.axes[j][full[j]] for j in range(grid.dim))
            tv = theta[(np.arange(B).reshape((B,) + (1,) * grid.dim),) + tuple(full)]
            return yv - tv

        g0, gm, gp = g_at(k), g_at(km), g_at(kp)
        t, dv = _refine_1d(gm, g0, gp, h)
        t = np.where(inner, t, 0.0)
        dv = np.where(inner, dv, 0.0)
        coords[..., ax] += t
        conj += dv
    return conj, coords


def legendre_conjugate(theta, refine: bool = False):
    """Conjugate of a single grid function.

    Returns:
        ``(GridPotential, argmax)``; ``argmax`` has shape ``(*shape, d)`` and
        holds node indices, or maximizer coordinates when ``refine`` is True.
        Ties go to the lowest index.
    """
    grid = theta.grid
    conj, arg = legendre_batch(grid, theta.values[None], refine=refine)
    return GridPotential(grid, conj[0]), arg[0]


def c_transform_batch(grid: Grid, f: np.ndarray, refine: bool = False):
    """``f^c = |x|^2/2 - (|y|^2/2 - f)^*`` and maximizers for a batch ``(B, *shape)``."""
    q = grid.sqnorm
    conj, arg = legendre_batch(grid, q[None] - f, refine=refine)
    return q[None] - conj, arg


def c_transform(f: GridPotential) -> GridPotential:
    """``f^c(x) = min_y |x - y|^2/2 - f(y)`` over grid nodes ``y``."""
    fc, _ = c_transform_batch(f.grid, f.values[None])
    return GridPotential(f.grid, fc[0])


def indices_to_points(grid: Grid, idx: np.ndarray) -> np.ndarray:
    return np.stack([grid.axes[a][idx[..., a]] for a in range(grid.dim)], axis=-1)


def transport_map(f: GridPotential, refine: bool = True) -> np.ndarray:
    """The map ``T_{f^c}(x) = grad theta*(x)``, shape ``(*shape, d)``.

    Read off the maximizer of ``<x, y> - theta(y)``; with ``refine=False`` the
    map is node-valued (lowest-index ties).
    """
    grid = f.grid
    _, arg = c_transform_batch(grid, f.values[None], refine=refine)
    arg = arg[0]
    return arg if refine else indices_to_points(grid, arg)


# ---------------------------------------------------------------------------
# certified members of the potential class


@dataclass(frozen=True)
class Bump:
    """Cosine bump ``amplitude * cos(pi <freq, x> + phase)``."""

    amplitude: float
    freq: tuple
    phase: float = 0.0

    @property
    def hessian_bound(self) -> float:
        return abs(self.amplitude) * np.pi**2 * float(np.sum(np.square(self.freq)))


@dataclass(frozen=True)
class FabSpec:
    """``f(x) = (1 - c)|x|^2/2 + <b, x> + sum of bumps``.

    Then ``phi = |x|^2/2 - f`` has Hessian ``c I - sum Hess(bumps)``, whose
    eigenvalues lie in ``[c - B, c + B]`` with ``B`` the summed bump bounds.
    """

    c: float
    b: tuple = (0.0,)
    bumps: tuple = field(default_factory=tuple)

    @property
    def hessian_band(self) -> tuple:
        slack = sum(bp.hessian_bound for bp in self.bumps)
        return self.c - slack, self.c + slack

    def phi_hessian_band(self) -> tuple:
        return self.hessian_band

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = pts.shape[-1]
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (d,))
        out = 0.5 * (1.0 - self.c) * np.sum(pts**2, axis=-1) + pts @ b
        for bp in self.bumps:
            k = np.broadcast_to(np.asarray(bp.freq, dtype=float), (d,))
            out = out + bp.amplitude * np.cos(np.pi * (pts @ k) + bp.phase)
        return out

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = pts.shape[-1]
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (d,))
        out = (1.0 - self.c) * pts + b
        for bp in self.bumps:
            k = np.broadcast_to(np.asarray(bp.freq, dtype=float), (d,))
            s = -bp.amplitude * np.pi * np.sin(np.pi * (pts @ k) + bp.phase)
            out = out + s[..., None] * k
        return out


def make_fab_potential(params: PotentialClassParams, spec: FabSpec, grid: Grid) -> GridPotential:
    """Sample a potential whose Brenier potential is certified in the class.

    Raises:
        ValueError: if the analytic Hessian band of ``spec`` is not inside
            ``[alpha, beta]``.
    """
    lo, hi = spec.hessian_band
    tol = 1e-12
    if lo < params.alpha - tol or hi > params.beta + tol:
        raise ValueError(
            f"Hessian band [{lo:.6g}, {hi:.6g}] not inside [{params.alpha}, {params.beta}]"
        )
    return GridPotential(grid, spec.evaluate(grid.points))


def random_fab_spec(params: PotentialClassParams, rng, dim: int = 1,
                    max_shift: float = 0.1, n_bumps: int = 2) -> FabSpec:
    """Draw a random spec whose Hessian band fits inside ``[alpha, beta]``."""
    rng = np.random.default_rng(rng)
    c = rng.uniform(params.alpha, params.beta)
    room = min(c - params.alpha, params.beta - c)
    b = tuple(rng.uniform(-max_shift, max_shift, size=dim))
    bumps = []
    if room > 0 and n_bumps > 0:
        share = rng.uniform(0.2, 1.0) * room / n_bumps
        for _ in range(n_bumps):
            freq = tuple(float(v) for v in rng.integers(0, 3, size=dim))
            if not any(freq):
                freq = (1.0,) + freq[1:]
            k2 = float(np.sum(np.square(freq)))
            amp = share / (np.pi**2 * k2) * rng.choice([-1.0, 1.0])
            bumps.append(Bump(amp, freq, float(rng.uniform(0, 2 * np.pi))))
    return FabSpec(c, b, tuple(bumps))


# ---------------------------------------------------------------------------
# curvature of the conjugate


@dataclass(frozen=True)
class CurvatureReport:
    lo: float
    hi: float
    band: tuple
    tol: float
    nodes: int
    passed: bool


def verify_conjugate_curvature(phi: GridPotential, params: PotentialClassParams,
                               tol: float | None = None) -> CurvatureReport:
    """Check ``1/beta <= D^2 phi* <= 1/alpha`` by second differences.

    Uses refined conjugate values and only nodes whose maximizer, and that of
    both axis neighbours, is interior (where the box does not flatten
    ``phi*``). ``tol`` defaults to ``5h``.
    """
    grid = phi.grid
    if tol is None:
        tol = 5.0 * grid.h
    conj, arg = legendre_batch(grid, phi.values[None], refine=True)
    conj, arg = conj[0], arg[0]
    lo_b = np.array([b[0] for b in grid.bounds])
    hi_b = np.array([b[1] for b in grid.bounds])
    h_arr = np.array(grid.spacing)
    interior = np.all((arg > lo_b + h_arr) & (arg < hi_b - h_arr), axis=-1)
    curv = []
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        c0 = [slice(None)] * grid.dim
        cm = [slice(None)] * grid.dim
        cp = [slice(None)] * grid.dim
        c0[ax] = slice(1, -1)
        cm[ax] = slice(0, -2)
        cp[ax] = slice(2, None)
        d2 = (conj[tuple(cp)] - 2 * conj[tuple(c0)] + conj[tuple(cm)]) / h**2
        ok = interior[tuple(c0)] & interior[tuple(cm)] & interior[tuple(cp)]
        curv.append(d2[ok])
    vals = np.concatenate(curv) if curv else np.empty(0)
    band = (1.0 / params.beta, 1.0 / params.alpha)
    if vals.size == 0:
        return CurvatureReport(np.nan, np.nan, band, tol, 0, False)
    lo, hi = float(vals.min()), float(vals.max())
    passed = lo >= band[0] - tol and hi <= band[1] + tol
    return CurvatureReport(lo, hi, band, tol, int(vals.size), passed)
