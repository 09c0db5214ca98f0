"""Reference evaluators: exact 1-D transport, barycenter oracles, a small LP, and d=2 Sinkhorn.

In one dimension every quantity reduces to quantile functions of the
piecewise-linear density interpolants, which are inverted in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .grid import Grid, GridDensity, cdf_1d, inverse_cdf, pushforward
from .simplex import solve_lp

__all__ = [
    "K_QUANTILES",
    "QuantileRep",
    "quantiles",
    "w2_1d",
    "w1_1d",
    "barycenter_1d_oracle",
    "barycenter_functional_oracle",
    "variance_functional_1d",
    "location_scatter_oracle",
    "lp_barycenter_fixed_support",
    "w2_entropic_2d",
    "sinkhorn_divergence_2d",
]

K_QUANTILES = 4096
LP_MAX_ATOMS = 6
LP_MAX_SUPPORT = 40


@dataclass(frozen=True, eq=False)
class QuantileRep:
    """Quantile function sampled at levels ``q`` (strictly inside (0, 1))."""

    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.values) < -1e-12):
            raise ValueError("quantile values must be nondecreasing")


def _require_1d(*dens) -> None:
    for d in dens:
        if d.grid.dim != 1:
            raise ValueError("this evaluator needs d = 1")


def quantiles(mu: GridDensity, K: int = K_QUANTILES) -> QuantileRep:
    """Quantile function at the midpoint levels ``(k + 1/2) / K``."""
    _require_1d(mu)
    q = (np.arange(K) + 0.5) / K
    return QuantileRep(q, inverse_cdf(mu, q))


def w2_1d(mu: GridDensity, nu: GridDensity, K: int = K_QUANTILES) -> float:
    """``W_2`` via midpoint quantile quadrature with ``K`` levels."""
    _require_1d(mu, nu)
    diff = quantiles(mu, K).values - quantiles(nu, K).values
    return float(np.sqrt(np.mean(diff**2)))


def w1_1d(mu: GridDensity, nu: GridDensity, sub: int = 16) -> float:
    """``W_1 = int |F_mu - F_nu| dx`` on the merged node set, ``sub`` points per cell."""
    _require_1d(mu, nu)
    nodes = np.union1d(mu.grid.axes[0], nu.grid.axes[0])
    t = np.linspace(0.0, 1.0, sub + 1)[:-1]
    x = (nodes[:-1, None] + np.diff(nodes)[:, None] * t[None]).ravel()
    x = np.append(x, nodes[-1])
    diff = np.abs(cdf_1d(mu, x) - cdf_1d(nu, x))
    return float(np.trapezoid(diff, x))


def _weights(prob) -> np.ndarray:
    return np.asarray(prob.weights, dtype=float)


def barycenter_1d_oracle(prob, K: int = 4 * K_QUANTILES) -> GridDensity:
    """Barycenter whose quantile function is the weighted mean of the marginal ones.

    The averaged quantile function is taken at ``K + 1`` equispaced levels;
    each of the ``K`` quantile segments carries mass ``1/K`` spread uniformly,
    and is deposited exactly on the dual cells of the grid.
    """
    _require_1d(*prob.densities)
    grid = prob.grid
    q = np.linspace(0.0, 1.0, K + 1)
    Q = sum(w * inverse_cdf(mu, q) for w, mu in zip(_weights(prob), prob.densities))
    Q = np.maximum.accumulate(Q)
    (lo, _), = grid.bounds
    out = np.zeros((1, grid.sizes[0]))
    _kernels.deposit_intervals(
        np.ascontiguousarray(Q[None, :-1]), np.ascontiguousarray(Q[None, 1:]),
        np.full((1, K), 1.0 / K), lo, grid.spacing[0], grid.sizes[0], out,
    )
    return GridDensity.normalized(grid, out[0] / grid.weights)


def barycenter_functional_oracle(prob, K: int = K_QUANTILES) -> float:
    """``sum_j (w_j/2) W_2^2(bary, mu_j)`` computed from quantile functions.

    Uses ``W_2^2(bary, mu_j) = int (Qbar - Q_j)^2`` with ``Qbar`` the weighted
    mean quantile function, which avoids a second discretization of the
    barycenter density.
    """
    _require_1d(*prob.densities)
    w = _weights(prob)
    Qs = np.stack([quantiles(mu, K).values for mu in prob.densities])
    Qbar = w @ Qs
    return float(np.sum(0.5 * w * np.mean((Qs - Qbar) ** 2, axis=1)))


def variance_functional_1d(candidate: GridDensity, prob) -> float:
    """``V(nu) = sum_j (w_j/2) W_2^2(nu, mu_j)``."""
    return float(sum(0.5 * w * w2_1d(candidate, mu) ** 2
                     for w, mu in zip(_weights(prob), prob.densities)))


def location_scatter_oracle(reference: GridDensity, scales, shifts, weights) -> GridDensity:
    """Barycenter of the affine family ``x -> A_j x + b_j`` applied to a reference.

    In d = 1 it is the reference pushed by ``x -> (sum w_j A_j) x + sum w_j b_j``.

    Raises:
        ValueError: on a nonpositive scale or mismatched lengths.
    """
    _require_1d(reference)
    A = np.asarray(scales, dtype=float)
    b = np.asarray(shifts, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (A.shape == b.shape == w.shape):
        raise ValueError("scales, shifts and weights must have equal lengths")
    if np.any(A <= 0):
        raise ValueError("scales must be positive")
    a_bar, b_bar = float(w @ A), float(w @ b)
    T = a_bar * reference.grid.axes[0] + b_bar
    return pushforward(T, reference)


# ---------------------------------------------------------------------------
# fixed-support LP barycenter


@dataclass(frozen=True)
class LPBarycenter:
    support: np.ndarray
    masses: np.ndarray
    value: float
    status: str


def lp_barycenter_fixed_support(marginals, support, weights) -> LPBarycenter:
    """Exact barycenter of discrete measures restricted to a candidate support.

    Minimizes ``sum_j w_j <C_j, pi_j>`` with ``C_j(z, x) = |z - x|^2 / 2`` over
    couplings ``pi_j`` whose first marginal is a common free measure on
    ``support`` and whose second marginal is ``marginals[j]``.

    Args:
        marginals: list of ``(points, masses)``; ``points`` has shape ``(k, d)``
            with ``k <= 6`` and masses sum to one.
        support: candidate atoms, shape ``(s, d)`` with ``s <= 40``.
        weights: barycentric weights.

    Raises:
        ValueError: if a size cap is exceeded or inputs are inconsistent.
    """
    Z = np.atleast_2d(np.asarray(support, dtype=float))
    if Z.shape[0] == 1 and np.ndim(support) == 1:
        Z = Z.T
    s = Z.shape[0]
    if s > LP_MAX_SUPPORT:
        raise ValueError(f"support has {s} atoms; cap is {LP_MAX_SUPPORT}")
    w = np.asarray(weights, dtype=float)
    if len(w) != len(marginals):
        raise ValueError("need one weight per marginal")
    mats, blocks = [], []
    for pts, mass in marginals:
        X = np.asarray(pts, dtype=float).reshape(len(mass), -1)
        a = np.asarray(mass, dtype=float)
        if len(a) > LP_MAX_ATOMS:
            raise ValueError(f"marginal has {len(a)} atoms; cap is {LP_MAX_ATOMS}")
        if X.shape[1] != Z.shape[1]:
            raise ValueError("support and marginal dimensions differ")
        mats.append((X, a))
        blocks.append(s * len(a))
    nvar = sum(blocks) + s
    c = np.zeros(nvar)
    rows, rhs = [], []
    off = 0
    mu_off = sum(blocks)
    for (X, a), wj in zip(mats, w):
        k = len(a)
        C = 0.5 * np.sum((Z[:, None, :] - X[None, :, :]) ** 2, axis=-1)  # (s, k)
        c[off:off + s * k] = wj * C.ravel()
        for z in range(s):  # sum_x pi(z, x) - mu(z) = 0
            r = np.zeros(nvar)
            r[off + z * k: off + (z + 1) * k] = 1.0
            r[mu_off + z] = -1.0
            rows.append(r)
            rhs.append(0.0)
        for x in range(k):  # sum_z pi(z, x) = a(x)
            r = np.zeros(nvar)
            r[off + x: off + s * k: k] = 1.0
            rows.append(r)
            rhs.append(a[x])
        off += s * k
    res = solve_lp(c, np.array(rows), np.array(rhs))
    masses = res.x[mu_off:] if res.status == "optimal" else np.full(s, np.nan)
    return LPBarycenter(Z, masses, res.value, res.status)


# ---------------------------------------------------------------------------
# entropic transport on 2-D grids


def _sinkhorn_log(grid: Grid, a: np.ndarray, b: np.ndarray, eps: float,
                  tol: float, max_iter: int) -> float:
    """Entropic OT value ``<f, a> + <g, b>`` with separable log-domain updates."""
    x1, x2 = grid.axes
    C1 = 0.5 * (x1[:, None] - x1[None, :]) ** 2 / eps
    C2 = 0.5 * (x2[:, None] - x2[None, :]) ** 2 / eps
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)

    def softmin(pot, logw):
        # -eps * log sum_y exp((pot(y) - C(x, y)) / eps) w(y), contracted axis by axis
        v = pot / eps + logw  # (y1, y2)
        t = logsumexp(v[:, None, :] - C2[None, :, :], axis=2)  # (y1, x2)
        u = logsumexp(t[None, :, :] - C1[:, :, None], axis=1)  # (x1, x2)
        return -eps * u

    g = np.zeros(grid.shape)
    f = softmin(g, lb)
    for _ in range(max_iter):
        g = softmin(f, la)
        f_next = softmin(g, lb)
        # row marginal of the current plan is a * exp((f - f_next) / eps)
        err = float(np.sum(a * np.abs(np.expm1((f - f_next) / eps))))
        f = f_next
        if err <= tol:
            pos_a, pos_b = a > 0, b > 0
            return float(np.sum(f[pos_a] * a[pos_a]) + np.sum(g[pos_b] * b[pos_b]))
    raise RuntimeError(f"Sinkhorn did not reach marginal error {tol} in {max_iter} iterations")


def sinkhorn_divergence_2d(mu: GridDensity, nu: GridDensity, epsilon: float | None = None,
                           tol: float = 1e-7, max_iter: int = 100000) -> float:
    """Debiased entropic cost ``OT(mu, nu) - (OT(mu, mu) + OT(nu, nu)) / 2``."""
    grid = mu.grid
    if grid.dim != 2 or nu.grid != grid:
        raise ValueError("needs two densities on the same 2-D grid")
    if max(grid.sizes) > 64:
        raise ValueError("grid larger than 64 x 64")
    if epsilon is None:
        epsilon = 1e-3 * grid.diameter**2
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    a = mu.values * grid.weights
    b = nu.values * grid.weights
    a, b = a / a.sum(), b / b.sum()
    ab = _sinkhorn_log(grid, a, b, epsilon, tol, max_iter)
    aa = _sinkhorn_log(grid, a, a, epsilon, tol, max_iter)
    bb = _sinkhorn_log(grid, b, b, epsilon, tol, max_iter)
    return ab - 0.5 * (aa + bb)


def w2_entropic_2d(mu: GridDensity, nu: GridDensity, epsilon: float | None = None,
                   tol: float = 1e-7, max_iter: int = 100000) -> float:
    """Approximate ``W_2`` as ``sqrt(2 S_eps)`` for the cost ``|x - y|^2 / 2``.

    Default ``epsilon = 1e-3 diam^2``. Bias is of order ``eps log(1/eps)``.
    """
    s = sinkhorn_divergence_2d(mu, nu, epsilon, tol, max_iter)
    return float(np.sqrt(max(2.0 * s, 0.0)))
