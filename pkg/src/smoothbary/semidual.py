"""Semi-dual barycenter objective, its Sobolev gradient, and gradient ascent.

For marginals ``mu_1..mu_m`` with weights ``w`` the dual variable is
``(f_1, .., f_{m-1})`` and ``f_mix = -sum_j (w_j / w_m) f_j``. The objective is

    D(f) = sum_{i<m} w_i int f_i^c dmu_i + w_m int f_mix^c dmu_m,

and its gradient in the weighted H^1 product geometry has components
``nu_mix - nu_i`` with ``nu_i`` the pushforward of ``mu_i`` by the map of
``f_i^c``. Objective values use the exact discrete c-transform; pushforwards
use sub-grid refined maps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .ctransform import (
    PotentialClassParams,
    legendre_batch,
    make_fab_potential,
    random_fab_spec,
    refine_maximizers,
)
from .grid import Grid, GridDensity, GridPotential, SignedGridMeasure, deposit_masses
from .sobolev import ProductTangent, hneg1_sq_array, inverse_laplacian_array

__all__ = [
    "BarycenterProblem",
    "PotentialSet",
    "SolveReport",
    "f_mix",
    "dual_objective",
    "dual_gradient",
    "gradient_norm",
    "pairing",
    "sga_solve",
    "reconstruct_barycenter",
    "check_strong_concavity",
    "check_pl_inequality",
    "ConcavityReport",
    "PLReport",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BarycenterProblem:
    """Marginal densities on one grid and barycentric weights."""

    densities: tuple
    weights: tuple

    def __post_init__(self):
        dens = tuple(self.densities)
        w = np.asarray(self.weights, dtype=float)
        if len(dens) < 2:
            raise ValueError("need at least two marginals")
        if w.shape != (len(dens),):
            raise ValueError("need one weight per marginal")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
        grid = dens[0].grid
        if any(d.grid != grid for d in dens):
            raise ValueError("all marginals must share one grid")
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def grid(self) -> Grid:
        return self.densities[0].grid

    @property
    def m(self) -> int:
        return len(self.densities)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def stack(self) -> np.ndarray:
        return np.stack([d.values for d in self.densities])


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """Dual variable ``(f_1, .., f_{m-1})`` together with all ``m`` weights."""

    potentials: tuple
    weights: tuple

    def __post_init__(self):
        pots = tuple(self.potentials)
        w = tuple(float(x) for x in self.weights)
        if len(pots) != len(w) - 1:
            raise ValueError(f"need m - 1 = {len(w) - 1} potentials, got {len(pots)}")
        grid = pots[0].grid
        if any(p.grid != grid for p in pots):
            raise ValueError("all potentials must share one grid")
        object.__setattr__(self, "potentials", pots)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, prob: BarycenterProblem) -> "PotentialSet":
        z = GridPotential(prob.grid, np.zeros(prob.grid.shape))
        return cls((z,) * (prob.m - 1), prob.weights)

    @classmethod
    def from_array(cls, grid: Grid, F: np.ndarray, weights) -> "PotentialSet":
        return cls(tuple(GridPotential(grid, f) for f in F), weights)

    @property
    def grid(self) -> Grid:
        return self.potentials[0].grid

    @property
    def array(self) -> np.ndarray:
        return np.stack([p.values for p in self.potentials])

    def normalized(self) -> "PotentialSet":
        """Shift each component so that its maximum is zero."""
        return PotentialSet.from_array(self.grid, _normalize(self.array), self.weights)


def _normalize(F: np.ndarray) -> np.ndarray:
    axes = tuple(range(1, F.ndim))
    return F - F.max(axis=axes, keepdims=True)


def _mix_array(F: np.ndarray, w: np.ndarray) -> np.ndarray:
    if not w[-1] > 0:
        raise ValueError("the last weight must be positive to form f_mix")
    return -np.tensordot(w[:-1] / w[-1], F, axes=1)


def f_mix(ps: PotentialSet) -> GridPotential:
    """``f_mix = -sum_{j<m} (w_j / w_m) f_j``.

    Raises:
        ValueError: if ``w_m == 0``.
    """
    return GridPotential(ps.grid, _mix_array(ps.array, np.asarray(ps.weights)))


# ---------------------------------------------------------------------------
# evaluation engine on raw arrays


@dataclass
class _State:
    F: np.ndarray
    value: float
    pushed: np.ndarray | None = None  # (m, *shape) pushforward densities
    maps: np.ndarray | None = None  # (m, *shape, d)


def _check_grid(ps: PotentialSet, prob: BarycenterProblem) -> None:
    if ps.grid != prob.grid:
        raise ValueError("potentials and marginals live on different grids")
    if len(ps.potentials) != prob.m - 1:
        raise ValueError("potential count does not match the problem")


def _evaluate(grid: Grid, mus: np.ndarray, w: np.ndarray, F: np.ndarray,
              with_maps: bool = True) -> _State:
    G = np.concatenate([F, _mix_array(F, w)[None]])
    q = grid.sqnorm
    theta = q[None] - G
    conj, idx = legendre_batch(grid, theta)
    fc = q[None] - conj
    axes = tuple(range(1, fc.ndim))
    value = float(np.dot(w, np.sum(fc * mus * grid.weights, axis=axes)))
    state = _State(F, value)
    if with_maps:
        _, coords = refine_maximizers(grid, theta, conj, idx)
        pushed = deposit_masses(grid, coords, mus * grid.weights) / grid.weights
        state.maps = coords
        state.pushed = pushed
    return state


def _grad_components(state: _State) -> np.ndarray:
    p = state.pushed
    return p[-1][None] - p[:-1]


def _grad_sq(grid: Grid, w: np.ndarray, g: np.ndarray) -> float:
    return float(np.dot(w[:-1], hneg1_sq_array(grid, g, check=False)))


def _direction(grid: Grid, w: np.ndarray, state: _State, geometry: str) -> np.ndarray:
    if geometry == "product":
        rhs = _grad_components(state)
    else:
        nubar = np.tensordot(w, state.pushed, axes=1)
        rhs = nubar[None] - state.pushed[:-1]
    return inverse_laplacian_array(grid, rhs, check=False)


# ---------------------------------------------------------------------------
# public objective / gradient API


def dual_objective(ps: PotentialSet, prob: BarycenterProblem) -> float:
    """Trapezoidal quadrature of the semi-dual objective."""
    _check_grid(ps, prob)
    return _evaluate(prob.grid, prob.stack, prob.w, ps.array, with_maps=False).value


def dual_gradient(ps: PotentialSet, prob: BarycenterProblem) -> ProductTangent:
    """Components ``T_mix # mu_m - T_i # mu_i`` as zero-mass signed measures."""
    _check_grid(ps, prob)
    state = _evaluate(prob.grid, prob.stack, prob.w, ps.array)
    comps = tuple(SignedGridMeasure(prob.grid, g) for g in _grad_components(state))
    return ProductTangent(comps, prob.weights[:-1], mode="dual")


def gradient_norm(t: ProductTangent) -> float:
    """``sqrt(sum_i w_i ||t_i||_{H^-1}^2)``."""
    vals = np.stack([c.values for c in t.components])
    sq = hneg1_sq_array(t.grid, vals)
    return float(np.sqrt(np.dot(t.weights, sq)))


def pairing(t: ProductTangent, phis) -> float:
    """``sum_i w_i int phi_i dt_i``: action of a dual tangent on potentials."""
    grid = t.grid
    total = 0.0
    for w, c, phi in zip(t.weights, t.components, phis):
        vals = phi.values if hasattr(phi, "values") else np.asarray(phi)
        total += w * float(np.sum(vals * c.values * grid.weights))
    return total


@dataclass
class SolveReport:
    """Outcome of :func:`sga_solve`."""

    value: float
    grad_norm_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    value_history: list = field(default_factory=list)
    step: float = 1.0
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def sga_solve(prob: BarycenterProblem, init: PotentialSet | None = None, step: float = 1.0,
              max_iter: int = 2000, tol: float = 1e-4, geometry: str = "product",
              armijo: float = 1e-4, slack: float = 1e-8, stall_window: int = 100,
              stall_tol: float = 1e-6, callback=None):
    """Sobolev gradient ascent on the semi-dual objective.

    Each iteration moves ``f_i`` by ``step * (-Delta)^-1 (direction_i)`` and
    shifts every component to ``max f_i = 0``. With ``geometry="product"`` the
    direction is ``nu_mix - nu_i`` (the weighted product-space gradient). With
    ``geometry="symmetric"`` it is ``nu_bar - nu_i`` with ``nu_bar`` the
    weighted mean of all ``m`` pushforwards, which is the gradient after
    treating ``f_mix`` as an ``m``-th free potential and projecting onto the
    constraint ``sum_j w_j f_j = 0``; it is better conditioned for large ``m``.

    A trial step is accepted when the objective rises by at least
    ``armijo * step * slope - slack``; otherwise the step is halved. The
    accepted step carries over to the next iteration.

    Args:
        prob: marginals and weights.
        init: starting potentials (zeros when omitted).
        step: initial step.
        max_iter: iteration cap.
        tol: stop once the gradient norm is at most ``tol``.
        geometry: ``"product"`` or ``"symmetric"``.
        armijo: sufficient-increase constant.
        slack: tolerance for round-off in the acceptance test.
        stall_window: look-back length for the stall test (0 disables it).
        stall_tol: stop once the best value of the last ``stall_window``
            iterations exceeds the value before them by at most
            ``stall_tol * |value|``. On a grid the gradient norm
            bottoms out at a discretization floor, after which the objective
            only fluctuates at round-off level.
        callback: optional ``callback(iteration, PotentialSet, value, grad_norm)``.

    Returns:
        ``(PotentialSet, SolveReport)``.

    Raises:
        FloatingPointError: if the objective becomes non-finite.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if geometry not in ("product", "symmetric"):
        raise ValueError(f"unknown geometry {geometry!r}")
    grid, mus, w = prob.grid, prob.stack, prob.w
    if init is None:
        init = PotentialSet.zeros(prob)
    _check_grid(init, prob)
    F = _normalize(init.array)
    state = _evaluate(grid, mus, w, F)
    if not np.isfinite(state.value):
        raise FloatingPointError("objective is not finite at the initial point")
    report = SolveReport(value=state.value, step=step)
    s = step
    it = 0
    while True:
        g = _grad_components(state)
        gn = float(np.sqrt(max(_grad_sq(grid, w, g), 0.0)))
        report.grad_norm_history.append(gn)
        report.value_history.append(state.value)
        if callback is not None:
            callback(it, PotentialSet.from_array(grid, state.F, prob.weights), state.value, gn)
        if gn <= tol:
            report.converged = True
            report.message = "gradient norm below tolerance"
            break
        if it >= max_iter:
            report.message = "iteration cap reached"
            break
        vh = report.value_history
        if stall_window and len(vh) > stall_window:
            base = vh[-stall_window - 1]
            if max(vh[-stall_window:]) - base <= stall_tol * abs(base):
                report.message = "objective stalled"
                break
        d = _direction(grid, w, state, geometry)
        slope = float(np.dot(w[:-1], np.sum(d * g * grid.weights, axis=tuple(range(1, g.ndim)))))
        while True:
            trial = _evaluate(grid, mus, w, _normalize(state.F + s * d))
            if not np.isfinite(trial.value):
                raise FloatingPointError(f"objective became non-finite at iteration {it}")
            if trial.value >= state.value + armijo * s * slope - slack:
                break
            s *= 0.5
            if s < 1e-12:
                trial = None
                break
        if trial is None:
            report.message = "line search failed"
            log.warning("line search stalled at iteration %d (grad norm %.3e)", it, gn)
            break
        state = trial
        it += 1
    report.value = state.value
    report.iterations = it
    report.step = s
    return PotentialSet.from_array(grid, state.F, prob.weights), report


def pushforwards(ps: PotentialSet, prob: BarycenterProblem) -> np.ndarray:
    """All ``m`` pushforward densities ``T_j # mu_j`` (mix last), shape ``(m, *shape)``."""
    _check_grid(ps, prob)
    return _evaluate(prob.grid, prob.stack, prob.w, ps.array).pushed


def reconstruct_barycenter(ps: PotentialSet, prob: BarycenterProblem) -> GridDensity:
    """Weighted average of all ``m`` pushforwards, renormalized."""
    pushed = pushforwards(ps, prob)
    return GridDensity.normalized(prob.grid, np.tensordot(prob.w, pushed, axes=1))


# ---------------------------------------------------------------------------
# strong concavity and PL checks


@dataclass
class ConcavityReport:
    trials: int
    passed: int
    skipped: int
    worst_margin: float
    lam: float
    margins: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.trials and self.trials > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def concavity_constant(L: float, params: PotentialClassParams, d: int) -> float:
    """``lambda = L alpha^(d+1) / beta^2``."""
    return L * params.alpha ** (d + 1) / params.beta**2


def _mix_lower_band(specs, w: np.ndarray) -> float:
    """Lower Hessian bound of ``|x|^2/2 - f_mix`` from the component bands."""
    his = np.array([s.hessian_band[1] for s in specs])
    return float((1.0 - np.dot(w[:-1], his)) / w[-1])


def _certified_set(prob, params, rng, max_shift, attempts=100):
    w = prob.w
    for _ in range(attempts):
        specs = [random_fab_spec(params, rng, prob.grid.dim, max_shift) for _ in range(prob.m - 1)]
        if _mix_lower_band(specs, w) > 0:
            F = np.stack([make_fab_potential(params, s, prob.grid).values for s in specs])
            return specs, F
    return None, None


def _primal_sq(grid: Grid, w: np.ndarray, E: np.ndarray) -> float:
    total = 0.0
    for i, e in enumerate(E):
        grads = [np.gradient(e, grid.spacing[0])] if grid.dim == 1 else np.gradient(e, *grid.spacing)
        total += w[i] * sum(float(np.sum(gr * gr * grid.weights)) for gr in grads)
    return total


def check_strong_concavity(prob: BarycenterProblem, params: PotentialClassParams,
                           trials: int = 100, seed=0, L: float | None = None,
                           max_shift: float = 0.05, pairs=None) -> ConcavityReport:
    """Check ``D(g) - D(f) - <grad D(f), g - f> <= -(lam/2)||g - f||^2 + slack``.

    ``f`` and ``g`` are drawn from certified class members whose mix potential
    keeps ``|x|^2/2 - g_mix`` convex (checked analytically; failures are
    redrawn and counted as skipped). ``lam = L alpha^(d+1) / beta^2`` with ``L``
    the smallest marginal value unless given. The slack is ``10 h ||g - f||``.
    Explicit ``pairs`` of ``(F, G)`` arrays bypass the generator.
    """
    grid, mus, w = prob.grid, prob.stack, prob.w
    if L is None:
        L = float(mus.min())
    lam = concavity_constant(L, params, grid.dim)
    rng = np.random.default_rng(seed)
    margins, skipped = [], 0
    passed = 0
    todo = list(pairs) if pairs is not None else [None] * trials
    for item in todo:
        if item is None:
            _, F = _certified_set(prob, params, rng, max_shift)
            _, G = _certified_set(prob, params, rng, max_shift)
            if F is None or G is None:
                skipped += 1
                continue
        else:
            F, G = item
        F, G = _normalize(F), _normalize(G)
        sf = _evaluate(grid, mus, w, F)
        dg = _evaluate(grid, mus, w, G, with_maps=False).value
        g = _grad_components(sf)
        E = G - F
        lin = float(np.dot(w[:-1], np.sum(g * E * grid.weights, axis=tuple(range(1, E.ndim)))))
        sq = _primal_sq(grid, w, E)
        lhs = dg - sf.value - lin
        rhs = -0.5 * lam * sq + 10.0 * grid.h * np.sqrt(sq)
        margin = lhs - rhs
        margins.append(float(margin))
        passed += int(margin <= 0)
    worst = max(margins) if margins else float("nan")
    return ConcavityReport(len(margins), passed, skipped, float(worst), lam, margins)


@dataclass
class PLReport:
    points: int
    passed: int
    worst_ratio: float
    lam: float
    monotone: bool
    gaps: list = field(default_factory=list)
    bounds: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.points and self.points > 0 and self.monotone

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def check_pl_inequality(prob: BarycenterProblem, params: PotentialClassParams,
                        trials: int = 1, seed=0, L: float | None = None, points: int = 50,
                        step: float = 1.0, slack: float | None = None,
                        ref_tol: float = 1e-7, ref_iter: int = 5000) -> PLReport:
    """Check ``D* - D(f_t) <= ||grad D(f_t)||^2 / (2 lam) + slack`` along SGA paths.

    ``D*`` comes from a long high-precision solve. The first trajectory starts
    at zero; further ones start from certified random members. Each trajectory
    contributes up to ``points`` iterates. ``slack`` defaults to ``h^2``;
    ``worst_ratio`` is taken over iterates whose gap exceeds it.
    """
    grid = prob.grid
    if L is None:
        L = float(prob.stack.min())
    lam = concavity_constant(L, params, grid.dim)
    if slack is None:
        slack = grid.h**2
    _, ref = sga_solve(prob, step=step, tol=ref_tol, max_iter=ref_iter)
    best = ref.value
    rng = np.random.default_rng(seed)
    paths = []
    for t in range(trials):
        init = None
        if t > 0:
            _, F = _certified_set(prob, params, rng, 0.05)
            if F is not None:
                init = PotentialSet.from_array(grid, F, prob.weights)
        rec = []
        sga_solve(prob, init=init, step=step, tol=0.0, max_iter=points - 1,
                  callback=lambda i, ps, v, gn: rec.append((v, gn)))
        best = max(best, max(v for v, _ in rec))
        paths.append(rec)
    gaps, bounds = [], []
    monotone = True
    for rec in paths:
        traj = [best - v for v, _ in rec]
        monotone &= all(b <= a + 1e-8 for a, b in zip(traj, traj[1:]))
        gaps.extend(traj)
        bounds.extend(gn**2 / (2 * lam) for _, gn in rec)
    passed = sum(int(gp <= b + slack) for gp, b in zip(gaps, bounds))
    # ratios are only meaningful above the discretization floor set by ``slack``
    ratios = [gp / b for gp, b in zip(gaps, bounds) if b > 0 and gp > slack]
    return PLReport(len(gaps), passed, float(max(ratios) if ratios else 0.0), lam,
                    bool(monotone), gaps, bounds)

