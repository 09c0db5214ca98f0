"""Structural property suite: c-transform identities, curvature, concavity, PL, stability.

Each check returns a dict with ``name``, ``passed`` and the worst observed
margin; :func:`run_property_suite` runs them all with fixed seeds.
"""

from __future__ import annotations

import time

import numpy as np

from .ctransform import (
    PotentialClassParams,
    c_transform,
    c_transform_batch,
    make_fab_potential,
    random_fab_spec,
    verify_conjugate_curvature,
)
from .families import truncated_gaussian
from .grid import Grid, GridPotential, SignedGridMeasure, pushforward
from .semidual import (
    BarycenterProblem,
    check_pl_inequality,
    check_strong_concavity,
    sga_solve,
)
from .sobolev import hneg1_norm

__all__ = [
    "check_ctransform_identities",
    "check_curvature_bands",
    "check_change_of_variable",
    "check_pushforward_stability",
    "check_bounded_potentials",
    "run_property_suite",
]

# interior region of the symmetric test domain used by the c-transform checks
_DOMAIN = (-1.0, 1.0)


def _instances(params: PotentialClassParams, grid: Grid, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        spec = random_fab_spec(params, rng, grid.dim, max_shift=0.1)
        out.append((spec, make_fab_potential(params, spec, grid)))
    return out


def _reachable(spec, grid: Grid, margin: float) -> np.ndarray:
    """Nodes y with ``grad theta(y) = y - grad f(y)`` well inside the box."""
    pts = grid.points
    img = pts - spec.gradient(pts)
    lo = np.array([b[0] for b in grid.bounds]) + margin
    hi = np.array([b[1] for b in grid.bounds]) - margin
    inside = np.all((img > lo) & (img < hi), axis=-1)
    inside &= np.all((pts > lo) & (pts < hi), axis=-1)
    return inside


def check_ctransform_identities(count: int = 20, N: int = 256, seed: int = 0,
                                params: PotentialClassParams | None = None) -> dict:
    """Double transform, envelope and gradient identities on certified potentials.

    All three are checked at interior nodes whose optimal partner is interior,
    with tolerance ``C h`` (``C = 2`` for values, ``4`` for gradients).
    """
    params = params or PotentialClassParams(0.7, 1.3)
    grid = Grid.uniform(N, *_DOMAIN)
    h = grid.h
    worst = {"fcc": 0.0, "envelope": 0.0, "gradient": 0.0}
    for spec, f in _instances(params, grid, count, seed):
        fc = c_transform(f)
        fcc = c_transform(fc)
        mask = _reachable(spec, grid, 4 * h)
        worst["fcc"] = max(worst["fcc"], float(np.max(np.abs(fcc.values - f.values)[mask])))
        _, T = c_transform_batch(grid, f.values[None], refine=True)
        T = T[0]
        Tin = np.all((T > grid.bounds[0][0] + 2 * h) & (T < grid.bounds[0][1] - 2 * h), axis=-1)
        env = 0.5 * np.sum((T - grid.points) ** 2, axis=-1) - spec.evaluate(T)
        worst["envelope"] = max(worst["envelope"], float(np.max(np.abs(env - fc.values)[Tin])))
        gid = spec.gradient(T) - (T - grid.points)
        worst["gradient"] = max(worst["gradient"],
                                float(np.max(np.linalg.norm(gid, axis=-1)[Tin])))
    tol = {"fcc": 2 * h, "envelope": 2 * h, "gradient": 4 * h}
    passed = all(worst[k] <= tol[k] for k in worst)
    return {"name": "ctransform_identities", "passed": passed, "worst": worst, "tol": tol,
            "instances": count}


def check_curvature_bands(count: int = 20, N: int = 256, seed: int = 1,
                          params: PotentialClassParams | None = None) -> dict:
    """Second differences of ``phi*`` within ``[1/beta, 1/alpha]`` up to ``5h``."""
    params = params or PotentialClassParams(0.7, 1.3)
    grid = Grid.uniform(N, *_DOMAIN)
    reports = []
    for spec, f in _instances(params, grid, count, seed):
        phi = GridPotential(grid, grid.sqnorm - f.values)
        lo, hi = spec.hessian_band
        reports.append(verify_conjugate_curvature(phi, PotentialClassParams(lo, hi)))
    passed = all(r.passed for r in reports)
    return {"name": "conjugate_curvature", "passed": passed,
            "min": min(r.lo for r in reports), "max": max(r.hi for r in reports),
            "instances": count}


def check_change_of_variable(count: int = 20, N: int = 256, seed: int = 2, points: int = 200,
                             params: PotentialClassParams | None = None) -> dict:
    """``alpha |dphi* - dpsi*| <= |dpsi(dphi*) - dphi(dphi*)| <= beta |dphi* - dpsi*|``."""
    params = params or PotentialClassParams(0.7, 1.3)
    grid = Grid.uniform(N, *_DOMAIN)
    h = grid.h
    rng = np.random.default_rng(seed)
    inst = _instances(params, grid, 2 * count, seed)
    worst_lo, worst_hi = -np.inf, -np.inf
    for k in range(count):
        (sp, fp), (sq, fq) = inst[2 * k], inst[2 * k + 1]
        _, maps = c_transform_batch(grid, np.stack([fp.values, fq.values]), refine=True)
        Tp, Tq = maps[0].reshape(-1, grid.dim), maps[1].reshape(-1, grid.dim)
        inner = np.all((np.abs(Tp) < 1 - 2 * h) & (np.abs(Tq) < 1 - 2 * h), axis=-1)
        idx = rng.choice(np.flatnonzero(inner), size=min(points, int(inner.sum())), replace=False)
        y = Tp[idx]
        d_star = np.linalg.norm(Tp[idx] - Tq[idx], axis=-1)
        # grad phi = x - grad f for the two Brenier potentials, evaluated at grad phi*(y)
        d_grad = np.linalg.norm((y - sq.gradient(y)) - (y - sp.gradient(y)), axis=-1)
        lo_q, hi_q = sq.hessian_band
        slack = 2 * h
        worst_lo = max(worst_lo, float(np.max(lo_q * d_star - d_grad - slack)))
        worst_hi = max(worst_hi, float(np.max(d_grad - hi_q * d_star - slack)))
    return {"name": "change_of_variable", "passed": worst_lo <= 0 and worst_hi <= 0,
            "worst_lower": worst_lo, "worst_upper": worst_hi, "instances": count}


def _random_zero_mass(grid: Grid, rng, support: float) -> np.ndarray:
    x = grid.axes[0]
    v = np.zeros_like(x)
    for k in range(1, 6):
        v += rng.normal() / k * np.cos(np.pi * k * x / support)
    v *= (np.abs(x) <= support)
    v = np.where(np.abs(x) <= support, v, 0.0)
    # remove the mean over the support so that the total mass is zero
    w = grid.weights * (np.abs(x) <= support)
    return v - np.sum(v * grid.weights) / np.sum(w) * (np.abs(x) <= support)


def check_pushforward_stability(trials: int = 30, N: int = 512, seed: int = 3) -> dict:
    """``||T # rho||_{H^-1} <= (Lam / lam^{d/2}) ||rho||_{H^-1} (1 + 10h)`` for ``T = c x``.

    ``T`` is the gradient of ``c |x|^2 / 2`` (``lam = Lam = c``), so the constant
    is ``sqrt(c)`` in 1-D, and it is attained; ``rho`` is supported where ``T``
    stays inside the box.
    """
    grid = Grid.uniform(N, *_DOMAIN)
    h = grid.h
    rng = np.random.default_rng(seed)
    worst_ratio, worst_margin = 0.0, -np.inf
    for _ in range(trials):
        c = float(rng.uniform(0.5, 1.6))
        support = min(0.9, 0.9 / c)
        rho = SignedGridMeasure(grid, _random_zero_mass(grid, rng, support))
        T = c * grid.axes[0]
        pushed = pushforward(T, rho)
        bound = np.sqrt(c) * hneg1_norm(rho) * (1 + 10 * h)
        val = hneg1_norm(pushed)
        worst_margin = max(worst_margin, val - bound)
        worst_ratio = max(worst_ratio, val / (np.sqrt(c) * hneg1_norm(rho)))
    return {"name": "pushforward_stability", "passed": bool(worst_margin <= 0),
            "worst_ratio": float(worst_ratio), "slack": 1 + 10 * h, "trials": trials}


def check_bounded_potentials(instances: int = 3, N: int = 256, seed: int = 4,
                             alpha: float = 0.5, tol: float = 1e-6) -> dict:
    """Converged potentials satisfy ``-||c|| <= f <= 0`` and ``|grad phi*| <= 2 sqrt(||c|| / alpha)``.

    ``||c|| = sup |x - y|^2 / 2`` over the box. The mix potential is checked
    after its own sup-normalization.
    """
    grid = Grid.uniform(N, 0.0, 1.0)
    cnorm = 0.5 * grid.diameter**2
    rng = np.random.default_rng(seed)
    worst_low, worst_high, worst_grad = -np.inf, -np.inf, 0.0
    for k in range(instances):
        m = 2 + k % 2
        mus = [truncated_gaussian(grid, rng.uniform(0.3, 0.7), rng.uniform(0.08, 0.15), 0.2)
               for _ in range(m)]
        w = rng.dirichlet(np.full(m, 4.0))
        prob = BarycenterProblem(tuple(mus), tuple(w))
        ps, _ = sga_solve(prob, tol=1e-5, max_iter=5000)
        F = ps.array
        mix = -np.tensordot(w[:-1] / w[-1], F, axes=1)
        allp = np.concatenate([F, (mix - mix.max())[None]])
        worst_low = max(worst_low, float(np.max(-cnorm - allp)))
        worst_high = max(worst_high, float(np.max(allp)))
        _, maps = c_transform_batch(grid, allp, refine=True)
        worst_grad = max(worst_grad, float(np.max(np.linalg.norm(maps, axis=-1))))
    gbound = 2 * np.sqrt(cnorm / alpha)
    passed = bool(worst_low <= tol and worst_high <= tol and worst_grad <= gbound)
    return {"name": "bounded_potentials", "passed": passed, "lower_violation": worst_low,
            "upper_violation": worst_high, "max_grad": worst_grad, "grad_bound": float(gbound)}


def _concavity_problem(N: int = 256) -> BarycenterProblem:
    grid = Grid.uniform(N, 0.0, 1.0)
    mus = (truncated_gaussian(grid, 0.4, 0.15, 0.5), truncated_gaussian(grid, 0.6, 0.2, 0.5))
    return BarycenterProblem(mus, (0.5, 0.5))


def check_concavity(trials: int = 100, seed: int = 5) -> dict:
    """Strong concavity with ``lam = L alpha^(d+1) / beta^2`` on certified pairs."""
    params = PotentialClassParams(0.8, 1.2)
    rep = check_strong_concavity(_concavity_problem(), params, trials=trials, seed=seed)
    return {"name": "strong_concavity", "passed": rep.ok, "trials": rep.trials,
            "skipped": rep.skipped, "worst_margin": rep.worst_margin, "lam": rep.lam}


def check_pl(trajectories: int = 3, seed: int = 6) -> dict:
    """PL bound ``gap <= ||grad||^2 / (2 lam)`` along SGA trajectories."""
    params = PotentialClassParams(0.8, 1.2)
    rep = check_pl_inequality(_concavity_problem(), params, trials=trajectories, seed=seed,
                              points=50)
    return {"name": "pl_inequality", "passed": rep.ok, "points": rep.points,
            "worst_ratio": rep.worst_ratio, "monotone": rep.monotone, "lam": rep.lam,
            "trajectories": trajectories}


def run_property_suite(seed: int = 0) -> dict:
    """Run every check; returns ``{"passed": bool, "checks": [...], "seconds": t}``."""
    t0 = time.perf_counter()
    checks = [
        check_ctransform_identities(seed=seed),
        check_curvature_bands(seed=seed + 1),
        check_change_of_variable(seed=seed + 2),
        check_pushforward_stability(seed=seed + 3),
        check_concavity(seed=seed + 5),
        check_pl(seed=seed + 6),
        check_bounded_potentials(seed=seed + 4),
    ]
    for c in checks:
        c["passed"] = bool(c["passed"])
    return {"passed": all(c["passed"] for c in checks), "checks": checks,
            "seconds": time.perf_counter() - t0}

