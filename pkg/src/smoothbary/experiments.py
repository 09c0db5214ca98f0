"""Monte Carlo harness for rate experiments.

A run is described by an :class:`ExperimentSpec` (loaded from JSON, unknown
keys rejected). Every replication gets its own ``SeedSequence`` built from
``(seed, n, m, rep)`` (the two-layer population draw uses ``(seed, m, rep)``
only), so results do not depend on scheduling, and the CSV is
written in task order with ``repr`` floats, which makes reruns byte-identical.

CSV columns: ``mode,d,m,n,m_outer,rep,seed,metric,value``. ``m`` is the number
of marginals entering the solve; ``m_outer`` is the number of measures drawn
from the population in ``two_layer`` mode and 0 otherwise.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .density import EstimatorConfig, estimate_density
from .families import AffinePopulation, build_density, factor_densities
from .grid import Grid, GridDensity, SampleSet, sample
from .oracles import (
    barycenter_1d_oracle,
    barycenter_functional_oracle,
    w1_1d,
    w2_1d,
)
from .semidual import BarycenterProblem, reconstruct_barycenter, sga_solve
from .sobolev import hneg1_sq_array

__all__ = [
    "ExperimentSpec",
    "RateResult",
    "CSV_HEADER",
    "run_experiment",
    "run_functional_rate",
    "run_barycenter_rate",
    "run_density_rate",
    "run_two_layer",
    "run_property_suite",
    "fit_slope",
    "plot_script",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["mode", "d", "m", "n", "m_outer", "rep", "seed", "metric", "value"]
MODES = ("functional_rate", "barycenter_rate", "density_rate", "two_layer", "property_suite")
RATE_MODES = MODES[:4]
PRIMARY_METRIC = {
    "functional_rate": "sq_err",
    "barycenter_rate": "w1_bary",
    "density_rate": "hneg1_sq",
    "two_layer": "w1_star",
}
BOOTSTRAP = 200

_SPEC_KEYS = {
    "mode", "d", "m", "weights", "marginals", "n_ladder", "m_ladder", "n", "vary",
    "replications", "seed", "grid", "solver", "estimator", "output", "population",
    "workers",
}
_SOLVER_KEYS = {"step", "max_iter", "tol", "geometry", "stall_window", "stall_tol"}
_POP_KEYS = {"reference", "kappa", "lam", "shift", "center"}


@dataclass
class ExperimentSpec:
    """Parsed experiment description; see the README for the JSON schema."""

    mode: str
    d: int = 1
    m: int = 2
    weights: list | None = None
    marginals: list = field(default_factory=list)
    n_ladder: list = field(default_factory=list)
    m_ladder: list = field(default_factory=list)
    n: int = 16000
    vary: str = "n"
    replications: int = 30
    seed: int = 0
    grid: dict | None = None
    solver: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    output: str | None = None
    population: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        extra = set(d) - _SPEC_KEYS
        if extra:
            raise ValueError(f"unknown spec keys: {sorted(extra)}")
        spec = cls(**d)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        extra = set(self.solver) - _SOLVER_KEYS
        if extra:
            raise ValueError(f"unknown solver keys: {sorted(extra)}")
        extra = set(self.population) - _POP_KEYS
        if extra:
            raise ValueError(f"unknown population keys: {sorted(extra)}")
        EstimatorConfig.from_dict(self.estimator)
        if self.mode == "property_suite":
            return
        if self.replications < 10:
            raise ValueError("rate modes need at least 10 replications")
        ladder = self.ladder
        if len(ladder) < 3 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("ladder must be strictly increasing with at least 3 points")
        if self.mode == "two_layer":
            if self.d != 1:
                raise ValueError("two_layer runs are one-dimensional")
            if self.vary not in ("m", "n"):
                raise ValueError("vary must be 'm' or 'n'")
            if not self.population.get("reference"):
                raise ValueError("two_layer needs population.reference")
        else:
            if len(self.marginals) != self.m:
                raise ValueError(f"need {self.m} marginal descriptors")
            if self.weights is not None and len(self.weights) != self.m:
                raise ValueError("need one weight per marginal")
            if self.mode != "functional_rate" and self.d != 1:
                raise ValueError(f"{self.mode} is one-dimensional")

    @property
    def ladder(self) -> list:
        if self.mode == "two_layer" and self.vary == "m":
            return list(self.m_ladder)
        return list(self.n_ladder)

    def make_grid(self) -> Grid:
        if self.grid:
            return Grid.from_dict(self.grid)
        return Grid.uniform(256 if self.d == 1 else 64, 0.0, 1.0, self.d)

    def weight_vector(self, m: int | None = None) -> np.ndarray:
        m = self.m if m is None else m
        if self.weights is None or self.mode == "two_layer":
            return np.full(m, 1.0 / m)
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()


@dataclass
class RateResult:
    """Per-ladder-point means with standard errors and a fitted log-log slope."""

    metric: str
    ladder: list
    means: list
    stderrs: list
    medians: list
    counts: list
    slope: float
    slope_ci_lo: float
    slope_ci_hi: float
    excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def summarize(metric: str, ladder, samples: list, seed: int, excluded: int = 0) -> RateResult:
    """Means, standard errors and a bootstrap CI for the slope of ``log mean``.

    ``samples[k]`` holds the replication values at ladder point ``k``; the
    bootstrap resamples replications within each point (200 resamples).
    """
    arrs = [np.asarray(s, dtype=float) for s in samples]
    means = [float(a.mean()) if a.size else float("nan") for a in arrs]
    stderrs = [float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan") for a in arrs]
    medians = [float(np.median(a)) if a.size else float("nan") for a in arrs]
    ok = all(a.size > 0 and np.all(np.isfinite(a)) for a in arrs) and min(means) > 0
    slope = fit_slope(ladder, means) if ok else float("nan")
    lo = hi = float("nan")
    if ok:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
        boots = []
        for _ in range(BOOTSTRAP):
            bm = [a[rng.integers(0, a.size, a.size)].mean() for a in arrs]
            if min(bm) > 0:
                boots.append(fit_slope(ladder, bm))
        if boots:
            lo, hi = (float(v) for v in np.percentile(boots, [2.5, 97.5]))
    return RateResult(metric, list(ladder), means, stderrs, medians, [int(a.size) for a in arrs],
                      slope, lo, hi, excluded)


# ---------------------------------------------------------------------------
# replications


def _solver_kwargs(spec: ExperimentSpec) -> dict:
    kw = {"step": 1.0, "max_iter": 2000, "tol": 1e-4, "geometry": "product"}
    kw.update(spec.solver)
    return kw


def _estimate(samples: SampleSet, cfg: EstimatorConfig, grid: Grid) -> GridDensity:
    return estimate_density(samples, cfg, grid)


def _reference_functional(spec: ExperimentSpec, grid: Grid, mus, w) -> float:
    if spec.d == 1:
        return barycenter_functional_oracle(BarycenterProblem(mus, tuple(w)))
    # product marginals: the quadratic cost separates across coordinates
    total = 0.0
    factors = [factor_densities(grid, desc) for desc in spec.marginals]
    for ax in range(grid.dim):
        axis_mus = tuple(f[ax] for f in factors)
        total += barycenter_functional_oracle(BarycenterProblem(axis_mus, tuple(w)))
    return total


def _one_layer(spec: ExperimentSpec, n: int, rep: int) -> list:
    grid = spec.make_grid()
    w = spec.weight_vector()
    mus = [build_density(grid, desc) for desc in spec.marginals]
    cfg = EstimatorConfig.from_dict(spec.estimator)
    ss = np.random.SeedSequence([spec.seed, n, spec.m, rep])
    rngs = [np.random.default_rng(s) for s in ss.spawn(spec.m)]
    est = [_estimate(sample(mu, n, rng, j), cfg, grid) for j, (mu, rng) in enumerate(zip(mus, rngs))]
    if spec.mode == "density_rate":
        out = []
        for j, (mu, mt) in enumerate(zip(mus, est)):
            hs = float(hneg1_sq_array(grid, mt.values - mu.values, check=False))
            out.append((f"hneg1_sq_{j}" if j else "hneg1_sq", hs))
            out.append((f"w2_sq_{j}" if j else "w2_sq", w2_1d(mu, mt) ** 2))
        return out
    prob = BarycenterProblem(tuple(est), tuple(w))
    ps, rep_ = sga_solve(prob, **_solver_kwargs(spec))
    ref = _reference_functional(spec, grid, mus, w)
    out = [
        ("estimate", rep_.value),
        ("sq_err", (rep_.value - ref) ** 2),
        ("abs_err", abs(rep_.value - ref)),
        ("iterations", float(rep_.iterations)),
        ("converged", float(rep_.converged)),
    ]
    if spec.d == 1:
        bary = reconstruct_barycenter(ps, prob)
        oracle = barycenter_1d_oracle(BarycenterProblem(tuple(mus), tuple(w)))
        out.append(("w1_bary", w1_1d(bary, oracle)))
    return out


def _two_layer(spec: ExperimentSpec, n: int, m: int, rep: int) -> list:
    grid = spec.make_grid()
    pop_cfg = dict(spec.population)
    ref_desc = pop_cfg.pop("reference")
    pop = AffinePopulation(**pop_cfg)
    mu_star = build_density(grid, ref_desc)
    cfg = EstimatorConfig.from_dict(spec.estimator)
    # the population draw ignores n so that an n-ladder shares its maps per replication
    pop_ss = np.random.SeedSequence([spec.seed, m, rep, 1])
    sample_ss = np.random.SeedSequence([spec.seed, n, m, rep]).spawn(m)
    support = _support(mu_star)
    cs, bs = pop.draw(np.random.default_rng(pop_ss), m, support, grid.bounds[0])
    est = []
    for j in range(m):
        y = sample(mu_star, n, np.random.default_rng(sample_ss[j])).points[:, 0]
        x = np.clip(pop.apply(cs[j], bs[j], y), *grid.bounds[0])
        est.append(_estimate(SampleSet(x[:, None], j, grid.bounds), cfg, grid))
    w = np.full(m, 1.0 / m)
    prob = BarycenterProblem(tuple(est), tuple(w))
    ps, rep_ = sga_solve(prob, **_solver_kwargs(spec))
    bary = reconstruct_barycenter(ps, prob)
    pop_bary = pop.push(mu_star, float(cs.mean()), float(bs.mean()))
    return [
        ("w1_star", w1_1d(bary, mu_star)),
        ("w1_pop", w1_1d(pop_bary, mu_star)),
        ("iterations", float(rep_.iterations)),
        ("converged", float(rep_.converged)),
    ]


def _support(mu: GridDensity) -> tuple:
    x = mu.grid.axes[0]
    nz = np.flatnonzero(mu.values > 0)
    h = mu.grid.spacing[0]
    (lo, hi), = mu.grid.bounds
    return max(float(x[nz[0]] - h), lo), min(float(x[nz[-1]] + h), hi)


def _run_task(args):
    spec_dict, n, m, rep = args
    spec = ExperimentSpec.from_dict(spec_dict)
    try:
        if spec.mode == "two_layer":
            return _two_layer(spec, n, m, rep), None
        return _one_layer(spec, n, rep), None
    except (FloatingPointError, ValueError, RuntimeError) as exc:
        return None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def _tasks(spec: ExperimentSpec) -> list:
    tasks = []
    for x in spec.ladder:
        for rep in range(spec.replications):
            if spec.mode == "two_layer":
                n, m = (spec.n, x) if spec.vary == "m" else (x, spec.m)
            else:
                n, m = x, spec.m
            tasks.append((n, m, rep))
    return tasks


def _execute(spec: ExperimentSpec, tasks: list, workers: int | None) -> list:
    payload = [(spec.to_dict(), n, m, rep) for n, m, rep in tasks]
    workers = workers or spec.workers or 1
    if workers <= 1:
        return [_run_task(p) for p in payload]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, payload, chunksize=1))


def _write_csv(path: Path, spec: ExperimentSpec, tasks, results) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for (n, m, rep), (rows, err) in zip(tasks, results):
            m_outer = m if spec.mode == "two_layer" else 0
            if rows is None:
                wr.writerow([spec.mode, spec.d, m, n, m_outer, rep, spec.seed, "excluded", "nan"])
                continue
            for metric, value in rows:
                wr.writerow([spec.mode, spec.d, m, n, m_outer, rep, spec.seed, metric,
                             repr(float(value))])


def run_experiment(spec: ExperimentSpec, output: str | None = None,
                   workers: int | None = None) -> dict:
    """Run a rate experiment; write ``<output>.csv`` and ``<output>.summary.json``.

    Returns:
        The summary dict keyed by metric name (plus ``"excluded"`` and
        ``"exclusions"`` entries describing dropped replications).
    """
    if spec.mode == "property_suite":
        report = run_property_suite(spec)
        out = output or spec.output
        if out:
            with open(Path(out).with_suffix(".summary.json"), "w") as fh:
                json.dump(report, fh, indent=2, sort_keys=True, default=float)
        return report
    tasks = _tasks(spec)
    results = _execute(spec, tasks, workers)
    ladder = spec.ladder
    per_point = len(tasks) // len(ladder)
    exclusions = []
    by_metric: dict = {}
    for k, x in enumerate(ladder):
        for (n, m, rep), (rows, err) in zip(tasks[k * per_point:(k + 1) * per_point],
                                            results[k * per_point:(k + 1) * per_point]):
            if rows is None:
                exclusions.append({"n": n, "m": m, "rep": rep, "cause": err})
                log.warning("replication excluded (n=%d, m=%d, rep=%d): %s", n, m, rep, err)
                continue
            for metric, value in rows:
                by_metric.setdefault(metric, [[] for _ in ladder])[k].append(value)
    summary = {
        metric: summarize(metric, ladder, vals, spec.seed, len(exclusions)).to_dict()
        for metric, vals in by_metric.items()
        if metric not in ("converged",)
    }
    summary["primary_metric"] = PRIMARY_METRIC[spec.mode]
    summary["excluded"] = len(exclusions)
    summary["exclusions"] = exclusions
    if spec.mode == "density_rate" and "hneg1_sq" in summary:
        h, w2 = summary["hneg1_sq"]["means"], summary["w2_sq"]["means"]
        summary["risk_ratio"] = [b / a if a > 0 else float("nan") for a, b in zip(h, w2)]
    out = output or spec.output
    if out:
        base = Path(out)
        _write_csv(base.with_suffix(".csv"), spec, tasks, results)
        with open(base.with_suffix(".summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _as_rate(spec: ExperimentSpec, summary: dict) -> RateResult:
    d = dict(summary[PRIMARY_METRIC[spec.mode]])
    return RateResult(**d)


def run_functional_rate(spec: ExperimentSpec, **kw) -> RateResult:
    """Squared error of the functional estimate against the oracle value, per ``n``."""
    if spec.mode != "functional_rate":
        raise ValueError("spec.mode must be functional_rate")
    return _as_rate(spec, run_experiment(spec, **kw))


def run_barycenter_rate(spec: ExperimentSpec, **kw) -> RateResult:
    """``W_1`` between the reconstructed and the oracle barycenter, per ``n``."""
    if spec.mode != "barycenter_rate":
        raise ValueError("spec.mode must be barycenter_rate")
    return _as_rate(spec, run_experiment(spec, **kw))


def run_density_rate(spec: ExperimentSpec, **kw) -> dict:
    """H^-1 and W_2^2 risks of the density estimator, with their ratio per ``n``."""
    if spec.mode != "density_rate":
        raise ValueError("spec.mode must be density_rate")
    s = run_experiment(spec, **kw)
    return {
        "hneg1_sq": RateResult(**s["hneg1_sq"]),
        "w2_sq": RateResult(**s["w2_sq"]),
        "risk_ratio": s["risk_ratio"],
    }


def run_two_layer(spec: ExperimentSpec, **kw) -> RateResult:
    """``W_1`` to the population barycenter along an ``m`` or ``n`` ladder."""
    if spec.mode != "two_layer":
        raise ValueError("spec.mode must be two_layer")
    return _as_rate(spec, run_experiment(spec, **kw))


def run_property_suite(spec: ExperimentSpec | None = None, seed: int | None = None) -> dict:
    """Run the structural property checks; see :mod:`smoothbary.properties`."""
    from .properties import run_property_suite as _suite

    if seed is None:
        seed = spec.seed if spec is not None else 0
    return _suite(seed=seed)


def plot_script(csv_path: str) -> str:
    """Source of a standalone plotting script for an experiment CSV."""
    return f'''"""Log-log plot of per-ladder means from {os.path.basename(csv_path)}."""

import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
with open(path) as fh:
    rows = [r for r in csv.DictReader(fh) if r["metric"] != "excluded"]
# the ladder variable is whichever of n and m_outer actually varies
key = "m_outer" if len({{r["m_outer"] for r in rows}}) > 1 else "n"
data = defaultdict(lambda: defaultdict(list))
for row in rows:
    data[row["metric"]][int(row[key])].append(float(row["value"]))

skip = {{"iterations", "converged", "estimate"}}
metrics = [k for k in data if k not in skip]
fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.5), squeeze=False)
for ax, metric in zip(axes[0], metrics):
    xs = sorted(data[metric])
    ys = [np.mean(data[metric][x]) for x in xs]
    if len(set(xs)) > 1:
        slope = np.polyfit(np.log(xs), np.log(ys), 1)[0]
        ax.set_title(f"{{metric}} (slope {{slope:.2f}})")
    else:
        ax.set_title(metric)
    ax.loglog(xs, ys, "o-")
    ax.set_xlabel(key)
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''
