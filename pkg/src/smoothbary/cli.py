"""Command line entry point ``bary``.

    bary run spec.json [--output PREFIX] [--workers K] [--emit-plot-script]
    bary props [--seed S] [--json]
    bary oracle problem.json [--barycenter OUT.csv]
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .experiments import ExperimentSpec, plot_script, run_experiment
from .families import build_density
from .grid import Grid
from .oracles import barycenter_1d_oracle, barycenter_functional_oracle
from .properties import run_property_suite
from .semidual import BarycenterProblem, sga_solve

_PROBLEM_KEYS = {"grid", "marginals", "weights", "solve"}


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    output = args.output or spec.output or Path(args.spec).with_suffix("").name
    summary = run_experiment(spec, output=output, workers=args.workers)
    csv_path = Path(output).with_suffix(".csv")
    if args.emit_plot_script:
        script = Path(output).with_suffix(".plot.py")
        script.write_text(plot_script(str(csv_path)))
        print(f"plot script: {script}")
    if spec.mode == "property_suite":
        return 0 if summary["passed"] else 1
    key = summary["primary_metric"]
    s = summary[key]
    print(f"{spec.mode}: {key} slope {s['slope']:.3f} "
          f"[{s['slope_ci_lo']:.3f}, {s['slope_ci_hi']:.3f}], excluded {summary['excluded']}")
    print(f"csv: {csv_path}")
    return 0


def _cmd_props(args) -> int:
    report = run_property_suite(seed=args.seed)
    if args.json:
        print(json.dumps(report, indent=2, default=float))
    else:
        for c in report["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
        print(f"{report['seconds']:.1f} s")
    return 0 if report["passed"] else 1


def load_problem(path) -> tuple:
    """Read a problem file: ``{"grid": {...}, "marginals": [...], "weights": [...]}``."""
    with open(path) as fh:
        d = json.load(fh)
    extra = set(d) - _PROBLEM_KEYS
    if extra:
        raise ValueError(f"unknown problem keys: {sorted(extra)}")
    g = d.get("grid", {})
    grid = Grid.uniform(g.get("n", 256), g.get("lo", 0.0), g.get("hi", 1.0), g.get("dim", 1))
    mus = tuple(build_density(grid, m) for m in d["marginals"])
    w = d.get("weights") or [1.0 / len(mus)] * len(mus)
    return BarycenterProblem(mus, tuple(w)), bool(d.get("solve", False))


def _cmd_oracle(args) -> int:
    prob, solve = load_problem(args.problem)
    out = {"functional": barycenter_functional_oracle(prob)}
    if solve or args.solve:
        _, rep = sga_solve(prob)
        out["sga_value"] = rep.value
        out["relative_gap"] = abs(rep.value - out["functional"]) / abs(out["functional"])
    if args.barycenter:
        bary = barycenter_1d_oracle(prob)
        np.savetxt(args.barycenter, np.column_stack([prob.grid.axes[0], bary.values]),
                   delimiter=",", header="x,density", comments="")
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bary", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("spec")
    r.add_argument("--output", help="output prefix for .csv and .summary.json")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--emit-plot-script", action="store_true")
    r.set_defaults(func=_cmd_run)

    q = sub.add_parser("props", help="run the property suite")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=_cmd_props)

    o = sub.add_parser("oracle", help="1-D reference values for a problem file")
    o.add_argument("problem")
    o.add_argument("--solve", action="store_true", help="also run the solver")
    o.add_argument("--barycenter", help="write the oracle barycenter to this CSV")
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
