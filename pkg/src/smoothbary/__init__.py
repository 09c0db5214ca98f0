"""Smoothness-aware semi-dual Wasserstein barycenter estimation on grids."""

from .ctransform import PotentialClassParams, c_transform, legendre_conjugate, transport_map
from .density import EstimatorConfig, choose_resolution, estimate_density
from .experiments import ExperimentSpec, RateResult, run_experiment
from .grid import Grid, GridDensity, GridPotential, SampleSet, SignedGridMeasure, pushforward, sample
from .oracles import barycenter_1d_oracle, barycenter_functional_oracle, w1_1d, w2_1d
from .semidual import (
    BarycenterProblem,
    PotentialSet,
    dual_objective,
    dual_gradient,
    reconstruct_barycenter,
    sga_solve,
)
from .sobolev import hneg1_norm, neumann_inverse_laplacian

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "GridDensity",
    "GridPotential",
    "SignedGridMeasure",
    "SampleSet",
    "pushforward",
    "sample",
    "neumann_inverse_laplacian",
    "hneg1_norm",
    "PotentialClassParams",
    "legendre_conjugate",
    "c_transform",
    "transport_map",
    "EstimatorConfig",
    "estimate_density",
    "choose_resolution",
    "BarycenterProblem",
    "PotentialSet",
    "dual_objective",
    "dual_gradient",
    "sga_solve",
    "reconstruct_barycenter",
    "barycenter_1d_oracle",
    "barycenter_functional_oracle",
    "w1_1d",
    "w2_1d",
    "ExperimentSpec",
    "RateResult",
    "run_experiment",
]
