"""Multi-objective causal Bayesian optimisation.

Find Pareto-optimal interventions in a structural causal model with known
graph: prune the intervention sets with graph criteria, then alternate batch
multi-objective Bayesian optimisation across the remaining sets.
"""

from .graph import (
    CausalGraph,
    VariableRole,
    analyze,
    check_pomis_consistency,
    enumerate_mis,
    enumerate_pomis,
    interventional_border,
    latent_project,
    muct,
)
from .pareto import gd, hvi, hypervolume, igd, non_dominated_filter, rhvi
from .problems import PROBLEMS, builtin_problem, ground_truth_front
from .scm import Intervention, ScmSpec, interventional_mean, parse_spec, simulate
from .solver import CausalParetoSelect, RunReport, SolverConfig, run, run_baseline

__version__ = "0.1.0"

__all__ = [
    "CausalGraph",
    "CausalParetoSelect",
    "Intervention",
    "PROBLEMS",
    "RunReport",
    "ScmSpec",
    "SolverConfig",
    "VariableRole",
    "analyze",
    "builtin_problem",
    "check_pomis_consistency",
    "enumerate_mis",
    "enumerate_pomis",
    "gd",
    "ground_truth_front",
    "hvi",
    "hypervolume",
    "igd",
    "interventional_border",
    "interventional_mean",
    "latent_project",
    "muct",
    "non_dominated_filter",
    "parse_spec",
    "rhvi",
    "run",
    "run_baseline",
    "simulate",
]
