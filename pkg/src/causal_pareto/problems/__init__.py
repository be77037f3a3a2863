"""Built-in benchmark problems and the grid ground-truth front.

The ``.scm`` files next to this module hold the three benchmark SCMs.
"""

from __future__ import annotations

import itertools
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from ..graph import sorted_sets
from ..pareto import FrontPoint, ParetoArchive, nondominated_mask
from ..scm import DEFAULT_MC_SAMPLES, ScmSpec, batch_interventional_means, parse_spec

PROBLEMS = ("synthetic1", "synthetic2", "health")
MAX_GRID_EVALUATIONS = 1_000_000


class UnknownProblem(KeyError):
    def __str__(self):
        return f"unknown problem {self.args[0]!r}; choose one of {', '.join(PROBLEMS)}"


def problem_text(name: str) -> str:
    if name not in PROBLEMS:
        raise UnknownProblem(name)
    return resources.files(__name__).joinpath(f"{name}.scm").read_text()


def builtin_problem(name: str) -> ScmSpec:
    """Parsed spec of one of :data:`PROBLEMS`."""
    return parse_spec(problem_text(name))


def grid(bounds: np.ndarray, per_dim: int) -> np.ndarray:
    """Regular grid over a box, ``per_dim`` points per axis, last axis fastest."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in bounds]
    if not axes:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(*axes)), dtype=float)


def ground_truth_front(
    spec: ScmSpec,
    sets: Iterable[Iterable[str]],
    grid_per_dim: int = 21,
    n_mc: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    return_errors: bool = False,
):
    """Brute-force causal Pareto front over a regular grid of every set.

    All grid points of all sets share one exogenous draw (common random
    numbers), so differences between points are not Monte-Carlo noise.
    With ``return_errors`` the standard errors of the front points are
    returned as a second value, aligned with the archive.
    """
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be at least 2")
    sets = sorted_sets(sets)
    if not sets:
        raise ValueError("no intervention sets given")
    total = sum(grid_per_dim ** len(s) for s in sets)
    if total > MAX_GRID_EVALUATIONS:
        raise ValueError(f"grid needs {total} evaluations, above the limit of {MAX_GRID_EVALUATIONS}")
    points, Ys, Es = [], [], []
    for s in sets:
        variables = tuple(sorted(s))
        X = grid(spec.domain_of(variables), grid_per_dim)
        mu, se = batch_interventional_means(spec, variables, X, n_mc, seed)
        points += [(frozenset(s), tuple(float(v) for v in x)) for x in X]
        Ys.append(mu)
        Es.append(se)
    Y = np.vstack(Ys)
    E = np.vstack(Es)
    mask = nondominated_mask(Y)
    archive = ParetoArchive(
        [FrontPoint(tuple(float(v) for v in y), s, x) for (s, x), y, k in zip(points, Y, mask) if k]
    )
    if return_errors:
        return archive, E[mask]
    return archive


def all_subsets(spec: ScmSpec) -> list[frozenset]:
    from ..graph import powerset

    return sorted_sets(powerset(spec.treatments))


__all__: Sequence[str] = (
    "PROBLEMS",
    "UnknownProblem",
    "all_subsets",
    "builtin_problem",
    "grid",
    "ground_truth_front",
    "problem_text",
)
