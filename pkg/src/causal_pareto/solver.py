"""Causal ParetoSelect.

One :class:`LocalProblem` per intervention set keeps GP surrogates, an
approximated local Pareto set/front and the set's evaluations.  Each
iteration proposes a region-balanced batch for every set, evaluates only the
batch with the largest relative hypervolume improvement, and refits that set
alone.  The causal front is the non-dominated subset of all evaluations.

Randomness is counter based: every random draw is keyed by ``(seed, stream,
...)`` through :class:`numpy.random.SeedSequence`, so a run can be rebuilt
from its evaluation history and resumed bit for bit.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .graph import enumerate_pomis, powerset, sorted_sets
from .pareto import (
    FrontPoint,
    ParetoArchive,
    diversity_regions,
    discover_local_front,
    gd,
    hypervolume,
    igd,
    non_dominated_filter,
    nondominated_mask,
    reference_point,
    rhvi,
    select_local_batch,
)
from .scm import DEFAULT_MC_SAMPLES, Intervention, ScmSpec, interventional_mean
from .surrogate import GaussianProcess

CHECKPOINT_VERSION = 1

# stream tags for counter-based seeding
_EVAL, _FIT, _FRONT, _PAD, _INIT = range(5)


class ConfigError(ValueError):
    pass


@dataclass
class SolverConfig:
    """Run settings.

    ``sets_mode`` is ``"pomis"``, ``"all_subsets"`` or ``"explicit"``; the
    latter uses ``sets``.
    """

    sets_mode: str = "pomis"
    sets: list | None = None
    k_init: int = 5
    batch_size: int = 5
    iterations: int = 30
    mc_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    pop_size: int = 100
    n_gen: int = 50
    k_max: int = 8
    region_threshold: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if self.k_init < 1:
            raise ConfigError("k_init must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if self.mc_samples < 2:
            raise ConfigError("mc_samples must be at least 2")
        if self.sets_mode not in ("pomis", "all_subsets", "explicit"):
            raise ConfigError(f"unknown sets_mode {self.sets_mode!r}")
        if self.sets_mode == "explicit" and not self.sets:
            raise ConfigError("explicit sets_mode needs a non-empty list of sets")
        if self.sets is not None:
            self.sets = [sorted(s) for s in self.sets]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InterventionRecord:
    set: tuple[str, ...]
    x: tuple[float, ...]
    mu: tuple[float, ...]
    std_error: tuple[float, ...]
    iteration: int
    eval_index: int

    def to_dict(self) -> dict:
        return {
            "set": list(self.set),
            "x": list(self.x),
            "mu": list(self.mu),
            "std_error": list(self.std_error),
            "iteration": self.iteration,
            "eval_index": self.eval_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterventionRecord":
        return cls(
            tuple(d["set"]),
            tuple(float(v) for v in d["x"]),
            tuple(float(v) for v in d["mu"]),
            tuple(float(v) for v in d["std_error"]),
            int(d["iteration"]),
            int(d["eval_index"]),
        )


@dataclass
class LocalProblem:
    set: tuple[str, ...]
    index: int
    bounds: np.ndarray
    records: list = field(default_factory=list)
    models: list = field(default_factory=list)
    approx_set: np.ndarray | None = None
    approx_front: np.ndarray | None = None
    regions: object = None
    fit_round: int = -1

    @property
    def dim(self) -> int:
        return len(self.set)

    @property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.records], dtype=float).reshape(len(self.records), self.dim)

    @property
    def Y(self) -> np.ndarray:
        return np.array([r.mu for r in self.records], dtype=float)

    @property
    def SE(self) -> np.ndarray:
        return np.array([r.std_error for r in self.records], dtype=float)

    def normalize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        X = X.reshape(len(X), self.dim) if self.dim == 0 else X.reshape(-1, self.dim)
        width = self.bounds[:, 1] - self.bounds[:, 0]
        return (X - self.bounds[:, 0]) / np.where(width > 0, width, 1.0)

    def evaluated_front(self) -> np.ndarray:
        Y = self.Y
        return Y[nondominated_mask(Y)] if len(Y) else Y


@dataclass
class IterationLog:
    iteration: int
    chosen: tuple[str, ...]
    rhvi: float
    rhvi_by_set: list
    batch: list
    mu: list
    evaluations: int
    intervention_count: int
    gd: float | None = None
    igd: float | None = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "chosen": list(self.chosen),
            "rhvi": _json_float(self.rhvi),
            "rhvi_by_set": [_json_float(v) for v in self.rhvi_by_set],
            "batch": [list(x) for x in self.batch],
            "mu": [list(m) for m in self.mu],
            "evaluations": self.evaluations,
            "intervention_count": self.intervention_count,
            "gd": self.gd,
            "igd": self.igd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationLog":
        return cls(
            int(d["iteration"]),
            tuple(d["chosen"]),
            _from_json_float(d["rhvi"]),
            [_from_json_float(v) for v in d["rhvi_by_set"]],
            [tuple(x) for x in d["batch"]],
            [tuple(m) for m in d["mu"]],
            int(d["evaluations"]),
            int(d["intervention_count"]),
            d.get("gd"),
            d.get("igd"),
        )


def _json_float(v: float):
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _from_json_float(v) -> float:
    return float(v)


@dataclass
class RunReport:
    """Outcome of a run: the causal Pareto set/front and the iteration log."""

    problem: str
    mode: str
    config: dict
    sets: list
    targets: list
    front: ParetoArchive
    records: list
    log: list
    initial_gd: float | None = None
    initial_igd: float | None = None

    @property
    def evaluations(self) -> int:
        return len(self.records)

    @property
    def intervention_count(self) -> int:
        return sum(len(r.set) for r in self.records)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "mode": self.mode,
            "config": self.config,
            "sets": [list(s) for s in self.sets],
            "targets": list(self.targets),
            "front": [
                {"set": sorted(p.set), "x": list(p.x), "objectives": list(p.objectives)} for p in self.front
            ],
            "evaluations": self.evaluations,
            "intervention_count": self.intervention_count,
            "initial_gd": self.initial_gd,
            "initial_igd": self.initial_igd,
            "log": [entry.to_dict() for entry in self.log],
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        front = ParetoArchive(
            [FrontPoint(tuple(p["objectives"]), frozenset(p["set"]), tuple(p["x"])) for p in d["front"]]
        )
        return cls(
            d["problem"],
            d["mode"],
            d["config"],
            [tuple(s) for s in d["sets"]],
            d["targets"],
            front,
            [InterventionRecord.from_dict(r) for r in d["records"]],
            [IterationLog.from_dict(e) for e in d["log"]],
            d.get("initial_gd"),
            d.get("initial_igd"),
        )

    def metric_curve(self, name: str = "igd") -> tuple[np.ndarray, np.ndarray]:
        """(intervention count, metric) pairs including the initial design."""
        init_count = sum(len(r.set) for r in self.records if r.iteration == 0)
        counts = [init_count] + [e.intervention_count for e in self.log]
        values = [getattr(self, f"initial_{name}")] + [getattr(e, name) for e in self.log]
        return np.array(counts, dtype=float), np.array([np.nan if v is None else v for v in values])


def metric_at_budget(report: RunReport, budget: float, name: str = "igd") -> float:
    """Metric value after the last iteration whose cumulative count fits in ``budget``."""
    counts, values = report.metric_curve(name)
    ok = np.flatnonzero(counts <= budget + 1e-9)
    if not len(ok):
        return float("nan")
    return float(values[ok[-1]])


def resolve_sets(spec: ScmSpec, config: SolverConfig) -> list[tuple[str, ...]]:
    if config.sets_mode == "pomis":
        sets = enumerate_pomis(spec.graph)
    elif config.sets_mode == "all_subsets":
        sets = list(powerset(spec.treatments))
    else:
        sets = [frozenset(s) for s in config.sets]
        unknown = sorted(set().union(*sets) - set(spec.treatments))
        if unknown:
            raise ConfigError(f"not treatments: {', '.join(unknown)}")
    sets = sorted_sets(sets)
    if not sets:
        raise ConfigError("the family of intervention sets is empty")
    return [tuple(sorted(s)) for s in sets]


def _ss(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) for k in key])


class CausalParetoSelect:
    """Mutable solver state; see :func:`run` for the usual entry point."""

    def __init__(
        self,
        spec: ScmSpec,
        config: SolverConfig,
        sets: Sequence[Sequence[str]] | None = None,
        reference_front=None,
        problem: str = "",
        mode: str = "mocbo",
    ):
        self.spec = spec
        self.config = config
        self.problem = problem
        self.mode = mode
        sets = resolve_sets(spec, config) if sets is None else [tuple(sorted(s)) for s in sets]
        if not sets:
            raise ConfigError("the family of intervention sets is empty")
        self.sets = sets
        self.problems = [LocalProblem(s, i, spec.domain_of(s)) for i, s in enumerate(sets)]
        self.reference = None if reference_front is None else _objectives(reference_front)
        self.records: list[InterventionRecord] = []
        self.log: list[IterationLog] = []
        self.iteration = 0
        self.initial_gd = None
        self.initial_igd = None
        self.initialized = False

    # -- evaluation ---------------------------------------------------------

    def _evaluate(self, s: tuple[str, ...], X: np.ndarray, iteration: int) -> list[InterventionRecord]:
        out = []
        start = len(self.records)
        for j, x in enumerate(X):
            k = start + j
            iv = Intervention(s, tuple(float(v) for v in x))
            mu = interventional_mean(self.spec, iv, self.config.mc_samples, _ss(self.config.seed, _EVAL, k))
            out.append(InterventionRecord(s, iv.values, mu.means, mu.std_error, iteration, k))
        return out

    def _initial_design(self, p: LocalProblem) -> np.ndarray:
        if p.dim == 0:
            # a zero-dimensional domain has exactly one intervention value
            return np.zeros((1, 0))
        sampler = qmc.Halton(d=p.dim, scramble=True, seed=np.random.default_rng(_ss(self.config.seed, _INIT, p.index)))
        U = sampler.random(self.config.k_init)
        return qmc.scale(U, p.bounds[:, 0], p.bounds[:, 1]) if p.dim else U

    # -- surrogates ---------------------------------------------------------

    def _refit(self, p: LocalProblem, fit_round: int) -> None:
        X, Y, SE = p.X, p.Y, p.SE
        rng = np.random.default_rng(_ss(self.config.seed, _FIT, p.index, fit_round))
        p.models = [GaussianProcess(X, Y[:, i], p.bounds, SE[:, i], rng=rng) for i in range(Y.shape[1])]
        front_rng = np.random.default_rng(_ss(self.config.seed, _FRONT, p.index, fit_round))
        if p.dim == 0:
            p.approx_set = np.zeros((1, 0))
            p.approx_front = np.column_stack([m.mean(p.approx_set) for m in p.models])
        else:
            p.approx_set, p.approx_front = discover_local_front(
                p.models, p.bounds, front_rng, self.config.pop_size, self.config.n_gen, initial=X
            )
        p.regions = diversity_regions(
            p.normalize(p.approx_set), p.approx_front, self.config.k_max, self.config.region_threshold
        )
        p.fit_round = fit_round

    # -- algorithm ----------------------------------------------------------

    def initialize(self) -> "CausalParetoSelect":
        if self.initialized:
            return self
        for p in self.problems:
            new = self._evaluate(p.set, self._initial_design(p), 0)
            self.records += new
            p.records += new
        for p in self.problems:
            self._refit(p, 0)
        self.initialized = True
        self.initial_gd, self.initial_igd = self._metrics()
        return self

    def reference_point(self) -> np.ndarray:
        return reference_point(np.array([r.mu for r in self.records], dtype=float))

    def _propose(self, p: LocalProblem, ref: np.ndarray, iteration: int) -> tuple[np.ndarray, np.ndarray, float]:
        B = self.config.batch_size
        cand_x, cand_y = p.approx_set, p.approx_front
        if p.dim == 0:
            X = cand_x[:1]
        else:
            idx = select_local_batch(
                cand_x, cand_y, p.regions, p.evaluated_front(), ref, B, anchors=p.normalize(p.X)
            )
            X = cand_x[idx]
            if len(X) < B:
                # too few distinct candidates: fill up with uniform draws from the domain
                rng = np.random.default_rng(_ss(self.config.seed, _PAD, iteration, p.index))
                extra = p.bounds[:, 0] + (p.bounds[:, 1] - p.bounds[:, 0]) * rng.random((B - len(X), p.dim))
                X = np.vstack([X, extra])
        pred = np.column_stack([m.mean(X) for m in p.models])
        return X, pred, rhvi(pred, p.evaluated_front(), ref)

    def step(self) -> IterationLog:
        """One iteration: propose per set, pick by RHVI, evaluate, refit."""
        if not self.initialized:
            self.initialize()
        iteration = self.iteration + 1
        ref = self.reference_point()
        if self.config.workers > 1 and len(self.problems) > 1:
            with ThreadPoolExecutor(self.config.workers) as pool:
                proposals = list(pool.map(lambda p: self._propose(p, ref, iteration), self.problems))
        else:
            proposals = [self._propose(p, ref, iteration) for p in self.problems]
        scores = [r for _, _, r in proposals]
        best = int(np.argmax(scores))  # first maximum: ties go to the earlier set
        p = self.problems[best]
        X = proposals[best][0]
        # evaluate everything before touching state so a failure leaves it intact
        new = self._evaluate(p.set, X, iteration)
        self.records += new
        p.records += new
        self._refit(p, iteration)
        self.iteration = iteration
        g, ig = self._metrics()
        entry = IterationLog(
            iteration,
            p.set,
            float(scores[best]),
            [float(v) for v in scores],
            [r.x for r in new],
            [r.mu for r in new],
            len(self.records),
            sum(len(r.set) for r in self.records),
            g,
            ig,
        )
        self.log.append(entry)
        return entry

    def _metrics(self):
        if self.reference is None:
            return None, None
        F = self.causal_front().objectives
        return gd(F, self.reference), igd(F, self.reference)

    def causal_front(self) -> ParetoArchive:
        """Non-dominated subset of every evaluation so far, with origins."""
        return non_dominated_filter(
            [FrontPoint(r.mu, frozenset(r.set), r.x) for r in self.records]
        )

    extract_causal_front = causal_front

    def run(self, iterations: int | None = None, checkpoint: str | None = None) -> RunReport:
        self.initialize()
        target = self.config.iterations if iterations is None else iterations
        while self.iteration < target:
            self.step()
            if checkpoint:
                save_checkpoint(self, checkpoint)
        return self.report()

    def report(self) -> RunReport:
        return RunReport(
            self.problem,
            self.mode,
            self.config.to_dict(),
            list(self.sets),
            list(self.spec.targets),
            self.causal_front(),
            list(self.records),
            list(self.log),
            self.initial_gd,
            self.initial_igd,
        )

    # -- checkpoints ---------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "problem": self.problem,
            "mode": self.mode,
            "config": self.config.to_dict(),
            "sets": [list(s) for s in self.sets],
            "iteration": self.iteration,
            "records": [r.to_dict() for r in self.records],
            "log": [e.to_dict() for e in self.log],
            "initial_gd": self.initial_gd,
            "initial_igd": self.initial_igd,
            # all randomness is keyed by (seed, stream, counter); these are the counters
            "rng": {
                "seed": self.config.seed,
                "eval_counter": len(self.records),
                "fit_rounds": [p.fit_round for p in self.problems],
            },
            "reference_front": None if self.reference is None else self.reference.tolist(),
        }

    @classmethod
    def from_state_dict(cls, spec: ScmSpec, state: dict) -> "CausalParetoSelect":
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        config = SolverConfig(**state["config"])
        self = cls(
            spec,
            config,
            sets=state["sets"],
            reference_front=state.get("reference_front"),
            problem=state["problem"],
            mode=state["mode"],
        )
        self.records = [InterventionRecord.from_dict(r) for r in state["records"]]
        self.log = [IterationLog.from_dict(e) for e in state["log"]]
        self.iteration = int(state["iteration"])
        self.initial_gd = state.get("initial_gd")
        self.initial_igd = state.get("initial_igd")
        by_set = {p.set: p for p in self.problems}
        for r in self.records:
            by_set[r.set].records.append(r)
        for p, fit_round in zip(self.problems, state["rng"]["fit_rounds"]):
            # a set's data only changes when it is refitted, so its current
            # records are exactly what the last fit saw
            self._refit(p, fit_round)
        self.initialized = True
        return self


def _objectives(front) -> np.ndarray:
    if isinstance(front, ParetoArchive):
        return front.objectives
    return np.asarray(front, dtype=float)


def save_checkpoint(solver: CausalParetoSelect, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(solver.state_dict(), fh, indent=1, sort_keys=True)
    os.replace(tmp, path)


def load_checkpoint(spec: ScmSpec, path: str) -> CausalParetoSelect:
    with open(path) as fh:
        return CausalParetoSelect.from_state_dict(spec, json.load(fh))


def _start(spec, config, sets, reference_front, problem, mode, checkpoint, resume) -> CausalParetoSelect:
    if resume and checkpoint and os.path.exists(checkpoint):
        return load_checkpoint(spec, checkpoint)
    return CausalParetoSelect(spec, config, sets=sets, reference_front=reference_front, problem=problem, mode=mode)


def run(
    spec: ScmSpec,
    config: SolverConfig,
    reference_front=None,
    problem: str = "",
    checkpoint: str | None = None,
    resume: bool = False,
) -> RunReport:
    """Initialise, iterate ``config.iterations`` times and extract the causal front.

    With ``checkpoint`` the state is written after every iteration; with
    ``resume`` an existing checkpoint file is picked up instead of starting
    over.
    """
    solver = _start(spec, config, None, reference_front, problem, "mocbo", checkpoint, resume)
    return solver.run(config.iterations, checkpoint=checkpoint)


def run_baseline(
    spec: ScmSpec,
    config: SolverConfig,
    reference_front=None,
    problem: str = "",
    checkpoint: str | None = None,
    resume: bool = False,
) -> RunReport:
    """Same machinery on the single set of all treatments (no causal pruning)."""
    sets = [tuple(spec.treatments)]
    solver = _start(spec, config, sets, reference_front, problem, "baseline", checkpoint, resume)
    return solver.run(config.iterations, checkpoint=checkpoint)


def pooled_hypervolume_trace(report: RunReport, ref_point=None) -> np.ndarray:
    """Hypervolume of the pooled evaluated front after initialisation and each iteration."""
    Y = np.array([r.mu for r in report.records], dtype=float)
    ref = reference_point(Y) if ref_point is None else np.asarray(ref_point, dtype=float)
    n0 = sum(1 for r in report.records if r.iteration == 0)
    cuts = [n0] + [e.evaluations for e in report.log]
    out = []
    for c in cuts:
        P = Y[:c]
        P = P[(P < ref).all(axis=1)]
        out.append(hypervolume(P, ref) if len(P) else 0.0)
    return np.array(out)


__all__ = [
    "CausalParetoSelect",
    "ConfigError",
    "InterventionRecord",
    "IterationLog",
    "LocalProblem",
    "RunReport",
    "SolverConfig",
    "load_checkpoint",
    "metric_at_budget",
    "pooled_hypervolume_trace",
    "resolve_sets",
    "run",
    "run_baseline",
    "save_checkpoint",
]
