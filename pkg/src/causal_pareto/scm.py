"""Structural causal models: spec files, sampling under interventions, and
Monte-Carlo interventional means.

Spec file layout (``#`` starts a comment)::

    [variables]
    X: treatment
    Y: target

    [edges]
    X -> Y

    [exogenous]
    U_Y = normal(0, 1)

    [equations]
    X = U_X
    Y = 2 * X + U_Y

    [domains]
    X = [-1, 2]

Bidirected edges need not be listed: any exogenous variable referenced by two
equations is an unobserved confounder and yields one.  If bidirected edges
*are* listed they must agree with the shared exogenous variables.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .expr import EvaluationError, Expression, ExpressionError
from .graph import CausalGraph, GraphError, VariableRole, iter_sections, parse_variables_and_edges

DEFAULT_MC_SAMPLES = 10_000


class SpecError(ValueError):
    """A spec file is malformed or internally inconsistent."""


class SimulationError(ArithmeticError):
    """A structural equation produced a non-finite or out-of-domain value."""

    def __init__(self, variable: str, message: str):
        super().__init__(f"{variable}: {message}")
        self.variable = variable


class InterventionError(ValueError):
    """An intervention is not valid for the SCM it is applied to."""


# -- exogenous distributions ---------------------------------------------

_DIST_ARITY = {
    "normal": (2,),
    "truncnormal": (4,),
    "uniform": (2,),
    "bernoulli": (1, 3),
    "constant": (1,),
}


@dataclass(frozen=True)
class Exogenous:
    """One exogenous variable and its distribution.

    ``kind`` is one of ``normal(mean, sd)``, ``truncnormal(mean, sd, lo, hi)``,
    ``uniform(lo, hi)``, ``bernoulli(p[, a, b])`` (``b`` with probability
    ``p``, else ``a``; defaults ``a=-1, b=1``) and ``constant(c)``.
    """

    name: str
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _DIST_ARITY:
            raise SpecError(f"{self.name}: unknown distribution {self.kind!r}")
        if len(self.params) not in _DIST_ARITY[self.kind]:
            raise SpecError(f"{self.name}: {self.kind} takes {_DIST_ARITY[self.kind]} parameters")
        p = self.params
        if self.kind in ("normal", "truncnormal") and not p[1] > 0:
            raise SpecError(f"{self.name}: standard deviation must be positive")
        if self.kind == "truncnormal" and not p[2] < p[3]:
            raise SpecError(f"{self.name}: truncation bounds must satisfy lo < hi")
        if self.kind == "uniform" and not p[0] < p[1]:
            raise SpecError(f"{self.name}: uniform bounds must satisfy lo < hi")
        if self.kind == "bernoulli" and not 0 <= p[0] <= 1:
            raise SpecError(f"{self.name}: probability must lie in [0, 1]")
        if self.kind == "bernoulli" and len(p) == 1:
            object.__setattr__(self, "params", (p[0], -1.0, 1.0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "normal":
            return rng.normal(p[0], p[1], size=n)
        if self.kind == "truncnormal":
            mean, sd, lo, hi = p
            return stats.truncnorm.rvs(
                (lo - mean) / sd, (hi - mean) / sd, loc=mean, scale=sd, size=n, random_state=rng
            )
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size=n)
        if self.kind == "bernoulli":
            return np.where(rng.random(n) < p[0], p[2], p[1])
        return np.full(n, p[0])

    def format(self) -> str:
        return f"{self.name} = {self.kind}({', '.join(_fmt(v) for v in self.params)})"


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


# -- spec -----------------------------------------------------------------


@dataclass(frozen=True)
class ScmSpec:
    """A validated structural causal model.

    ``order`` is the declaration order of the endogenous variables and fixes
    the column layout of :func:`simulate`.
    """

    graph: CausalGraph
    equations: Mapping[str, Expression]
    exogenous: tuple[Exogenous, ...]
    domains: Mapping[str, tuple[float, float]]
    order: tuple[str, ...]
    header: str = field(default="", compare=False)

    @property
    def targets(self) -> tuple[str, ...]:
        return self.graph.targets

    @property
    def treatments(self) -> tuple[str, ...]:
        return self.graph.treatments

    def domain_of(self, variables: Sequence[str]) -> np.ndarray:
        """``(d, 2)`` array of bounds for ``variables`` in the given order."""
        return np.array([self.domains[v] for v in variables], dtype=float).reshape(-1, 2)

    def exogenous_parents(self, variable: str) -> frozenset:
        exo = {u.name for u in self.exogenous}
        return frozenset(self.equations[variable].names & exo)


def _parse_call(text: str, lineno: int):
    m = re.match(r"^(\w+)\s*=\s*(\w+)\s*\((.*)\)$", text)
    if not m:
        raise SpecError(f"line {lineno}: expected 'NAME = distribution(params)'")
    name, kind, args = m.groups()
    try:
        params = tuple(float(a) for a in args.split(",")) if args.strip() else ()
    except ValueError:
        raise SpecError(f"line {lineno}: distribution parameters must be numbers") from None
    return name, kind.lower(), params


def _parse_interval(text: str, lineno: int) -> tuple[float, float]:
    m = re.match(r"^\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]$", text)
    if not m:
        raise SpecError(f"line {lineno}: expected an interval '[lo, hi]'")
    try:
        lo, hi = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise SpecError(f"line {lineno}: interval bounds must be numbers") from None
    if not lo < hi:
        raise SpecError(f"line {lineno}: empty interval [{lo}, {hi}]")
    return lo, hi


def parse_spec(text: str) -> ScmSpec:
    """Parse and cross-check a spec file.

    The first inconsistency is reported with its line number.
    """
    try:
        roles, directed, bidirected, edge_lines = parse_variables_and_edges(text)
    except GraphError as exc:
        raise SpecError(str(exc)) from None
    header = "\n".join(
        line for line in itertools.takewhile(lambda l: not l.strip().startswith("["), text.splitlines())
    ).strip()

    equations: dict[str, Expression] = {}
    eq_lines: dict[str, int] = {}
    exogenous: list[Exogenous] = []
    exo_lines: dict[str, int] = {}
    domains: dict[str, tuple[float, float]] = {}
    for section, lineno, line in iter_sections(text):
        if section in ("variables", "edges"):
            continue
        if section == "exogenous":
            name, kind, params = _parse_call(line, lineno)
            if name in exo_lines:
                raise SpecError(f"line {lineno}: duplicate exogenous variable {name}")
            if name in roles:
                raise SpecError(f"line {lineno}: exogenous {name} clashes with an endogenous variable")
            try:
                exogenous.append(Exogenous(name, kind, params))
            except SpecError as exc:
                raise SpecError(f"line {lineno}: {exc}") from None
            exo_lines[name] = lineno
        elif section == "equations":
            if "=" not in line:
                raise SpecError(f"line {lineno}: expected 'NAME = expression'")
            name, body = (s.strip() for s in line.split("=", 1))
            if name not in roles:
                raise SpecError(f"line {lineno}: equation for undeclared variable {name}")
            if name in equations:
                raise SpecError(f"line {lineno}: second equation for {name}")
            try:
                equations[name] = Expression(body)
            except ExpressionError as exc:
                raise SpecError(f"line {lineno}: {exc}") from None
            eq_lines[name] = lineno
        elif section == "domains":
            if "=" not in line:
                raise SpecError(f"line {lineno}: expected 'NAME = [lo, hi]'")
            name, body = (s.strip() for s in line.split("=", 1))
            if name not in roles:
                raise SpecError(f"line {lineno}: domain for undeclared variable {name}")
            if roles[name] is not VariableRole.TREATMENT:
                raise SpecError(f"line {lineno}: domain given for non-treatment {name}")
            domains[name] = _parse_interval(body, lineno)
        else:
            raise SpecError(f"line {lineno}: unknown section [{section}]")

    exo_names = set(exo_lines)
    declared_parents = {v: set() for v in roles}
    for a, b in directed:
        declared_parents[b].add(a)
    for v in roles:
        if v not in equations:
            raise SpecError(f"variable {v} has no structural equation")
        refs = equations[v].names
        for name in sorted(refs):
            if name in exo_names:
                continue
            if name not in roles:
                raise SpecError(f"line {eq_lines[v]}: equation for {v} references unknown name {name}")
            if name not in declared_parents[v]:
                raise SpecError(
                    f"line {eq_lines[v]}: equation for {v} references {name}, "
                    f"which is not a parent of {v}"
                )
        for p in sorted(declared_parents[v] - refs):
            raise SpecError(
                f"line {edge_lines[(p, v)]}: edge {p} -> {v} is not used by the equation for {v}"
            )

    users: dict[str, list[str]] = {u: [] for u in exo_names}
    for v in roles:
        for u in equations[v].names & exo_names:
            users[u].append(v)
    derived = {
        frozenset(pair)
        for u, vs in users.items()
        for pair in itertools.combinations(sorted(vs), 2)
    }
    declared = {frozenset(p) for p in bidirected}
    if declared and declared != derived:
        extra = sorted(tuple(sorted(p)) for p in declared - derived)
        missing = sorted(tuple(sorted(p)) for p in derived - declared)
        if extra:
            a, b = extra[0]
            raise SpecError(f"line {edge_lines[frozenset(extra[0])]}: {a} <-> {b} has no shared exogenous variable")
        a, b = missing[0]
        raise SpecError(f"{a} and {b} share an exogenous variable but {a} <-> {b} is not declared")

    for v, role in roles.items():
        if role is VariableRole.TREATMENT and v not in domains:
            raise SpecError(f"treatment {v} has no interventional domain")
    try:
        graph = CausalGraph(roles, directed, derived)
    except GraphError as exc:
        raise SpecError(str(exc)) from None
    if not graph.targets:
        raise SpecError("spec declares no target variable")
    return ScmSpec(graph, equations, tuple(exogenous), domains, tuple(roles), header)


def serialize_spec(spec: ScmSpec) -> str:
    lines = []
    if spec.header:
        lines += [spec.header, ""]
    order = list(spec.order)
    rank = {v: i for i, v in enumerate(order)}
    lines.append("[variables]")
    lines += [f"{v}: {spec.graph.roles[v].value}" for v in order]
    lines += ["", "[edges]"]
    lines += [f"{a} -> {b}" for a, b in sorted(spec.graph.directed, key=lambda e: (rank[e[1]], rank[e[0]]))]
    bis = sorted((tuple(sorted(p, key=rank.get)) for p in spec.graph.bidirected), key=lambda p: (rank[p[0]], rank[p[1]]))
    lines += [f"{a} <-> {b}" for a, b in bis]
    lines += ["", "[exogenous]"]
    lines += [u.format() for u in spec.exogenous]
    lines += ["", "[equations]"]
    lines += [f"{v} = {spec.equations[v].source}" for v in order]
    lines += ["", "[domains]"]
    lines += [f"{v} = [{_fmt(lo)}, {_fmt(hi)}]" for v in order if v in spec.domains for lo, hi in [spec.domains[v]]]
    return "\n".join(lines) + "\n"


# -- interventions --------------------------------------------------------


@dataclass(frozen=True)
class Intervention:
    """``do(variables = values)`` with ``variables`` in sorted order."""

    variables: tuple[str, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.variables) != len(self.values):
            raise InterventionError("one value is required per intervened variable")
        if list(self.variables) != sorted(self.variables):
            pairs = sorted(zip(self.variables, self.values))
            object.__setattr__(self, "variables", tuple(p[0] for p in pairs))
            object.__setattr__(self, "values", tuple(float(p[1]) for p in pairs))
        else:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(set(self.variables)) != len(self.variables):
            raise InterventionError("a variable is intervened on twice")

    @classmethod
    def from_mapping(cls, assignment: Mapping[str, float]) -> "Intervention":
        items = sorted(assignment.items())
        return cls(tuple(k for k, _ in items), tuple(float(v) for _, v in items))

    @classmethod
    def parse(cls, text: str) -> "Intervention":
        """Parse ``"X2=1.0,X3=0.5"``; an empty string means no intervention."""
        assignment = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                raise InterventionError(f"cannot parse intervention {part!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            try:
                assignment[k] = float(v)
            except ValueError:
                raise InterventionError(f"value for {k} is not a number") from None
        return cls.from_mapping(assignment)

    @property
    def set(self) -> frozenset:
        return frozenset(self.variables)


def validate_intervention(spec: ScmSpec, intervention: Intervention, tol: float = 1e-9) -> None:
    for v, x in zip(intervention.variables, intervention.values):
        if v not in spec.graph.roles:
            raise InterventionError(f"unknown variable {v}")
        if spec.graph.roles[v] is not VariableRole.TREATMENT:
            raise InterventionError(f"{v} is not a treatment variable")
        lo, hi = spec.domains[v]
        if not (lo - tol <= x <= hi + tol):
            raise InterventionError(f"{v}={x} is outside its domain [{lo}, {hi}]")


# -- simulation -----------------------------------------------------------


def _sample_exogenous(spec: ScmSpec, n: int, seed) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    # drawn in declaration order regardless of the intervention: same seed, same noise
    return {u.name: u.sample(rng, n) for u in spec.exogenous}


def _propagate(spec: ScmSpec, env: dict, clamp: Mapping[str, np.ndarray | float]) -> dict:
    for v in spec.graph.topological_order():
        if v in clamp:
            env[v] = clamp[v]
            continue
        try:
            value = spec.equations[v].evaluate(env)
        except EvaluationError as exc:
            raise SimulationError(v, str(exc)) from None
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise SimulationError(v, "non-finite value produced")
        env[v] = value
    return env


def simulate(spec: ScmSpec, intervention: Intervention | None = None, n: int = 1, seed=None) -> np.ndarray:
    """Draw ``n`` samples of every endogenous variable under ``intervention``.

    Returns an ``(n, len(spec.order))`` array with columns in ``spec.order``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    intervention = intervention or Intervention()
    validate_intervention(spec, intervention)
    env = _sample_exogenous(spec, n, seed)
    clamp = dict(zip(intervention.variables, intervention.values))
    env = _propagate(spec, env, clamp)
    return np.column_stack([np.broadcast_to(env[v], (n,)) for v in spec.order]).astype(float)


@dataclass(frozen=True)
class MuVector:
    """Monte-Carlo estimate of the target means under one intervention."""

    means: tuple[float, ...]
    std_error: tuple[float, ...]
    mc_samples: int

    def to_dict(self, targets: Sequence[str] | None = None) -> dict:
        out = {"means": list(self.means), "std_error": list(self.std_error), "mc_samples": self.mc_samples}
        if targets is not None:
            out["targets"] = list(targets)
        return out


def interventional_mean(
    spec: ScmSpec, intervention: Intervention | None = None, n: int = DEFAULT_MC_SAMPLES, seed=None
) -> MuVector:
    if n < 2:
        raise ValueError("n must be at least 2")
    samples = simulate(spec, intervention, n, seed)
    cols = [spec.order.index(t) for t in spec.targets]
    y = samples[:, cols]
    return MuVector(
        tuple(float(v) for v in y.mean(axis=0)),
        tuple(float(v) for v in y.std(axis=0, ddof=1) / np.sqrt(n)),
        n,
    )


def batch_interventional_means(
    spec: ScmSpec,
    variables: Sequence[str],
    values: np.ndarray,
    n: int = DEFAULT_MC_SAMPLES,
    seed=None,
    max_elements: int = 2_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Target means for many interventions on the same set, sharing one noise draw.

    ``values`` is ``(k, len(variables))``.  Returns ``(means, std_errors)``,
    each ``(k, m)``.  Every row uses the same exogenous samples, so the
    results are comparable without Monte-Carlo jitter between rows.
    """
    variables = tuple(variables)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        values = values.reshape(-1, len(variables))
    k = values.shape[0]
    for row in values[: min(k, 1)]:
        validate_intervention(spec, Intervention(variables, tuple(row)))
    bounds = spec.domain_of(variables)
    if len(variables) and (np.any(values < bounds[:, 0] - 1e-9) or np.any(values > bounds[:, 1] + 1e-9)):
        raise InterventionError("intervention values outside their domains")
    exo = _sample_exogenous(spec, n, seed)
    m = len(spec.targets)
    means = np.empty((k, m))
    errs = np.empty((k, m))
    chunk = max(1, max_elements // n)
    for start in range(0, k, chunk):
        block = values[start : start + chunk]
        clamp = {v: block[:, [j]] for j, v in enumerate(variables)}
        env = _propagate(spec, dict(exo), clamp)
        for i, t in enumerate(spec.targets):
            y = np.broadcast_to(env[t], (block.shape[0], n))
            means[start : start + chunk, i] = y.mean(axis=1)
            errs[start : start + chunk, i] = y.std(axis=1, ddof=1) / np.sqrt(n)
    return means, errs
