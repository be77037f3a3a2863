"""Acyclic directed mixed graphs and the intervention-set machinery built on them.

Bidirected edges stand for unobserved confounders.  Everything here is a pure
function of an immutable :class:`CausalGraph`; vertex iteration is always in
sorted-name order so results are reproducible.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

VSet = frozenset  # frozenset[str]


class GraphError(ValueError):
    """Malformed graph or invalid graph query."""


class SearchSpaceTooLarge(GraphError):
    """Raised when subset enumeration would exceed the treatment cap."""


class ConsistencyFailure(AssertionError):
    """A graph-theoretic invariant was violated; ``witness`` names the offending subset."""

    def __init__(self, message: str, witness: frozenset | None = None):
        super().__init__(message)
        self.witness = witness


class VariableRole(str, enum.Enum):
    TREATMENT = "treatment"
    TARGET = "target"
    NON_MANIPULATIVE = "nonmanipulative"

    @classmethod
    def parse(cls, text: str) -> "VariableRole":
        key = text.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "treatment": cls.TREATMENT,
            "x": cls.TREATMENT,
            "target": cls.TARGET,
            "output": cls.TARGET,
            "y": cls.TARGET,
            "nonmanipulative": cls.NON_MANIPULATIVE,
            "nonmanipulable": cls.NON_MANIPULATIVE,
            "c": cls.NON_MANIPULATIVE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise GraphError(f"unknown variable role {text!r}") from None


def _bi(a: str, b: str) -> frozenset:
    return frozenset((a, b))


class CausalGraph:
    """An ADMG with a role attached to each vertex.

    Parameters
    ----------
    roles : mapping of vertex name to :class:`VariableRole`
    directed : iterable of ``(parent, child)`` pairs
    bidirected : iterable of unordered pairs (any 2-element iterable)
    """

    __slots__ = ("roles", "directed", "bidirected", "_pa", "_ch", "_sib")

    def __init__(self, roles, directed=(), bidirected=()):
        roles = {str(v): VariableRole(r) for v, r in dict(roles).items()}
        directed = frozenset((str(a), str(b)) for a, b in directed)
        bidi = set()
        for pair in bidirected:
            a, b = tuple(pair)
            bidi.add(_bi(str(a), str(b)))
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "bidirected", frozenset(bidi))
        self._validate()
        pa = {v: set() for v in roles}
        ch = {v: set() for v in roles}
        sib = {v: set() for v in roles}
        for a, b in directed:
            pa[b].add(a)
            ch[a].add(b)
        for pair in self.bidirected:
            a, b = tuple(pair)
            sib[a].add(b)
            sib[b].add(a)
        object.__setattr__(self, "_pa", {v: frozenset(s) for v, s in pa.items()})
        object.__setattr__(self, "_ch", {v: frozenset(s) for v, s in ch.items()})
        object.__setattr__(self, "_sib", {v: frozenset(s) for v, s in sib.items()})

    def __setattr__(self, name, value):
        raise AttributeError("CausalGraph is immutable")

    def _validate(self) -> None:
        for name in self.roles:
            if not name or not name.strip():
                raise GraphError("vertex names must be non-empty")
        for a, b in self.directed:
            if a == b:
                raise GraphError(f"self-loop on {a}")
            for v in (a, b):
                if v not in self.roles:
                    raise GraphError(f"edge {a} -> {b} references unknown vertex {v}")
        for pair in self.bidirected:
            if len(pair) != 2:
                raise GraphError(f"bidirected self-loop on {next(iter(pair))}")
            for v in pair:
                if v not in self.roles:
                    raise GraphError(f"bidirected edge references unknown vertex {v}")
        if _find_cycle(self.roles, self.directed) is not None:
            raise GraphError(f"directed cycle through {_find_cycle(self.roles, self.directed)}")

    # -- basic accessors -------------------------------------------------

    @property
    def vertices(self) -> tuple[str, ...]:
        return tuple(sorted(self.roles))

    def with_role(self, role: VariableRole) -> tuple[str, ...]:
        return tuple(v for v in self.vertices if self.roles[v] is role)

    @property
    def treatments(self) -> tuple[str, ...]:
        return self.with_role(VariableRole.TREATMENT)

    @property
    def targets(self) -> tuple[str, ...]:
        return self.with_role(VariableRole.TARGET)

    @property
    def non_manipulative(self) -> tuple[str, ...]:
        return self.with_role(VariableRole.NON_MANIPULATIVE)

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return (
            self.roles == other.roles
            and self.directed == other.directed
            and self.bidirected == other.bidirected
        )

    def __hash__(self):
        return hash((frozenset(self.roles.items()), self.directed, self.bidirected))

    def __repr__(self):
        return (
            f"CausalGraph(vertices={list(self.vertices)}, "
            f"directed={sorted(self.directed)}, "
            f"bidirected={sorted(tuple(sorted(p)) for p in self.bidirected)})"
        )

    def _check(self, S: Iterable[str]) -> frozenset:
        S = frozenset(S)
        unknown = S - self.roles.keys()
        if unknown:
            raise GraphError(f"unknown vertices: {sorted(unknown)}")
        return S

    def topological_order(self) -> tuple[str, ...]:
        order = []
        indeg = {v: len(self._pa[v]) for v in self.roles}
        ready = sorted(v for v, d in indeg.items() if d == 0)
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(self._ch[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        return tuple(order)


def _find_cycle(vertices, directed) -> list | None:
    children = {v: [] for v in vertices}
    for a, b in directed:
        if a in children:
            children[a].append(b)
    colour = dict.fromkeys(vertices, 0)
    for root in sorted(vertices):
        if colour[root]:
            continue
        stack = [(root, iter(sorted(children[root])))]
        path = [root]
        colour[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[v] = 2
                stack.pop()
                path.pop()
                continue
            if colour.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            if colour.get(nxt) == 0:
                colour[nxt] = 1
                stack.append((nxt, iter(sorted(children[nxt]))))
                path.append(nxt)
    return None


# -- ancestral relations ------------------------------------------------


def parents(graph: CausalGraph, S: Iterable[str], include_self: bool = False) -> frozenset:
    """Union of the parents of ``S``; ``include_self`` gives the capitalised ``Pa``."""
    S = graph._check(S)
    out = set().union(*(graph._pa[v] for v in S)) if S else set()
    if include_self:
        out |= S
    return frozenset(out)


def children(graph: CausalGraph, S: Iterable[str]) -> frozenset:
    S = graph._check(S)
    return frozenset(set().union(*(graph._ch[v] for v in S))) if S else frozenset()


def _closure(adjacency: Mapping[str, frozenset], S: frozenset) -> set:
    seen: set = set()
    frontier = list(S)
    while frontier:
        v = frontier.pop()
        for w in adjacency[v]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def ancestors(graph: CausalGraph, S: Iterable[str], include_self: bool = False) -> frozenset:
    """Vertices with a directed path into ``S``.

    Members of ``S`` are excluded unless reached from another member, or
    ``include_self`` is set (the ``An`` convention).
    """
    S = graph._check(S)
    out = _closure(graph._pa, S)
    if include_self:
        out |= S
    return frozenset(out)


def descendants(graph: CausalGraph, S: Iterable[str], include_self: bool = False) -> frozenset:
    S = graph._check(S)
    out = _closure(graph._ch, S)
    if include_self:
        out |= S
    return frozenset(out)


# -- graph surgery ------------------------------------------------------


def mutilate(graph: CausalGraph, S: Iterable[str]) -> CausalGraph:
    """Do-graph for an intervention on ``S``.

    Directed edges into ``S`` and bidirected edges touching ``S`` are removed.
    """
    S = graph._check(S)
    bad = sorted(v for v in S if graph.roles[v] is not VariableRole.TREATMENT)
    if bad:
        raise GraphError(f"cannot intervene on non-treatment variables {bad}")
    if not S:
        return graph
    return CausalGraph(
        graph.roles,
        (e for e in graph.directed if e[1] not in S),
        (p for p in graph.bidirected if not (p & S)),
    )


def subgraph(graph: CausalGraph, W: Iterable[str]) -> CausalGraph:
    W = graph._check(W)
    return CausalGraph(
        {v: graph.roles[v] for v in W},
        (e for e in graph.directed if e[0] in W and e[1] in W),
        (p for p in graph.bidirected if p <= W),
    )


def c_component(graph: CausalGraph, S: Iterable[str]) -> frozenset:
    """All vertices joined to ``S`` through bidirected edges, ``S`` included."""
    S = graph._check(S)
    return frozenset(_closure(graph._sib, S) | S)


# -- MUCT / interventional border --------------------------------------


def _target_set(graph: CausalGraph, Y) -> frozenset:
    Y = graph.targets if Y is None else Y
    Y = graph._check(Y)
    if not Y:
        raise GraphError("at least one target is required")
    return Y


def muct(graph: CausalGraph, Y: Iterable[str] | None = None) -> frozenset:
    """Minimal unobserved-confounders' territory of the targets ``Y``.

    Grown from ``Y`` inside ``H = G[An(Y)]`` by alternately closing under
    c-components and descendants until nothing changes.
    """
    Y = _target_set(graph, Y)
    H = subgraph(graph, ancestors(graph, Y, include_self=True))
    T = Y
    while True:
        grown = descendants(H, c_component(H, T), include_self=True)
        if grown == T:
            return T
        T = grown


def interventional_border(graph: CausalGraph, Y: Iterable[str] | None = None) -> frozenset:
    T = muct(graph, Y)
    return parents(graph, T) - T


def is_minimal_intervention_set(
    graph: CausalGraph, S: Iterable[str], Y: Iterable[str] | None = None
) -> bool:
    Y = _target_set(graph, Y)
    S = frozenset(S)
    return S <= ancestors(mutilate(graph, S), Y)


def is_pomis(graph: CausalGraph, S: Iterable[str], Y: Iterable[str] | None = None) -> bool:
    S = frozenset(S)
    return interventional_border(mutilate(graph, S), Y) == S


def set_sort_key(S: Iterable[str]) -> tuple:
    members = tuple(sorted(S))
    return (len(members), members)


def sorted_sets(sets: Iterable[Iterable[str]]) -> list[frozenset]:
    """Deterministic order for families of sets: by size, then sorted member names."""
    return sorted((frozenset(s) for s in set(map(frozenset, sets))), key=set_sort_key)


def powerset(items: Iterable[str]) -> Iterator[frozenset]:
    items = sorted(items)
    for k in range(len(items) + 1):
        for combo in itertools.combinations(items, k):
            yield frozenset(combo)


MAX_TREATMENTS = 20


def _ensure_manipulable(graph: CausalGraph) -> CausalGraph:
    return latent_project(graph) if graph.non_manipulative else graph


def enumerate_pomis(graph: CausalGraph, max_treatments: int = MAX_TREATMENTS) -> list[frozenset]:
    """All possibly Pareto-optimal minimal intervention sets.

    Scans every subset of the treatments for the fixpoint
    ``IB(G_do(S), Y) == S``.  Graphs with non-manipulative vertices are latent
    projected first.
    """
    graph = _ensure_manipulable(graph)
    _target_set(graph, None)
    X = graph.treatments
    if len(X) > max_treatments:
        raise SearchSpaceTooLarge(
            f"search space too large: {len(X)} treatments exceeds cap of {max_treatments}"
        )
    return sorted_sets(S for S in powerset(X) if is_pomis(graph, S))


def enumerate_mis(graph: CausalGraph, max_treatments: int = MAX_TREATMENTS) -> list[frozenset]:
    graph = _ensure_manipulable(graph)
    X = graph.treatments
    if len(X) > max_treatments:
        raise SearchSpaceTooLarge(
            f"search space too large: {len(X)} treatments exceeds cap of {max_treatments}"
        )
    return sorted_sets(S for S in powerset(X) if is_minimal_intervention_set(graph, S))


# -- latent projection --------------------------------------------------


def latent_project(graph: CausalGraph, C: Iterable[str] | None = None) -> CausalGraph:
    """Remove the vertices ``C`` (default: all non-manipulative ones).

    ``A -> B`` is kept iff a directed path from A to B runs only through ``C``;
    ``A <-> B`` iff a collider-free path with arrowheads at both A and B runs
    only through ``C`` (a common ``C``-ancestor, or a bidirected edge between
    ``C``-ancestors of each end).
    """
    C = graph.non_manipulative if C is None else C
    C = graph._check(C)
    if any(graph.roles[c] is VariableRole.TARGET for c in C):
        raise GraphError("targets cannot be projected out")
    if not C:
        return graph
    keep = [v for v in graph.vertices if v not in C]

    # C-vertices reaching v through directed paths whose interior lies in C
    hidden_anc = {}
    for v in keep:
        seen = set()
        frontier = [p for p in graph._pa[v] if p in C]
        while frontier:
            c = frontier.pop()
            if c in seen:
                continue
            seen.add(c)
            frontier.extend(p for p in graph._pa[c] if p in C)
        hidden_anc[v] = seen

    directed = set()
    for b in keep:
        for a in graph._pa[b] | set().union(*(graph._pa[c] for c in hidden_anc[b])):
            if a not in C:
                directed.add((a, b))

    bidirected = set()
    for a, b in itertools.combinations(keep, 2):
        ends_a = hidden_anc[a] | {a}
        ends_b = hidden_anc[b] | {b}
        if hidden_anc[a] & hidden_anc[b] or any(
            graph._sib[u] & ends_b for u in ends_a
        ):
            bidirected.add(_bi(a, b))
    return CausalGraph({v: graph.roles[v] for v in keep}, directed, bidirected)


# -- self-checking ------------------------------------------------------


@dataclass
class ConsistencyReport:
    muct: frozenset
    border: frozenset
    pomis: list
    borders_checked: int
    territories_checked: int

    def lines(self) -> list[str]:
        return [
            f"MUCT = {sorted(self.muct)}",
            f"IB = {sorted(self.border)}",
            f"POMIS = {[sorted(s) for s in self.pomis]}",
            f"borders checked: {self.borders_checked}",
            f"territories checked: {self.territories_checked}",
        ]


def _is_uc_territory(H: CausalGraph, T: frozenset) -> bool:
    return descendants(H, T, include_self=True) == T and c_component(H, T) == T


def check_pomis_consistency(graph: CausalGraph, max_vertices: int = 12) -> ConsistencyReport:
    """Brute-force cross-checks of the MUCT / border / POMIS machinery.

    Raises :class:`ConsistencyFailure` naming a witness subset on the first
    violation.
    """
    graph = _ensure_manipulable(graph)
    if len(graph.roles) > max_vertices:
        raise GraphError(f"graph too large for brute-force checks ({len(graph.roles)} vertices)")
    Y = frozenset(graph.targets)
    pomis = enumerate_pomis(graph)
    pomis_set = set(pomis)

    images = set()
    n_borders = 0
    for S in powerset(graph.treatments):
        border = interventional_border(mutilate(graph, S), Y)
        n_borders += 1
        if not is_pomis(graph, border):
            raise ConsistencyFailure(
                f"IB of do({sorted(S)}) = {sorted(border)} is not a fixpoint", witness=S
            )
        images.add(border)
    if images != pomis_set:
        diff = images ^ pomis_set
        raise ConsistencyFailure(
            "border images disagree with the subset scan", witness=sorted_sets(diff)[0]
        )

    mis = set(enumerate_mis(graph))
    for S in pomis:
        if S not in mis:
            raise ConsistencyFailure(f"POMIS {sorted(S)} is not a MIS", witness=S)

    H = subgraph(graph, ancestors(graph, Y, include_self=True))
    T = muct(graph, Y)
    if not _is_uc_territory(H, T):
        raise ConsistencyFailure(f"MUCT {sorted(T)} is not closed", witness=T)
    n_terr = 0
    for extra in powerset(T - Y):
        cand = Y | extra
        if cand == T:
            continue
        n_terr += 1
        if _is_uc_territory(H, cand):
            raise ConsistencyFailure(
                f"{sorted(cand)} is a smaller UC-territory than {sorted(T)}", witness=cand
            )
    return ConsistencyReport(T, parents(graph, T) - T, pomis, n_borders, n_terr)


def random_admg(
    rng: np.random.Generator,
    n_vertices: int = 6,
    n_targets: int = 2,
    edge_prob: float = 0.35,
    max_bidirected: int = 3,
) -> CausalGraph:
    """Random ADMG whose sinks-first ordering keeps targets downstream."""
    names = [f"V{i}" for i in range(n_vertices)]
    roles = {
        v: VariableRole.TARGET if i >= n_vertices - n_targets else VariableRole.TREATMENT
        for i, v in enumerate(names)
    }
    directed = [
        (names[i], names[j])
        for i in range(n_vertices)
        for j in range(i + 1, n_vertices)
        if rng.random() < edge_prob
    ]
    pairs = list(itertools.combinations(names, 2))
    k = int(rng.integers(0, max_bidirected + 1))
    picks = rng.choice(len(pairs), size=min(k, len(pairs)), replace=False)
    return CausalGraph(roles, directed, [pairs[i] for i in picks])


# -- text format --------------------------------------------------------

_SECTION = re.compile(r"^\[(\w+)\]$")
_DIRECTED = re.compile(r"^(\S+)\s*->\s*(\S+)$")
_BIDIRECTED = re.compile(r"^(\S+)\s*<->\s*(\S+)$")


def iter_sections(text: str) -> Iterator[tuple[str, int, str]]:
    """Yield ``(section, line_number, stripped_line)`` for every content line."""
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            continue
        if section is None:
            raise GraphError(f"line {lineno}: content outside of a section")
        yield section, lineno, line


def parse_variables_and_edges(text: str, strict: bool = False):
    """Read the ``[variables]`` and ``[edges]`` sections.

    Returns ``(roles, directed, bidirected, lines)`` where ``lines`` maps each
    edge to the line that declared it.
    """
    roles: dict[str, VariableRole] = {}
    directed, bidirected = [], []
    where: dict = {}
    for section, lineno, line in iter_sections(text):
        if section == "variables":
            if ":" not in line:
                raise GraphError(f"line {lineno}: expected 'NAME: role'")
            name, role = (s.strip() for s in line.split(":", 1))
            if name in roles:
                raise GraphError(f"line {lineno}: duplicate variable {name}")
            roles[name] = VariableRole.parse(role)
        elif section == "edges":
            m = _BIDIRECTED.match(line)
            if m:
                bidirected.append(m.groups())
                where[_bi(*m.groups())] = lineno
                continue
            m = _DIRECTED.match(line)
            if m:
                directed.append(m.groups())
                where[m.groups()] = lineno
                continue
            raise GraphError(f"line {lineno}: cannot parse edge {line!r}")
        elif strict:
            raise GraphError(f"line {lineno}: unexpected section [{section}]")
    return roles, directed, bidirected, where


def parse_graph(text: str) -> CausalGraph:
    roles, directed, bidirected, _ = parse_variables_and_edges(text)
    return CausalGraph(roles, directed, bidirected)


def format_graph(graph: CausalGraph, order: Iterable[str] | None = None) -> str:
    order = list(order) if order is not None else list(graph.vertices)
    lines = ["[variables]"]
    lines += [f"{v}: {graph.roles[v].value}" for v in order]
    lines += ["", "[edges]"]
    rank = {v: i for i, v in enumerate(order)}
    lines += [f"{a} -> {b}" for a, b in sorted(graph.directed, key=lambda e: (rank[e[1]], rank[e[0]]))]
    bis = sorted((tuple(sorted(p, key=rank.get)) for p in graph.bidirected), key=lambda p: (rank[p[0]], rank[p[1]]))
    lines += [f"{a} <-> {b}" for a, b in bis]
    return "\n".join(lines) + "\n"


def analyze(graph: CausalGraph) -> dict:
    """MUCT, border, MIS and POMIS families as plain JSON-ready data."""
    projected = _ensure_manipulable(graph)
    T = muct(projected)
    return {
        "targets": list(projected.targets),
        "treatments": list(projected.treatments),
        "projected_out": list(graph.non_manipulative),
        "muct": sorted(T),
        "interventional_border": sorted(parents(projected, T) - T),
        "mis": [sorted(s) for s in enumerate_mis(projected)],
        "pomis": [sorted(s) for s in enumerate_pomis(projected)],
    }
