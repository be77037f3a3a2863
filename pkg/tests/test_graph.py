import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import oracle_border, oracle_pomis

from causal_pareto.graph import (
    CausalGraph,
    ConsistencyFailure,
    GraphError,
    SearchSpaceTooLarge,
    VariableRole,
    analyze,
    ancestors,
    c_component,
    check_pomis_consistency,
    descendants,
    enumerate_mis,
    enumerate_pomis,
    format_graph,
    interventional_border,
    is_minimal_intervention_set,
    is_pomis,
    latent_project,
    muct,
    mutilate,
    parents,
    parse_graph,
    random_admg,
    subgraph,
)
from causal_pareto.problems import builtin_problem

T, Y, C = VariableRole.TREATMENT, VariableRole.TARGET, VariableRole.NON_MANIPULATIVE


def fs(*names):
    return frozenset(names)


@pytest.fixture(scope="module")
def fig_a():
    # four treatments, two targets, no confounders
    return builtin_problem("synthetic1").graph


@pytest.fixture(scope="module")
def fig_b():
    # as above plus the X4 <-> Y1 confounder and X4 -> X1 -> Y1
    return builtin_problem("synthetic2").graph


def chain(*names, roles=None):
    roles = roles or {n: (Y if i == len(names) - 1 else T) for i, n in enumerate(names)}
    return CausalGraph(roles, zip(names, names[1:]))


# -- construction -----------------------------------------------------------


def test_rejects_cycle():
    with pytest.raises(GraphError, match="cycle"):
        CausalGraph({"A": T, "B": Y}, [("A", "B"), ("B", "A")])


def test_rejects_self_loops_and_unknown_vertices():
    with pytest.raises(GraphError, match="self-loop"):
        CausalGraph({"A": Y}, [("A", "A")])
    with pytest.raises(GraphError, match="unknown vertex"):
        CausalGraph({"A": Y}, [("A", "B")])
    with pytest.raises(GraphError):
        CausalGraph({"A": Y}, bidirected=[("A", "Z")])


def test_graph_is_immutable(fig_a):
    with pytest.raises(AttributeError):
        fig_a.roles = {}


def test_role_aliases():
    assert VariableRole.parse("Non-Manipulative") is C
    assert VariableRole.parse("output") is Y
    with pytest.raises(GraphError, match="unknown variable role"):
        VariableRole.parse("knob")


# -- relations --------------------------------------------------------------


def test_chain_relations():
    g = chain("A", "B", "C")
    assert parents(g, {"C"}) == fs("B")
    assert parents(g, {"C"}, include_self=True) == fs("B", "C")
    assert ancestors(g, {"C"}) == fs("A", "B")
    assert ancestors(g, set()) == frozenset()
    assert descendants(g, {"A"}) == fs("B", "C")


def test_unknown_vertex_is_an_error(fig_a):
    with pytest.raises(GraphError):
        parents(fig_a, {"nope"})


def test_fig_a_parents_of_targets(fig_a):
    assert parents(fig_a, {"Y1", "Y2"}) == fs("X1", "X2")


def test_fig_b_x4_is_ancestor_of_y1(fig_b):
    assert "X4" in ancestors(fig_b, {"Y1"})


# -- surgery ----------------------------------------------------------------


def test_mutilate_identity_and_chain(fig_b):
    assert mutilate(fig_b, set()) == fig_b
    g = chain("A", "B", "C")
    assert mutilate(g, {"B"}).directed == {("B", "C")}


def test_mutilate_fig_b_keeps_unrelated_confounder(fig_b):
    m = mutilate(fig_b, {"X1"})
    assert ("X4", "X1") not in m.directed
    assert fs("X4", "Y1") in m.bidirected


def test_mutilate_drops_confounders_of_intervened(fig_b):
    assert fs("X4", "Y1") not in mutilate(fig_b, {"X4"}).bidirected


def test_mutilate_rejects_targets(fig_b):
    with pytest.raises(GraphError, match="non-treatment"):
        mutilate(fig_b, {"Y1"})


def test_subgraph_edge_cases(fig_b):
    assert subgraph(fig_b, fig_b.vertices) == fig_b
    assert subgraph(fig_b, set()).vertices == ()
    assert subgraph(fig_b, ancestors(fig_b, fig_b.targets, include_self=True)) == fig_b


def test_c_components(fig_a, fig_b):
    assert c_component(fig_a, {"X1", "Y2"}) == fs("X1", "Y2")
    assert c_component(fig_b, {"Y1", "Y2"}) == fs("Y1", "Y2", "X4")
    g = CausalGraph({v: T for v in "ABCD"} | {"Z": Y}, bidirected=[("A", "B"), ("C", "D")])
    assert c_component(g, {"A", "C"}) == fs("A", "B", "C", "D")


# -- MUCT, border, POMIS ----------------------------------------------------


def test_fig_a_muct_border_pomis(fig_a):
    assert muct(fig_a) == fs("Y1", "Y2")
    assert interventional_border(fig_a) == fs("X1", "X2")
    assert enumerate_pomis(fig_a) == [fs("X1", "X2")]
    assert is_pomis(fig_a, {"X1", "X2"})


def test_fig_b_muct_border_pomis(fig_b):
    assert muct(fig_b) == fs("Y1", "Y2", "X1", "X4")
    assert interventional_border(fig_b) == fs("X2", "X3")
    assert enumerate_pomis(fig_b) == [fs("X2", "X3"), fs("X1", "X2", "X3")]
    assert not is_pomis(fig_b, {"X4"})


def test_isolated_targets_have_empty_border():
    g = CausalGraph({"A": T, "Y": Y})
    assert interventional_border(g) == frozenset()
    assert enumerate_pomis(g) == [frozenset()]


def test_minimal_intervention_sets(fig_b):
    g = chain("X1", "X2", "Y")
    assert is_minimal_intervention_set(g, set())
    assert not is_minimal_intervention_set(g, {"X1", "X2"})
    assert is_minimal_intervention_set(fig_b, {"X4"})
    assert set(enumerate_pomis(fig_b)) <= set(enumerate_mis(fig_b))


def test_treatment_cap():
    roles = {f"X{i}": T for i in range(5)} | {"Y": Y}
    g = CausalGraph(roles, [(f"X{i}", "Y") for i in range(5)])
    with pytest.raises(SearchSpaceTooLarge, match="too large"):
        enumerate_pomis(g, max_treatments=4)


def test_health_projection_and_pomis():
    g = builtin_problem("health").graph
    p = latent_project(g)
    assert set(p.vertices) == {"CI", "Weight", "BMI", "Aspirin", "Statin", "PSA"}
    # Age is a common cause of both targets, Cancer mediates into PSA
    assert fs("PSA", "Statin") in p.bidirected
    assert ("Aspirin", "PSA") in p.directed
    assert enumerate_pomis(g) == [fs("Aspirin", "BMI")]


def test_latent_projection_rules():
    g = CausalGraph({"A": T, "C": C, "B": Y}, [("A", "C"), ("C", "B")])
    assert latent_project(g).directed == {("A", "B")}
    assert latent_project(g, set()) == g
    fork = CausalGraph({"C": C, "A": Y, "B": Y}, [("C", "A"), ("C", "B")])
    assert latent_project(fork).bidirected == {fs("A", "B")}
    with pytest.raises(GraphError, match="targets"):
        latent_project(fork, {"A"})


def test_consistency_checks_pass_on_benchmarks(fig_a, fig_b):
    assert check_pomis_consistency(fig_a).pomis == [fs("X1", "X2")]
    assert check_pomis_consistency(fig_b).muct == fs("X1", "X4", "Y1", "Y2")


def test_consistency_failure_is_assertion_with_witness():
    err = ConsistencyFailure("broken", witness=fs("A"))
    assert isinstance(err, AssertionError) and err.witness == fs("A")


# -- independent oracle and invariants ----------------------------------------


@st.composite
def admgs(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(2, 7))
    k = draw(st.integers(1, min(2, n - 1)))
    return random_admg(np.random.default_rng(seed), n_vertices=n, n_targets=k, edge_prob=0.45)


def _oracle_args(g):
    return list(g.roles), sorted(g.directed), [tuple(sorted(p)) for p in g.bidirected], g.targets


@given(admgs())
def test_border_matches_oracle(g):
    for S in [frozenset(), frozenset(g.treatments[:1]), frozenset(g.treatments[::2])]:
        want = oracle_border(*_oracle_args(g), set(S))
        assert interventional_border(mutilate(g, S)) == want


@given(admgs())
def test_pomis_matches_oracle(g):
    want = oracle_pomis(*_oracle_args(g), g.treatments)
    assert sorted(map(sorted, enumerate_pomis(g))) == sorted(map(sorted, want))


@given(admgs())
def test_border_images_are_pomis(g):
    from causal_pareto.graph import powerset

    pomis = set(enumerate_pomis(g))
    for S in powerset(g.treatments):
        assert interventional_border(mutilate(g, S)) in pomis


@given(admgs())
def test_mutilation_is_idempotent(g):
    S = g.treatments[: len(g.treatments) // 2]
    assert mutilate(mutilate(g, S), S) == mutilate(g, S)


@given(admgs())
def test_muct_is_closed(g):
    H = subgraph(g, ancestors(g, g.targets, include_self=True))
    M = muct(g)
    assert descendants(H, M, include_self=True) == M
    assert c_component(H, M) == M


@given(admgs())
def test_no_confounders_collapse_to_parents(g):
    plain = CausalGraph(g.roles, g.directed)
    assert enumerate_pomis(plain) == [parents(plain, plain.targets) - frozenset(plain.targets)]


@given(admgs())
def test_projection_keeps_acyclicity(g):
    # mark one treatment as non-manipulative and project it away
    if not g.treatments:
        return
    roles = dict(g.roles)
    roles[g.treatments[0]] = C
    h = CausalGraph(roles, g.directed, g.bidirected)
    p = latent_project(h)  # the constructor rejects cycles
    assert g.treatments[0] not in p.roles


# -- text format --------------------------------------------------------------


def test_parse_format_round_trip(fig_b):
    assert parse_graph(format_graph(fig_b)) == fig_b


def test_parse_errors_carry_line_numbers():
    with pytest.raises(GraphError, match="line 3"):
        parse_graph("[variables]\nA: treatment\nB treatment\n")
    with pytest.raises(GraphError, match="line 5"):
        parse_graph("[variables]\nA: treatment\nB: target\n[edges]\nA => B\n")
    with pytest.raises(GraphError, match="outside"):
        parse_graph("A: treatment\n")


def test_analyze_output(fig_b):
    info = analyze(fig_b)
    assert info["muct"] == ["X1", "X4", "Y1", "Y2"]
    assert info["interventional_border"] == ["X2", "X3"]
    assert info["pomis"] == [["X2", "X3"], ["X1", "X2", "X3"]]
    assert info["projected_out"] == []
