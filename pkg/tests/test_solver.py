import json

import numpy as np
import pytest

from oracles import brute_nondominated

from causal_pareto import solver as solver_mod
from causal_pareto.problems import builtin_problem
from causal_pareto.scm import MuVector, parse_spec
from causal_pareto.solver import (
    CausalParetoSelect,
    ConfigError,
    SolverConfig,
    load_checkpoint,
    metric_at_budget,
    run,
    run_baseline,
    save_checkpoint,
)

# small inner optimiser and few MC samples keep each run around a second
FAST = dict(mc_samples=500, pop_size=20, n_gen=8)

# {A} reaches the trade-off (a, (1-a)^2); {B} leaves A at its natural value 5
# and every point of it is dominated
TWO_SETS = """
[variables]
A: treatment
B: treatment
Y1: target
Y2: target
[edges]
A -> Y1
A -> Y2
B -> Y1
B -> Y2
[exogenous]
K = constant(5)
Z = constant(0)
U = normal(0, 0.01)
[equations]
A = K
B = Z
Y1 = A + B + U
Y2 = (1 - A) ** 2 + B
[domains]
A = [0, 1]
B = [0, 1]
"""


def config(**kw):
    return SolverConfig(**(FAST | kw))


@pytest.fixture(scope="module")
def s2():
    return builtin_problem("synthetic2")


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(k_init=0)
    with pytest.raises(ConfigError):
        SolverConfig(sets_mode="random")
    with pytest.raises(ConfigError):
        SolverConfig(sets_mode="explicit")


def test_explicit_sets_must_be_treatments(s2):
    with pytest.raises(ConfigError, match="Y1"):
        CausalParetoSelect(s2, config(sets_mode="explicit", sets=[["Y1"]]))


@pytest.mark.parametrize("name, n_sets", [("synthetic1", 1), ("synthetic2", 2)])
def test_initial_design_size(name, n_sets):
    s = CausalParetoSelect(builtin_problem(name), config()).initialize()
    assert len(s.sets) == n_sets
    assert len(s.records) == 5 * n_sets
    for p in s.problems:
        X = p.X
        assert ((X >= p.bounds[:, 0]) & (X <= p.bounds[:, 1])).all()


def test_budget_accounting(s2):
    report = run(s2, config(iterations=3, batch_size=4, k_init=3))
    assert report.evaluations == 2 * 3 + 3 * 4
    assert report.intervention_count == sum(len(r.set) for r in report.records)
    counts = [e.intervention_count for e in report.log]
    assert counts == sorted(counts)
    assert report.log[-1].evaluations == report.evaluations


def test_zero_iterations_reports_initial_design(s2):
    report = run(s2, config(iterations=0))
    assert report.log == [] and report.evaluations == 10
    assert len(report.front) >= 1


def test_empty_set_is_evaluated_once_per_choice():
    spec = builtin_problem("synthetic1")
    s = CausalParetoSelect(spec, config(sets_mode="explicit", sets=[[]], iterations=2))
    report = s.run()
    assert s.problems[0].dim == 0
    # a zero-dimensional domain has a single point, so batches collapse to it
    assert report.evaluations == 1 + 2
    assert all(r.x == () for r in report.records)


def test_only_the_chosen_set_is_refitted(s2):
    s = CausalParetoSelect(s2, config()).initialize()
    before = {p.set: (list(p.models), p.fit_round) for p in s.problems}
    entry = s.step()
    for p in s.problems:
        models, fit_round = before[p.set]
        if p.set == entry.chosen:
            assert p.fit_round == 1 and p.models[0] is not models[0]
        else:
            assert p.fit_round == fit_round and all(a is b for a, b in zip(p.models, models))


def test_chosen_set_has_the_largest_score(s2):
    report = run(s2, config(iterations=3))
    for e in report.log:
        assert e.rhvi == max(e.rhvi_by_set)
        assert e.chosen == report.sets[e.rhvi_by_set.index(e.rhvi)]


def test_runs_are_deterministic(s2):
    a = run(s2, config(iterations=2, seed=7))
    b = run(s2, config(iterations=2, seed=7))
    c = run(s2, config(iterations=2, seed=8))
    assert a.to_json() == b.to_json()
    assert a.to_json() != c.to_json()


def test_threads_do_not_change_results(s2):
    a = run(s2, config(iterations=2, seed=3))
    b = run(s2, config(iterations=2, seed=3, workers=2))
    da, db = json.loads(a.to_json()), json.loads(b.to_json())
    da["config"].pop("workers"), db["config"].pop("workers")
    assert da == db


def test_checkpoint_resume_matches_uninterrupted_run(s2, tmp_path):
    path = str(tmp_path / "ckpt.json")
    straight = run(s2, config(iterations=4, seed=11))
    s = CausalParetoSelect(s2, config(iterations=4, seed=11))
    s.run(iterations=2, checkpoint=path)
    resumed = load_checkpoint(s2, path)
    assert resumed.iteration == 2
    assert resumed.run().to_json() == straight.to_json()
    # the run() entry point picks the checkpoint up as well
    again = run(s2, config(iterations=4, seed=11), checkpoint=path, resume=True)
    assert again.to_json() == straight.to_json()


def test_checkpoint_write_is_atomic(s2, tmp_path):
    s = CausalParetoSelect(s2, config()).initialize()
    path = tmp_path / "ckpt.json"
    save_checkpoint(s, str(path))
    assert path.exists() and not (tmp_path / "ckpt.json.tmp").exists()
    state = json.loads(path.read_text())
    assert state["rng"]["eval_counter"] == 10
    state["version"] = 99
    path.write_text(json.dumps(state))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(s2, str(path))


def test_failed_evaluation_leaves_state_untouched(s2, monkeypatch):
    s = CausalParetoSelect(s2, config()).initialize()
    snapshot = json.dumps(s.state_dict(), sort_keys=True)
    calls = {"n": 0}
    real = solver_mod.interventional_mean

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RuntimeError("simulator crashed")
        return real(*args, **kw)

    monkeypatch.setattr(solver_mod, "interventional_mean", flaky)
    with pytest.raises(RuntimeError):
        s.step()
    assert json.dumps(s.state_dict(), sort_keys=True) == snapshot
    # after the failure the solver continues normally
    monkeypatch.setattr(solver_mod, "interventional_mean", real)
    assert s.step().iteration == 1


def test_selection_is_invariant_to_target_scale(s2, monkeypatch):
    base = run(s2, config(iterations=4, seed=2))
    real = solver_mod.interventional_mean

    def scaled(*args, **kw):
        mu = real(*args, **kw)
        # a power of two keeps every standardised quantity bit-identical
        return MuVector(tuple(4.0 * v for v in mu.means), tuple(4.0 * v for v in mu.std_error), mu.mc_samples)

    monkeypatch.setattr(solver_mod, "interventional_mean", scaled)
    big = run(s2, config(iterations=4, seed=2))
    assert [e.chosen for e in big.log] == [e.chosen for e in base.log]
    np.testing.assert_allclose(big.front.objectives, 4.0 * base.front.objectives, rtol=1e-9)


def test_front_is_non_dominated_subset_of_records(s2):
    report = run(s2, config(iterations=3))
    Y = np.array([r.mu for r in report.records])
    want = Y[brute_nondominated(Y)]
    got = report.front.objectives
    assert sorted(map(tuple, got)) == sorted(map(tuple, want))
    for p in report.front:
        assert any(r.mu == tuple(p.objectives) and frozenset(r.set) == p.set and r.x == p.x for r in report.records)


def test_front_comes_from_the_dominating_set():
    spec = parse_spec(TWO_SETS)
    report = run(spec, config(sets_mode="explicit", sets=[["A"], ["B"]], iterations=4))
    assert {p.set for p in report.front} == {frozenset({"A"})}
    # the solver should also stop spending on the hopeless set
    assert [e.chosen for e in report.log].count(("A",)) >= 3


def test_baseline_uses_all_treatments(s2):
    report = run_baseline(s2, config(iterations=1))
    assert report.sets == [tuple(s2.treatments)] and report.mode == "baseline"


def test_metric_curves_and_budget_lookup(s2):
    ref = np.array([[0.0, 0.0], [1.0, -1.0]])
    report = run(s2, config(iterations=2), reference_front=ref)
    counts, igd = report.metric_curve("igd")
    assert len(counts) == 3 and counts[0] == 5 * 2 + 5 * 3
    assert np.isfinite(igd).all()
    assert metric_at_budget(report, counts[1], "igd") == igd[1]
    assert np.isnan(metric_at_budget(report, counts[0] - 1))
