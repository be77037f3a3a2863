import json

import numpy as np
import pytest

from causal_pareto import experiment as ex
from causal_pareto.cli import main
from causal_pareto.pareto import FrontPoint, ParetoArchive
from causal_pareto.problems import builtin_problem
from causal_pareto.solver import SolverConfig

FAST_RUN = ["--iters", "2", "--batch-size", "2", "--init-samples", "3", "--mc-samples", "300", "--seeds", "2", "--grid", "6"]


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(ex.OUT_ENV, str(tmp_path))
    return tmp_path


def test_unknown_problem_is_usage_error(capsys):
    assert main(["scm", "eval", "--problem", "synthetic9"]) == 2
    err = capsys.readouterr().err
    assert "synthetic1" in err and "health" in err


def test_missing_problem_and_bad_mode(capsys):
    assert main(["graph", "analyze"]) == 2
    assert main(["run", "--problem", "synthetic1", "--mode", "greedy"]) == 2
    assert "mocbo" in capsys.readouterr().err


def test_bad_intervention_is_usage_error(capsys):
    assert main(["scm", "eval", "--problem", "synthetic1", "--do", "X1=abc"]) == 2


def test_runtime_failure_exits_one(capsys):
    # X1 = 9 lies outside its domain: a valid request that the simulator refuses
    assert main(["scm", "eval", "--problem", "synthetic1", "--do", "X1=9"]) == 1


def test_graph_analyze_json(capsys):
    assert main(["graph", "analyze", "--problem", "synthetic2"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["pomis"] == [["X2", "X3"], ["X1", "X2", "X3"]]
    assert info["interventional_border"] == ["X2", "X3"]


def test_graph_analyze_from_file(tmp_path, capsys):
    path = tmp_path / "g.txt"
    path.write_text("[variables]\nA: treatment\nB: treatment\nY: target\n[edges]\nA -> B\nB -> Y\n")
    assert main(["graph", "analyze", "--graph", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["pomis"] == [["B"]]


def test_scm_eval_json(capsys):
    assert main(["scm", "eval", "--problem", "synthetic2", "--do", "X2=1,X3=2", "--n", "2000", "--seed", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) >= {"means", "std_error"}
    assert len(out["means"]) == 2


def test_ground_truth_cache_is_stable(out_root, capsys):
    args = ["ground-truth", "--problem", "synthetic1", "--grid", "5", "--mc-samples", "200"]
    assert main(args) == 0
    assert "computed" in capsys.readouterr().out
    (csv_path,) = (out_root / "synthetic1_ground_truth").glob("front_*.csv")
    first = csv_path.read_bytes()
    assert main(args) == 0
    assert "cached" in capsys.readouterr().out
    assert csv_path.read_bytes() == first


def test_ground_truth_guard_exits_one(capsys):
    assert main(["ground-truth", "--problem", "synthetic1", "--sets", "all", "--grid", "60"]) == 1


def test_front_csv_round_trip():
    front = ParetoArchive(
        [FrontPoint((0.1, 2.0), frozenset({"X2", "X3"}), (1.0, 0.25)), FrontPoint((1 / 3, -1.5), frozenset(), ())]
    )
    again, targets = ex.front_from_csv(ex.front_to_csv(front, ["Y1", "Y2"]))
    assert targets == ["Y1", "Y2"] and again == front


def test_aggregate_csv_round_trip():
    rows = [
        {"iteration": 0, "intervention_count": 10.0, "gd_median": 0.1, "gd_std": 1 / 3,
         "igd_median": 0.2, "igd_std": 0.0, "n_seeds": 3}
    ]
    assert ex.aggregate_from_csv(ex.aggregate_to_csv(rows)) == rows


def test_seed_streams_are_prefix_stable():
    assert [ex.seed_stream(0, k) for k in range(3)] == [ex.seed_stream(0, k) for k in range(5)][:3]
    assert ex.seed_stream(0, 0) != ex.seed_stream(1, 0)


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    dirs = {}
    for mode in ("mocbo", "baseline"):
        out = root / mode
        assert main(["run", "--problem", "synthetic2", "--mode", mode, *FAST_RUN, "--out", str(out)]) == 0
        dirs[mode] = out
    return dirs


def test_run_directory_layout(run_dirs):
    out = run_dirs["mocbo"]
    names = {p.name for p in out.iterdir()}
    assert {"meta.json", "aggregate.csv", "seed_0.json", "seed_1.json", "front_seed_0.csv"} <= names
    meta = json.loads((out / "meta.json").read_text())
    assert meta["n_seeds"] == 2 and meta["reference_front"]["grid"] == 6


def test_aggregate_recomputes_from_seed_files(run_dirs):
    meta, reports, rows = ex.load_run_dir(run_dirs["mocbo"])
    again = ex.aggregate(reports)
    assert len(again) == len(rows) == 3
    for a, b in zip(again, rows):
        for k in a:
            assert abs(a[k] - b[k]) <= 1e-12
    # the medians are those of the per-seed curves
    igd0 = [r.metric_curve("igd")[1][-1] for r in reports]
    assert abs(rows[-1]["igd_median"] - float(np.median(igd0))) <= 1e-12


def test_seed_front_csv_matches_report(run_dirs):
    _, reports, _ = ex.load_run_dir(run_dirs["baseline"])
    front, _ = ex.front_from_csv((run_dirs["baseline"] / "front_seed_1.csv").read_text())
    assert front == reports[1].front


def test_compare_identical_dirs_has_no_deltas(run_dirs):
    a, b = ex.compare([run_dirs["mocbo"], run_dirs["mocbo"]])
    for key in ("final_gd", "final_igd", "gd_at_budget", "igd_at_budget", "dominates_first", "dominated_by_first"):
        assert a[key] == b[key]
    assert b["dominates_first"] == 0.0


def test_compare_cli_writes_table(run_dirs, tmp_path, capsys):
    target = tmp_path / "table.csv"
    assert main(["compare", str(run_dirs["mocbo"]), str(run_dirs["baseline"]), "--out", str(target)]) == 0
    lines = target.read_text().splitlines()
    assert lines[0].startswith("run,mode,problem") and len(lines) == 3
    # budgets are matched on intervened variables, not on evaluations
    table = ex.compare([run_dirs["mocbo"], run_dirs["baseline"]])
    assert table[0]["budget"] == table[1]["budget"]


def test_compare_rejects_different_problems(run_dirs, tmp_path):
    spec = builtin_problem("synthetic1")
    cfg = SolverConfig(iterations=0, k_init=2, mc_samples=100, pop_size=10, n_gen=2)
    reports = ex.run_seeds(spec, cfg, n_seeds=1, problem="synthetic1")
    other = ex.write_run_dir(tmp_path / "s1", reports, {"problem": "synthetic1", "mode": "mocbo", "n_seeds": 1})
    with pytest.raises(ValueError, match="different problems"):
        ex.compare([run_dirs["mocbo"], other])


def test_compare_rejects_non_run_dir(tmp_path, capsys):
    assert main(["compare", str(tmp_path), str(tmp_path)]) == 2


def test_resume_reproduces_run(tmp_path, capsys):
    args = ["run", "--problem", "synthetic1", *FAST_RUN, "--no-reference"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--checkpoint", "--out", str(tmp_path / "b")]) == 0
    assert main([*args, "--resume", "--out", str(tmp_path / "b")]) == 0
    for k in range(2):
        assert (tmp_path / "a" / f"seed_{k}.json").read_bytes() == (tmp_path / "b" / f"seed_{k}.json").read_bytes()
