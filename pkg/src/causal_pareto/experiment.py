"""Multi-seed experiment runs, reference fronts and on-disk artifacts.

A run directory holds::

    meta.json             problem, mode, config, seeds, reference-front info
    seed_<k>.json         full RunReport of seed k
    front_seed_<k>.csv    causal front of seed k
    aggregate.csv         per-iteration median/std of GD and IGD across seeds
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import enumerate_pomis
from .pareto import FrontPoint, ParetoArchive
from .problems import PROBLEMS, UnknownProblem, all_subsets, builtin_problem, ground_truth_front
from .scm import ScmSpec, parse_spec, serialize_spec
from .solver import RunReport, SolverConfig, metric_at_budget, run, run_baseline

OUT_ENV = "CAUSAL_PARETO_OUT"
DEFAULT_OUT = "causal_pareto_runs"
MODES = ("mocbo", "baseline")
AGGREGATE_COLUMNS = (
    "iteration",
    "intervention_count",
    "gd_median",
    "gd_std",
    "igd_median",
    "igd_std",
    "n_seeds",
)


def output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def load_problem(problem: str | None = None, spec_path: str | None = None) -> tuple[str, ScmSpec]:
    if spec_path:
        text = Path(spec_path).read_text()
        return Path(spec_path).stem, parse_spec(text)
    if problem is None:
        raise ValueError("either a problem name or a spec path is required")
    return problem, builtin_problem(problem)


def seed_stream(master: int, k: int) -> int:
    """Seed of the ``k``-th run, independent of how many runs there are."""
    return int(np.random.SeedSequence([master, k]).generate_state(1)[0])


def default_grid(spec: ScmSpec, sets) -> int:
    d = max((len(s) for s in sets), default=0)
    return {0: 2, 1: 201, 2: 51, 3: 31}.get(d, 13)


# -- reference fronts -------------------------------------------------------


def _front_hash(spec: ScmSpec, sets, grid: int, n_mc: int, seed: int) -> str:
    h = hashlib.sha256()
    h.update(serialize_spec(spec).encode())
    h.update(json.dumps([sorted(s) for s in sets]).encode())
    h.update(f"{grid}|{n_mc}|{seed}".encode())
    return h.hexdigest()[:16]


def front_to_csv(front: ParetoArchive, targets: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "values", *targets])
    for p in front:
        w.writerow(
            [";".join(sorted(p.set)), ";".join(repr(float(v)) for v in p.x)]
            + [repr(float(v)) for v in p.objectives]
        )
    return buf.getvalue()


def front_from_csv(text: str) -> tuple[ParetoArchive, list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    points = []
    for row in body:
        s = frozenset(v for v in row[0].split(";") if v)
        x = tuple(float(v) for v in row[1].split(";") if v)
        points.append(FrontPoint(tuple(float(v) for v in row[2:]), s, x))
    return ParetoArchive(points), header[2:]


def reference_front(
    spec: ScmSpec,
    sets=None,
    grid: int | None = None,
    n_mc: int = 10_000,
    seed: int = 12345,
    cache_dir: str | Path | None = None,
) -> tuple[ParetoArchive, dict]:
    """Grid ground-truth front, cached on disk by content hash.

    ``sets`` defaults to the POMIS family.  Returns the front and a small
    description (grid, n_mc, seed, hash) that is stored alongside metrics.
    """
    sets = enumerate_pomis(spec.graph) if sets is None else list(sets)
    grid = default_grid(spec, sets) if grid is None else grid
    key = _front_hash(spec, sets, grid, n_mc, seed)
    info = {"grid": grid, "n_mc": n_mc, "seed": seed, "hash": key, "sets": [sorted(s) for s in sets]}
    path = Path(cache_dir) / f"front_{key}.csv" if cache_dir is not None else None
    if path is not None and path.exists():
        front, _ = front_from_csv(path.read_text())
        info["cached"] = True
        return front, info
    front = ground_truth_front(spec, sets, grid, n_mc, seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(front_to_csv(front, spec.targets))
        os.replace(tmp, path)
    info["cached"] = False
    return front, info


# -- runs -------------------------------------------------------------------


def run_seeds(
    spec: ScmSpec,
    config: SolverConfig,
    mode: str = "mocbo",
    n_seeds: int = 10,
    master_seed: int = 0,
    reference=None,
    problem: str = "",
    checkpoint_dir: str | Path | None = None,
    resume: bool = False,
) -> list[RunReport]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if n_seeds < 1:
        raise ValueError("at least one seed is required")
    runner = run if mode == "mocbo" else run_baseline
    reports = []
    for k in range(n_seeds):
        cfg = replace(config, seed=seed_stream(master_seed, k))
        ckpt = None
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            ckpt = str(Path(checkpoint_dir) / f"checkpoint_seed_{k}.json")
        reports.append(runner(spec, cfg, reference, problem, checkpoint=ckpt, resume=resume))
    return reports


def aggregate(reports: Sequence[RunReport]) -> list[dict]:
    """Per-iteration median and standard deviation of GD/IGD across seeds.

    Row 0 is the initial design.  ``intervention_count`` is the median
    cumulative count of intervened variables at that iteration.
    """
    rows = []
    curves = [(r.metric_curve("gd"), r.metric_curve("igd")) for r in reports]
    length = min(len(c[0][0]) for c in curves)
    for i in range(length):
        counts = np.array([c[0][0][i] for c in curves])
        g = np.array([c[0][1][i] for c in curves])
        ig = np.array([c[1][1][i] for c in curves])
        rows.append(
            {
                "iteration": i,
                "intervention_count": float(np.median(counts)),
                "gd_median": float(np.median(g)),
                "gd_std": float(np.std(g)),
                "igd_median": float(np.median(ig)),
                "igd_std": float(np.std(ig)),
                "n_seeds": len(reports),
            }
        )
    return rows


def aggregate_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for r in rows:
        w.writerow([r["iteration"]] + [repr(float(r[c])) for c in AGGREGATE_COLUMNS[1:-1]] + [r["n_seeds"]])
    return buf.getvalue()


def aggregate_from_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        d = {c: float(row[c]) for c in AGGREGATE_COLUMNS[1:-1]}
        d["iteration"] = int(row["iteration"])
        d["n_seeds"] = int(row["n_seeds"])
        rows.append(d)
    return rows


def write_run_dir(
    out: str | Path, reports: Sequence[RunReport], meta: dict
) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for k, r in enumerate(reports):
        (out / f"seed_{k}.json").write_text(r.to_json())
        (out / f"front_seed_{k}.csv").write_text(front_to_csv(r.front, r.targets))
    (out / "aggregate.csv").write_text(aggregate_to_csv(aggregate(reports)))
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return out


def load_run_dir(path: str | Path) -> tuple[dict, list[RunReport], list[dict]]:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    reports = [
        RunReport.from_dict(json.loads((path / f"seed_{k}.json").read_text())) for k in range(meta["n_seeds"])
    ]
    rows = aggregate_from_csv((path / "aggregate.csv").read_text())
    return meta, reports, rows


# -- comparison ---------------------------------------------------------------


def dominated_fraction(front_a, front_b) -> float:
    """Fraction of points of ``front_b`` Pareto-dominated by some point of ``front_a``."""
    A = front_a.objectives if isinstance(front_a, ParetoArchive) else np.asarray(front_a, dtype=float)
    B = front_b.objectives if isinstance(front_b, ParetoArchive) else np.asarray(front_b, dtype=float)
    if len(A) == 0 or len(B) == 0:
        return 0.0
    le = (A[:, None, :] <= B[None, :, :]).all(axis=2)
    lt = (A[:, None, :] < B[None, :, :]).any(axis=2)
    return float((le & lt).any(axis=0).mean())


def compare(run_dirs: Sequence[str | Path]) -> list[dict]:
    """Side-by-side summary of several run directories on the same problem.

    For every directory: median final GD/IGD, median GD/IGD at the smallest
    final intervention budget shared by all directories, and the median over
    seeds of the fraction of the first directory's front points that this
    directory's front dominates (and vice versa).
    """
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    loaded = [load_run_dir(d) for d in run_dirs]
    problems = {m["problem"] for m, _, _ in loaded}
    if len(problems) != 1:
        raise ValueError(f"run directories are for different problems: {sorted(problems)}")
    budget = min(
        min(r.intervention_count for r in reports) for _, reports, _ in loaded
    )
    base_meta, base_reports, _ = loaded[0]
    table = []
    for d, (meta, reports, rows) in zip(run_dirs, loaded):
        final = rows[-1]
        n = min(len(reports), len(base_reports))
        dom_first = [dominated_fraction(reports[k].front, base_reports[k].front) for k in range(n)]
        dom_by_first = [dominated_fraction(base_reports[k].front, reports[k].front) for k in range(n)]
        table.append(
            {
                "run": str(d),
                "mode": meta["mode"],
                "problem": meta["problem"],
                "final_intervention_count": final["intervention_count"],
                "final_gd": final["gd_median"],
                "final_igd": final["igd_median"],
                "budget": float(budget),
                "gd_at_budget": float(np.median([metric_at_budget(r, budget, "gd") for r in reports])),
                "igd_at_budget": float(np.median([metric_at_budget(r, budget, "igd") for r in reports])),
                "dominates_first": float(np.median(dom_first)),
                "dominated_by_first": float(np.median(dom_by_first)),
            }
        )
    return table


COMPARE_COLUMNS = (
    "run",
    "mode",
    "problem",
    "final_intervention_count",
    "final_gd",
    "final_igd",
    "budget",
    "gd_at_budget",
    "igd_at_budget",
    "dominates_first",
    "dominated_by_first",
)


def compare_to_csv(table: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for row in table:
        w.writerow([row[c] if isinstance(row[c], str) else repr(row[c]) for c in COMPARE_COLUMNS])
    return buf.getvalue()


__all__ = [
    "AGGREGATE_COLUMNS",
    "MODES",
    "OUT_ENV",
    "PROBLEMS",
    "UnknownProblem",
    "aggregate",
    "aggregate_from_csv",
    "aggregate_to_csv",
    "all_subsets",
    "compare",
    "compare_to_csv",
    "dominated_fraction",
    "front_from_csv",
    "front_to_csv",
    "load_problem",
    "load_run_dir",
    "output_root",
    "reference_front",
    "run_seeds",
    "seed_stream",
    "write_run_dir",
]
