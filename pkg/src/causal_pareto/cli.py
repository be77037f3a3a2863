"""Command-line entry point ``causal-pareto``.

Exit status: 0 on success, 1 when a run fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import experiment as ex
from .graph import analyze, enumerate_pomis, parse_graph
from .problems import PROBLEMS, UnknownProblem, all_subsets
from .scm import Intervention, SpecError, interventional_mean
from .solver import SolverConfig

MODES = ("mocbo", "baseline", "graph-analyze", "ground-truth")


class UsageError(Exception):
    pass


def _add_problem(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", help=f"built-in problem ({', '.join(PROBLEMS)})")
    p.add_argument("--spec", help="path to an SCM spec file")


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, default=30, help="iterations N (default 30)")
    p.add_argument("--batch-size", type=int, default=5, help="batch size B (default 5)")
    p.add_argument("--init-samples", type=int, default=5, help="initial samples per set K (default 5)")
    p.add_argument("--mc-samples", type=int, default=10_000, help="Monte-Carlo samples per mean (default 10000)")
    p.add_argument("--sets", default="pomis", help="pomis, all, or explicit sets like 'X1,X2;X3'")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (default 10)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--grid", type=int, default=None, help="grid points per dimension of the reference front")
    p.add_argument("--workers", type=int, default=1, help="threads for per-set candidate batches")
    p.add_argument("--checkpoint", action="store_true", help="write a checkpoint after every iteration")
    p.add_argument("--resume", action="store_true", help="continue from existing checkpoints")
    p.add_argument("--no-reference", action="store_true", help="skip GD/IGD against a reference front")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-pareto", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run mo-cbo or the baseline over several seeds")
    _add_problem(p)
    p.add_argument("--mode", default="mocbo", help=f"one of {', '.join(MODES)}")
    _add_solver(p)

    p = sub.add_parser("ground-truth", help="grid ground-truth causal Pareto front as CSV")
    _add_problem(p)
    p.add_argument("--sets", default="pomis", help="pomis, all, or explicit sets like 'X1,X2;X3'")
    p.add_argument("--grid", type=int, default=21, help="grid points per dimension (default 21)")
    p.add_argument("--mc-samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (the CSV is cached there by content hash)")

    p = sub.add_parser("compare", help="compare run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", help="write the table to this CSV file")

    p = sub.add_parser("graph", help="graph tools")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    g = gsub.add_parser("analyze", help="MUCT, interventional border, MIS and POMIS")
    _add_problem(g)
    g.add_argument("--graph", help="path to a file with [variables] and [edges] sections")

    p = sub.add_parser("scm", help="SCM tools")
    ssub = p.add_subparsers(dest="scm_command", required=True)
    s = ssub.add_parser("eval", help="Monte-Carlo interventional mean as JSON")
    _add_problem(s)
    s.add_argument("--do", default="", help="intervention, e.g. 'X2=1.0,X3=0.5'")
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    return parser


def _problem(args):
    if args.problem and args.spec:
        raise UsageError("give either --problem or --spec, not both")
    if not args.problem and not args.spec:
        raise UsageError(f"--problem or --spec is required (problems: {', '.join(PROBLEMS)})")
    if args.problem and args.problem not in PROBLEMS:
        raise UsageError(f"unknown problem {args.problem!r}; valid choices: {', '.join(PROBLEMS)}")
    if args.spec and not Path(args.spec).exists():
        raise UsageError(f"spec file {args.spec} does not exist")
    return ex.load_problem(args.problem, args.spec)


def _sets(spec, text: str):
    if text == "pomis":
        return enumerate_pomis(spec.graph)
    if text == "all":
        return all_subsets(spec)
    sets = []
    for chunk in text.split(";"):
        names = [v.strip() for v in chunk.split(",") if v.strip()]
        unknown = [v for v in names if v not in spec.treatments]
        if unknown:
            raise UsageError(f"not treatments: {', '.join(unknown)}")
        sets.append(frozenset(names))
    return sets


def _out(args, default_name: str) -> Path:
    return Path(args.out) if args.out else ex.output_root() / default_name


def cmd_run(args) -> int:
    if args.mode not in MODES:
        raise UsageError(f"unknown mode {args.mode!r}; valid choices: {', '.join(MODES)}")
    if args.mode == "graph-analyze":
        name, spec = _problem(args)
        print(json.dumps(analyze(spec.graph), indent=1))
        return 0
    if args.mode == "ground-truth":
        args.grid = args.grid or 21
        return cmd_ground_truth(args)
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    name, spec = _problem(args)
    sets = _sets(spec, args.sets)
    try:
        config = SolverConfig(
            sets_mode="explicit",
            sets=[sorted(s) for s in sets],
            k_init=args.init_samples,
            batch_size=args.batch_size,
            iterations=args.iters,
            mc_samples=args.mc_samples,
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out(args, f"{name}_{args.mode}")
    out.mkdir(parents=True, exist_ok=True)
    reference, ref_info = None, None
    if not args.no_reference:
        reference, ref_info = ex.reference_front(spec, grid=args.grid, cache_dir=out.parent / "cache")
    t0 = time.perf_counter()
    reports = ex.run_seeds(
        spec,
        config,
        args.mode,
        args.seeds,
        args.seed,
        reference,
        name,
        checkpoint_dir=out / "checkpoints" if args.checkpoint or args.resume else None,
        resume=args.resume,
    )
    meta = {
        "problem": name,
        "mode": args.mode,
        "n_seeds": args.seeds,
        "master_seed": args.seed,
        "seeds": [ex.seed_stream(args.seed, k) for k in range(args.seeds)],
        "config": config.to_dict(),
        "reference_front": ref_info,
    }
    ex.write_run_dir(out, reports, meta)
    rows = ex.aggregate(reports)
    print(
        f"{name} {args.mode}: {args.seeds} seeds in {time.perf_counter() - t0:.1f}s; "
        f"final median GD {rows[-1]['gd_median']:.4g}, IGD {rows[-1]['igd_median']:.4g} -> {out}"
    )
    return 0


def cmd_ground_truth(args) -> int:
    name, spec = _problem(args)
    sets = _sets(spec, args.sets)
    out = _out(args, f"{name}_ground_truth")
    try:
        front, info = ex.reference_front(spec, sets, args.grid, args.mc_samples, args.seed, cache_dir=out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    path = out / f"front_{info['hash']}.csv"
    print(f"{len(front)} front points ({'cached' if info['cached'] else 'computed'}) -> {path}")
    return 0


def cmd_compare(args) -> int:
    for d in args.run_dirs:
        if not (Path(d) / "meta.json").exists():
            raise UsageError(f"{d} is not a run directory")
    table = ex.compare(args.run_dirs)
    text = ex.compare_to_csv(table)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_graph(args) -> int:
    if args.graph:
        if not Path(args.graph).exists():
            raise UsageError(f"graph file {args.graph} does not exist")
        graph = parse_graph(Path(args.graph).read_text())
    else:
        graph = _problem(args)[1].graph
    print(json.dumps(analyze(graph), indent=1))
    return 0


def cmd_scm(args) -> int:
    name, spec = _problem(args)
    try:
        iv = Intervention.parse(args.do) if args.do.strip() else Intervention()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mu = interventional_mean(spec, iv, args.n, args.seed)
    print(json.dumps(mu.to_dict(spec.targets), indent=1))
    return 0


COMMANDS = {
    "run": cmd_run,
    "ground-truth": cmd_ground_truth,
    "compare": cmd_compare,
    "graph": cmd_graph,
    "scm": cmd_scm,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"causal-pareto: error: {exc}", file=sys.stderr)
        return 2
    except (UnknownProblem, SpecError) as exc:
        print(f"causal-pareto: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"causal-pareto: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
