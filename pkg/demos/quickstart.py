"""Walk through one problem end to end.

Prints the graph analysis for synthetic2, one Monte-Carlo evaluation, and a
short optimisation run with its causal Pareto front.  Takes about ten seconds.

    python3 demos/quickstart.py
"""

import json

from causal_pareto.graph import analyze
from causal_pareto.problems import builtin_problem
from causal_pareto.scm import Intervention, interventional_mean
from causal_pareto.solver import SolverConfig, run

spec = builtin_problem("synthetic2")

# Which intervention sets are worth searching at all?
print(json.dumps(analyze(spec.graph), indent=1))

# One noisy objective evaluation: E[Y | do(X2=1, X3=0.5)]
mu = interventional_mean(spec, Intervention.parse("X2=1.0,X3=0.5"), n=10_000, seed=7)
print("means", mu.means, "std errors", mu.std_error)

# A short run over the POMIS family
config = SolverConfig(iterations=5, batch_size=3, k_init=4, mc_samples=2000, seed=1)
report = run(spec, config, problem="synthetic2")
print(f"{report.evaluations} evaluations, {report.intervention_count} intervened variables")
for entry in report.log:
    print(f"iter {entry.iteration}: chose {entry.chosen} (RHVI {entry.rhvi:.3g})")
print("causal Pareto front:")
for p in sorted(report.front, key=lambda p: p.objectives[0]):
    values = ", ".join(f"{v}={x:.2f}" for v, x in zip(sorted(p.set), p.x))
    print(f"  do({values}) -> {tuple(round(v, 3) for v in p.objectives)}")
