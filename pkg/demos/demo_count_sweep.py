"""How many labelled examples does each target need?

A small version of the sweep the CLI runs: two seeds, a short grid. For
each count, every training task gets that many examples per target,
drawn at random from its own demonstrations.
"""

from lfdilp.harness import ExperimentConfig, sweep_demo_counts

cfg = ExperimentConfig(seeds=[0, 1])
result = sweep_demo_counts(cfg, grid=(10, 20, 40, 80))
print(result.table())
