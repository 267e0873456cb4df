"""From demonstrations to a plan on a harder, held-out task.

One seed, one training task. We extract labelled examples from the
demonstrations, learn the three rule sets in order, then plan the test
task: taller towers, a wood block never seen in training, and sites that
were blocked during training.
"""

import sys

from lfdilp.blockworld import ground_truth_program
from lfdilp.curriculum import run_curriculum
from lfdilp.harness import (
    OPERATING_COUNTS,
    ExperimentConfig,
    evaluate_all,
    learning_background,
    limit_examples,
    prepare_seed,
    task_examples,
)
from lfdilp.logic import format_program
from lfdilp.planner import plan

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = ExperimentConfig(seeds=[seed])
hgt = ground_truth_program()
targets, injections = cfg.targets()

data = prepare_seed(seed, cfg, hgt)
task = data.train[1]
print(f"training task {task.id}: {len(data.demos[task.id])} demonstrations, goal heights {task.goal.heights}")

pools = task_examples(task, data.demos[task.id], targets, cfg, seed)
examples, _ = limit_examples(pools, OPERATING_COUNTS, seed, task.id)
for name, (p, n) in examples.items():
    print(f"  {name}: {len(p)} positive, {len(n)} negative")

result = run_curriculum(learning_background(task, examples, data.blocks), targets, (), injections, cfg.limits, examples)
for name, lr in result.per_target.items():
    print(f"\n{name} ({lr.status}, {lr.tested_count} candidates, {lr.elapsed:.1f}s)")
    print(format_program(lr.hypothesis), end="")

test = data.test
print(f"\nheld-out task {test.id}: goal heights {test.goal.heights}, blocked {sorted(test.initial.blocked)}")
rules = result.final_hypothesis.union(injections["tower_from"])
p = plan(test, rules)
if p is None:
    print("no plan under the learned rules")
else:
    for site, blocks in p.towers:
        print(f"  {site}: {' '.join(blocks)}")
goal, match = evaluate_all(result.final_hypothesis, hgt, test, data.blocks)
print(f"goal satisfied: {goal}, rules match ground truth: {match}")
