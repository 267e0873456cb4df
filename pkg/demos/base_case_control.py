"""Why the recursive clause matters.

Keep the level rules (including wood at z4) but give tower_from only its
base case. Single-block towers still plan; anything taller does not.
"""

from lfdilp.blockworld import Goal, Task, ground_truth_program, sample_experiment
from lfdilp.logic import parse_program
from lfdilp.planner import plan

hgt = ground_truth_program()
base = parse_program("tower_from(L,Z):- head(L,H), target_z(H,Z), tail(L,R), empty(R).")
rules = hgt.without("tower_from").union(base)

_, test = sample_experiment(0)
for heights in [(1,), (1, 1, 1), (2,), (3,), (4,), (4, 3, 2)]:
    t = Task("probe", test.objects, test.initial, Goal(heights))
    full = plan(t, hgt) is not None
    cut = plan(t, rules) is not None
    print(f"heights {heights}: full rules {full}, base case only {cut}")
