"""Learn a recursive rule over lists from a handful of labelled atoms.

The target f/1 should hold for lists whose elements all have property p.
We give four positive and three negative lists and let the learner search
the space allowed by a small bias file.
"""

from lfdilp import learn_target, parse_program
from lfdilp.hypothesis import parse_bias
from lfdilp.logic import format_program, parse_atom

bias = parse_bias("""
head(f/1). type(f,(list)). direction(f,(in)).
body(head/2). body(tail/2). body(empty/1). body(p/1).
type(head,(list,e)). type(tail,(list,list)). type(empty,(list)). type(p,(e)).
direction(head,(in,out)). direction(tail,(in,out)). direction(empty,(in)). direction(p,(in)).
enable_recursion. max_vars(3). max_body(4). max_clauses(2).
""")

background = parse_program("p(a).\np(b).\n")
pos = [parse_atom(s) for s in ("f([])", "f([a])", "f([b,a])", "f([a,b,a])")]
neg = [parse_atom(s) for s in ("f([c])", "f([a,c])", "f([c,b,a])")]

result = learn_target(background, bias, pos, neg)
print("status:", result.status)
print(f"tested {result.tested_count} candidates, pruned {result.pruned_count}")
print(format_program(result.hypothesis))

# the same search without pruning visits more programs but finds one of the same size
plain = learn_target(background, bias, pos, neg, prune=False)
print(f"without pruning: tested {plain.tested_count}")
