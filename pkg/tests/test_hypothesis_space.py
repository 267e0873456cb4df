import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfdilp.curriculum import load_bias
from lfdilp.hypothesis import (
    Candidate,
    ConstraintStore,
    EmptyHypothesisSpace,
    InvalidBias,
    PoolRelations,
    enumerate_candidates,
    format_bias,
    generate_clauses,
    parse_bias,
)
from lfdilp.logic import canonical_clause_key, format_clause, parse_program, subsumes

TOY = """
head(f/1).
type(f,(t)).
direction(f,(in)).
body(p/1). body(q/1). body(r/2).
type(p,(t)). type(q,(t)). type(r,(t,t)).
direction(p,(in)). direction(q,(in)). direction(r,(in,out)).
max_vars(2).
max_body(2).
max_clauses(2).
"""


def all_programs_sorted(bias, pool):
    """Brute force: every set of pool clauses within the limits, in the mandated order."""
    keyed = [(canonical_clause_key(c), c) for c in pool]
    out = [()]
    for k in range(1, bias.max_clauses + 1):
        for combo in itertools.combinations(keyed, k):
            if sum(c.size for _, c in combo) <= bias.max_size:
                out.append(tuple(sorted(combo)))
    out.sort(key=lambda ps: (sum(c.size for _, c in ps), len(ps), tuple(k for k, _ in ps)))
    return [tuple(k for k, _ in ps) for ps in out]


def test_bias_round_trip():
    for name in ("target_z.bias", "tower_from.bias", "tower_site.bias"):
        bias = load_bias(name)
        assert parse_bias(format_bias(bias)) == bias


@pytest.mark.parametrize(
    "text, err",
    [
        ("body(p/1). max_body(1).", InvalidBias),
        ("head(f/1). type(f,(t)). body(f/1). type(f,(t)). max_body(1).", InvalidBias),
        ("head(f/2). type(f,(a,b)). body(p/1). type(p,(a)). max_vars(1). max_body(1).", EmptyHypothesisSpace),
        ("head(f/1). type(f,(t)). body(p/1). max_body(1).", InvalidBias),
        ("head(f/1). type(f,(t)). frobnicate(3). max_body(1).", InvalidBias),
    ],
)
def test_invalid_bias_rejected(text, err):
    with pytest.raises(err):
        parse_bias(text)


def test_generated_clauses_respect_limits():
    bias = parse_bias(TOY)
    pool = generate_clauses(bias)
    assert pool
    keys = [canonical_clause_key(c) for c in pool]
    assert len(keys) == len(set(keys))
    for c in pool:
        assert len(c.body) <= bias.max_body
        assert len(c.vars()) <= bias.max_vars
        assert not c.is_recursive()


def test_material_level_clause_is_in_the_pool():
    bias = load_bias("target_z.bias")
    wanted = parse_program("target_z(A,B):- material(A,C), stone(C), z1(B).").clauses[0]
    keys = {canonical_clause_key(c) for c in generate_clauses(bias)}
    assert canonical_clause_key(wanted) in keys
    assert wanted.size == 4


def test_recursive_tower_clause_is_in_the_pool():
    bias = load_bias("tower_from.bias")
    wanted = parse_program(
        "tower_from(A,B):- head(A,C), tail(A,E), target_z(C,B), succ_z(B,D), tower_from(E,D)."
    ).clauses[0]
    keys = {canonical_clause_key(c) for c in generate_clauses(bias)}
    assert canonical_clause_key(wanted) in keys


def test_enumeration_order_matches_brute_force():
    bias = parse_bias(TOY)
    pool = generate_clauses(bias)
    got = [c.keys for c in enumerate_candidates(bias, ConstraintStore(), pool)]
    assert got == all_programs_sorted(bias, pool)


def test_enumeration_order_with_three_clauses():
    bias = parse_bias(TOY.replace("max_clauses(2)", "max_clauses(3)").replace("max_body(2)", "max_body(1)"))
    pool = generate_clauses(bias)
    got = [c.keys for c in enumerate_candidates(bias, ConstraintStore(), pool)]
    assert got == all_programs_sorted(bias, pool)


# ---------------------------------------------------------------------------
# constraints: fast (precomputed relations) and slow (direct subsumption) agree


def _is_generalisation(cand, failed):
    return all(any(subsumes(c, f) for c in cand) for f in failed)


def _is_specialisation(cand, failed):
    if len(cand) != len(failed):
        return False
    return any(
        all(subsumes(failed[i], cand[j]) for i, j in enumerate(perm))
        for perm in itertools.permutations(range(len(cand)))
    )


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_constraint_checks_agree_with_definition(seed):
    rng = random.Random(seed)
    bias = parse_bias(TOY)
    pool = generate_clauses(bias)
    cands = list(enumerate_candidates(bias, ConstraintStore(), pool, include_empty=False))
    fast = ConstraintStore(PoolRelations(pool))
    slow = ConstraintStore()
    gens, specs = [], []
    for _ in range(rng.randint(1, 4)):
        c = rng.choice(cands)
        if rng.random() < 0.5:
            fast.prune_generalisations(c)
            slow.prune_generalisations(c)
            gens.append(c)
        else:
            fast.prune_specialisations(c)
            slow.prune_specialisations(c)
            specs.append(c)
    for c in cands:
        expected = any(_is_generalisation(c.clauses, g.clauses) for g in gens) or any(
            _is_specialisation(c.clauses, s.clauses) for s in specs
        )
        assert fast.is_pruned(c) == expected, format_clause(c.clauses[0])
        assert slow.is_pruned(c) == expected


def test_pruned_programs_never_reappear():
    bias = parse_bias(TOY)
    pool = generate_clauses(bias)
    store = ConstraintStore(PoolRelations(pool))
    seen = []
    for i, cand in enumerate(enumerate_candidates(bias, store, pool, include_empty=False)):
        for failed in seen:
            assert not _is_generalisation(cand.clauses, failed.clauses)
        if i % 3 == 0:
            store.prune_generalisations(cand)
            seen.append(cand)


def test_candidate_identity_ignores_clause_order():
    a, b = parse_program("f(A):- p(A).\nf(A):- q(A).").clauses
    assert Candidate.of([a, b]).id == Candidate.of([b, a]).id
    assert Candidate.of([a, b]).size == 4
