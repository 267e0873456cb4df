import itertools
import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lfdilp.inference import (
    BudgetExhausted,
    ListDomain,
    QueryBudget,
    Universe,
    answers,
    derivable_closure,
    entails,
)
from lfdilp.logic import (
    Atom,
    Clause,
    ParseError,
    Program,
    Var,
    apply,
    apply_atom,
    canonical_clause_key,
    format_program,
    parse_atom,
    parse_program,
    programs_equal_upto_renaming,
    rename_apart,
    resolve_substitution,
    subsumes,
    unify,
)

from oracles import constants_of, naive_fixpoint, random_datalog_program

# ---------------------------------------------------------------------------
# strategies

CONSTS = ["a", "b", "c", "z1", "s22"]
VARS = [Var(n) for n in "XYZW"]


def terms(max_leaves=6):
    leaf = st.sampled_from(CONSTS) | st.sampled_from(VARS)
    return st.recursive(leaf, lambda inner: st.lists(inner, max_size=3).map(tuple), max_leaves=max_leaves)


@st.composite
def atoms(draw, pred=None, arity=None):
    pred = pred or draw(st.sampled_from(["p", "q", "tower_from"]))
    arity = arity if arity is not None else draw(st.integers(0, 3))
    return Atom(pred, [draw(terms()) for _ in range(arity)])


@st.composite
def clauses(draw):
    head = draw(atoms())
    body = draw(st.lists(atoms(), max_size=3))
    return Clause(head, tuple(body))


programs = st.lists(clauses(), max_size=6).map(Program)


# ---------------------------------------------------------------------------
# parser and printer


@given(programs)
def test_print_parse_round_trip(prog):
    text = format_program(prog)
    back = parse_program(text)
    assert format_program(back) == text
    assert programs_equal_upto_renaming(back, prog)


def test_parse_lists_and_comments():
    prog = parse_program(
        "% towers\n"
        "tower_from([b1,b2],z1).\n"
        "tower_site(A):- head(A,C), tail(A,B), goal_anchor(C), tower_site(B).\n"
        "empty([]).\n"
    )
    assert prog.clauses[0].head.args == (("b1", "b2"), "z1")
    assert prog.clauses[2].head.args == ((),)
    assert prog.clauses[1].is_recursive()


@pytest.mark.parametrize(
    "text",
    ["p(a", "p(a) q(b).", "p(A):- .", "P(a).", "p(a,[b).", "p(a)::-q."],
)
def test_parse_errors_carry_position(text):
    with pytest.raises(ParseError) as err:
        parse_program(text)
    assert err.value.line == 1 and err.value.col >= 1


def test_variables_scoped_per_clause():
    prog = parse_program("p(X):- q(X).\nr(X):- s(X).")
    x1 = prog.clauses[0].head.args[0]
    x2 = prog.clauses[1].head.args[0]
    assert x1.name == x2.name == "X"
    assert canonical_clause_key(prog.clauses[0]) != canonical_clause_key(prog.clauses[1])


# ---------------------------------------------------------------------------
# unification


def _ground_domain(a, b):
    consts = sorted({t for x in (a, b) for t in _flat(x.args) if isinstance(t, str)}) + ["fresh"]
    return consts + [()] + [(c,) for c in consts[:2]]


def _flat(args):
    for t in args:
        if isinstance(t, tuple):
            yield from _flat(t)
        else:
            yield t


@settings(max_examples=400, suppress_health_check=[HealthCheck.too_slow])
@given(atoms(pred="p", arity=2), atoms(pred="p", arity=2))
def test_unifier_is_most_general(a, b):
    s = unify(a, b)
    vs = sorted(set(a.vars()) | set(b.vars()))
    if s is not None:
        s = resolve_substitution(s)
        assert apply_atom(a, s) == apply_atom(b, s)
        # idempotent
        assert all(apply(apply(v, s), s) == apply(v, s) for v in vs)
    # every ground unifier found by brute force factors through s
    if len(vs) > 3:
        return
    for vals in itertools.product(_ground_domain(a, b), repeat=len(vs)):
        g = dict(zip(vs, vals))
        if apply_atom(a, g) == apply_atom(b, g):
            assert s is not None, "a unifier exists but none was returned"
            for v in vs:
                assert apply(apply(v, s), g) == g[v]


def test_occurs_check():
    X = Var("X")
    assert unify(Atom("p", (X,)), Atom("p", ((X,),))) is None
    assert unify(Atom("p", (X, X)), Atom("p", ("a", "b"))) is None
    assert unify(Atom("p", (X,)), Atom("q", (X,))) is None


def test_rename_apart_keeps_structure():
    c = parse_program("p(X,Y):- q(X,Z), r(Z,Y).").clauses[0]
    r = rename_apart(c, 7)
    assert canonical_clause_key(r) == canonical_clause_key(c)
    assert not set(r.vars()) & set(c.vars())


# ---------------------------------------------------------------------------
# SLD against a bottom-up oracle


def _sld_model(clauses, preds, constants):
    prog = Program(clauses)
    model = set()
    for pred, arity in preds:
        for args in itertools.product(constants, repeat=arity):
            if entails(prog, Atom(pred, args)):
                model.add((pred,) + args)
    return model


def _preds(clauses):
    return sorted({a.key for c in clauses for a in c.atoms()})


@pytest.mark.parametrize("batch", range(10))
def test_sld_agrees_with_fixpoint_on_random_programs(batch):
    # 10 batches x 55 programs = 550 programs
    rng = random.Random(f"sld-oracle:{batch}")
    for i in range(55):
        clauses = random_datalog_program(
            rng,
            n_preds=rng.randint(1, 3),
            n_edb=rng.randint(1, 2),
            n_consts=rng.randint(2, 5),
            n_clauses=rng.randint(1, 6),
            recursive=(i % 3 == 0),
        )
        consts = constants_of(clauses)
        expected = naive_fixpoint(clauses, consts)
        got = _sld_model(clauses, _preds(clauses), consts)
        assert got == expected, format_program(clauses)


def test_depth_budget_is_reported_not_swallowed():
    prog = parse_program("loop(X):- loop(X).")
    with pytest.raises(BudgetExhausted):
        entails(prog, parse_atom("loop(a)"), QueryBudget(max_depth=20))


def test_left_recursion_with_proof_is_found_first():
    prog = parse_program("nat(z).\nnat(X):- nat(X).")
    assert entails(prog, parse_atom("nat(z)"), QueryBudget(max_depth=10))


def test_answers_in_clause_order():
    prog = parse_program("p(b).\np(a).\np(c).")
    got = [a[Var("X")] for a in answers(prog, Atom("p", (Var("X"),)))]
    assert got == ["b", "a", "c"]


def test_list_builtins():
    prog = Program()
    assert entails(prog, parse_atom("head([a,b],a)"))
    assert entails(prog, parse_atom("tail([a,b],[b])"))
    assert entails(prog, parse_atom("empty([])"))
    assert not entails(prog, parse_atom("empty([a])"))
    assert not entails(prog, parse_atom("head([],a)"))


def test_recursive_list_program():
    prog = parse_program(
        "len1(A):- head(A,B), tail(A,C), empty(C).\n"
        "all_a(A):- empty(A).\n"
        "all_a(A):- head(A,a), tail(A,B), all_a(B).\n"
    )
    assert entails(prog, parse_atom("all_a([a,a,a])"))
    assert not entails(prog, parse_atom("all_a([a,b,a])"))
    assert entails(prog, parse_atom("len1([b])"))


def test_layers_behave_like_union():
    bg = parse_program("e(a,b).\ne(b,c).")
    rules = parse_program("r(X,Y):- e(X,Y).\nr(X,Y):- e(X,Z), r(Z,Y).")
    for x, y in itertools.product("abc", repeat=2):
        atom = Atom("r", (x, y))
        assert entails((bg, rules), atom) == entails(bg.union(rules), atom)


def test_closure_over_universe():
    prog = parse_program("short(A):- head(A,B), tail(A,C), empty(C).")
    u = Universe((ListDomain(("a", "b"), 3, 0),))
    got = derivable_closure(prog, "short", 1, u)
    assert got == {Atom("short", (("a",),)), Atom("short", (("b",),))}
    assert len(ListDomain(("a", "b"), 3, 0)) == 1 + 2 + 2
    assert len(ListDomain(("a", "b"), 2, 1, repeat=True)) == 2 + 4


# ---------------------------------------------------------------------------
# subsumption


def test_subsumption_basic():
    general = parse_program("p(A):- q(A,B).").clauses[0]
    specific = parse_program("p(A):- q(A,B), r(B).").clauses[0]
    assert subsumes(general, specific)
    assert not subsumes(specific, general)


@given(clauses())
def test_clause_subsumes_itself(c):
    assert subsumes(c, c)
