"""SLD resolution over definite programs with a depth/step budget.

``head/2``, ``tail/2`` and ``empty/1`` are evaluated natively on proper lists
rather than looked up as clauses. A list builtin whose list argument is still
unbound is delayed until something binds it; if only delayed goals remain the
branch fails.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from .logic import Atom, Clause, Program, Term, Var

BUILTINS = {("head", 2), ("tail", 2), ("empty", 1)}


class BudgetExhausted(RuntimeError):
    """The search hit its depth or step limit before finding a proof."""


@dataclass(frozen=True)
class QueryBudget:
    max_depth: int = 100
    max_steps: int = 100_000

    def __post_init__(self):
        if self.max_depth <= 0 or self.max_steps <= 0:
            raise ValueError("budget limits must be strictly positive")


DEFAULT_BUDGET = QueryBudget()

Programs = Union[Program, Sequence[Program]]


def _layers(program: Programs) -> tuple[Program, ...]:
    if isinstance(program, Program):
        return (program,)
    return tuple(program)


def _fact_index(program: Program) -> dict:
    """First-argument index over predicates defined purely by ground facts."""
    idx = getattr(program, "_fact_idx", None)
    if idx is None:
        idx = {}
        for key in program.index:
            clauses = program.clauses_for(key)
            if all(c.is_fact and c.is_ground() for c in clauses):
                sub: dict = {}
                for c in clauses:
                    sub.setdefault(c.head.args[0], []).append(c)
                idx[key] = sub
        program._fact_idx = idx
    return idx


class _Node:
    __slots__ = ("atom", "depth", "next")

    def __init__(self, atom, depth, next):
        self.atom = atom
        self.depth = depth
        self.next = next


class Solver:
    """Depth-first, clause-order SLD resolution with a mutable trail."""

    def __init__(self, program: Programs, budget: QueryBudget = DEFAULT_BUDGET):
        self.layers = _layers(program)
        self.budget = budget
        self.bindings: dict[Var, Term] = {}
        self.trail: list[Var] = []
        self.steps = 0
        self.depth_hit = False
        self._fresh = itertools.count(1)

    # -- bindings -----------------------------------------------------------

    def walk(self, t):
        b = self.bindings
        while t.__class__ is Var and t in b:
            t = b[t]
        return t

    def resolve(self, t):
        t = self.walk(t)
        if t.__class__ is tuple:
            return tuple(self.resolve(x) for x in t)
        return t

    def _occurs(self, v, t):
        t = self.walk(t)
        if t == v:
            return True
        if t.__class__ is tuple:
            return any(self._occurs(v, x) for x in t)
        return False

    def unify(self, a, b) -> bool:
        a = self.walk(a)
        b = self.walk(b)
        if a.__class__ is Var:
            if a == b:
                return True
            if b.__class__ is tuple and self._occurs(a, b):
                return False
            self.bindings[a] = b
            self.trail.append(a)
            return True
        if b.__class__ is Var:
            if a.__class__ is tuple and self._occurs(b, a):
                return False
            self.bindings[b] = a
            self.trail.append(b)
            return True
        if a.__class__ is tuple:
            if b.__class__ is not tuple or len(a) != len(b):
                return False
            return all(self.unify(x, y) for x, y in zip(a, b))
        return a == b

    def undo(self, mark: int):
        trail, b = self.trail, self.bindings
        while len(trail) > mark:
            del b[trail.pop()]

    # -- clause access ------------------------------------------------------

    def _candidates(self, atom: Atom) -> list[Clause]:
        key = (atom.pred, len(atom.args))
        first = self.walk(atom.args[0]) if atom.args else None
        bound = first is not None and first.__class__ is not Var
        out: list[Clause] = []
        for prog in self.layers:
            if bound:
                sub = _fact_index(prog).get(key)
                if sub is not None:
                    out.extend(sub.get(first, ()))
                    continue
            out.extend(prog.clauses_for(key))
        return out

    def _rename(self, c: Clause):
        n = next(self._fresh)
        m = {v: Var(v.name, n) for v in c.var_tuple}

        def sub(t):
            if t.__class__ is Var:
                return m[t]
            if t.__class__ is tuple:
                return tuple(sub(x) for x in t)
            return t

        head = Atom(c.head.pred, [sub(a) for a in c.head.args])
        body = [Atom(b.pred, [sub(a) for a in b.args]) for b in c.body]
        return head, body

    # -- builtins -----------------------------------------------------------

    def _builtin_ready(self, atom: Atom) -> bool:
        return self.walk(atom.args[0]).__class__ is not Var or atom.pred == "empty"

    def _builtin(self, atom: Atom) -> bool:
        lst = self.walk(atom.args[0])
        if atom.pred == "empty":
            return self.unify(lst, ())
        if lst.__class__ is not tuple or not lst:
            return False
        if atom.pred == "head":
            return self.unify(atom.args[1], lst[0])
        return self.unify(atom.args[1], lst[1:])

    # -- search -------------------------------------------------------------

    def _select(self, node: _Node):
        """Pick the first goal that is not a delayed list builtin."""
        if (node.atom.pred, len(node.atom.args)) not in BUILTINS or self._builtin_ready(node.atom):
            return node.atom, node.depth, node.next
        skipped = []
        cur = node
        while cur is not None:
            a = cur.atom
            if (a.pred, len(a.args)) not in BUILTINS or self._builtin_ready(a):
                rest = cur.next
                for s_atom, s_depth in reversed(skipped):
                    rest = _Node(s_atom, s_depth, rest)
                return a, cur.depth, rest
            skipped.append((a, cur.depth))
            cur = cur.next
        return None

    def solve(self, goals: Sequence[Atom]) -> Iterator[None]:
        """Yield once per proof of the conjunction ``goals``.

        Bindings are live while the caller holds a solution; read them with
        :meth:`resolve` before advancing the iterator.
        """
        node = None
        for g in reversed(goals):
            node = _Node(g, 0, node)
        max_depth = self.budget.max_depth
        max_steps = self.budget.max_steps
        stack: list[list] = []
        while True:
            if node is None:
                yield None
                node = self._next_alternative(stack)
                continue
            if node is _FAIL:
                return
            self.steps += 1
            if self.steps > max_steps:
                raise BudgetExhausted(f"step limit {max_steps} exceeded")
            sel = self._select(node)
            if sel is None:
                node = self._next_alternative(stack)
                continue
            atom, depth, rest = sel
            if (atom.pred, len(atom.args)) in BUILTINS:
                mark = len(self.trail)
                if self._builtin(atom):
                    # deterministic: a choicepoint with no alternatives, for undo
                    stack.append([iter(()), atom, depth, rest, mark])
                    node = rest
                else:
                    self.undo(mark)
                    node = self._next_alternative(stack)
                continue
            if depth >= max_depth:
                self.depth_hit = True
                node = self._next_alternative(stack)
                continue
            stack.append([iter(self._candidates(atom)), atom, depth, rest, len(self.trail)])
            node = self._next_alternative(stack)

    def _next_alternative(self, stack):
        while stack:
            cp = stack[-1]
            alts, atom, depth, rest, mark = cp
            self.undo(mark)
            for clause in alts:
                if not clause.var_tuple:
                    if self._unify_args(atom.args, clause.head.args):
                        node = rest
                        for b in reversed(clause.body):
                            node = _Node(b, depth + 1, node)
                        return node
                    self.undo(mark)
                    continue
                head, body = self._rename(clause)
                if self._unify_args(atom.args, head.args):
                    node = rest
                    for b in reversed(body):
                        node = _Node(b, depth + 1, node)
                    return node
                self.undo(mark)
            stack.pop()
        return _FAIL

    def _unify_args(self, xs, ys) -> bool:
        for x, y in zip(xs, ys):
            if not self.unify(x, y):
                return False
        return True


_FAIL = object()


def entails(program: Programs, goal: Atom, budget: QueryBudget = DEFAULT_BUDGET) -> bool:
    """Whether ``goal`` (ground) is derivable from ``program`` within ``budget``.

    Raises :class:`BudgetExhausted` when no proof was found but the search was
    cut short, so that "unknown" is never confused with "false".
    """
    solver = Solver(program, budget)
    for _ in solver.solve([goal]):
        return True
    if solver.depth_hit:
        raise BudgetExhausted(f"depth limit {budget.max_depth} reached")
    return False


def answers(
    program: Programs,
    goal: Atom,
    budget: QueryBudget = DEFAULT_BUDGET,
    limit: int | None = None,
) -> list[dict[Var, Term]]:
    """Answer substitutions for ``goal`` in depth-first clause order."""
    solver = Solver(program, budget)
    goal_vars = list(dict.fromkeys(goal.vars()))
    out: list[dict[Var, Term]] = []
    if limit is not None and limit <= 0:
        return out
    for _ in solver.solve([goal]):
        out.append({v: solver.resolve(v) for v in goal_vars})
        if limit is not None and len(out) >= limit:
            return out
    if solver.depth_hit and not out:
        raise BudgetExhausted(f"depth limit {budget.max_depth} reached")
    return out


# ---------------------------------------------------------------------------
# Closures over a finite universe


@dataclass(frozen=True)
class ListDomain:
    """Lists over ``elements`` with length in ``[min_len, max_len]``.

    Elements are distinct within a list unless ``repeat`` is set.
    """

    elements: tuple
    max_len: int = 4
    min_len: int = 1
    repeat: bool = False

    def values(self) -> Iterator[tuple]:
        for n in range(self.min_len, self.max_len + 1):
            if self.repeat:
                yield from itertools.product(self.elements, repeat=n)
            else:
                yield from itertools.permutations(self.elements, n)

    def __len__(self):
        total = 0
        k = len(self.elements)
        for n in range(self.min_len, self.max_len + 1):
            if self.repeat:
                total += k**n
                continue
            if n > k:
                break
            p = 1
            for i in range(n):
                p *= k - i
            total += p
        return total


@dataclass(frozen=True)
class Universe:
    """Per-argument domains: a tuple of constants or a :class:`ListDomain`."""

    positions: tuple

    def size(self) -> int:
        n = 1
        for d in self.positions:
            n *= len(d)
        return n

    def atoms(self, pred: str) -> Iterator[Atom]:
        domains = [d.values() if isinstance(d, ListDomain) else d for d in self.positions]
        domains = [list(d) for d in domains]
        for combo in itertools.product(*domains):
            yield Atom(pred, combo)


class UniverseTooLarge(ValueError):
    pass


def derivable_closure(
    program: Programs,
    pred: str,
    arity: int,
    universe: Universe,
    budget: QueryBudget = DEFAULT_BUDGET,
    cap: int = 1_000_000,
) -> frozenset[Atom]:
    """All atoms of ``pred/arity`` over ``universe`` entailed by ``program``.

    Budget exhaustion on a candidate atom counts as not derivable.
    """
    if len(universe.positions) != arity:
        raise ValueError("universe arity does not match predicate arity")
    if universe.size() > cap:
        raise UniverseTooLarge(f"{universe.size()} candidate atoms exceeds cap {cap}")
    out = set()
    for atom in universe.atoms(pred):
        try:
            if entails(program, atom, budget):
                out.add(atom)
        except BudgetExhausted:
            pass
    return frozenset(out)
