"""Term and clause language: constants, variables, proper lists, definite clauses.

Terms are plain Python values so that the resolution engine stays fast:

* a constant is a ``str`` (``"stone"``, ``"b12"``, ``"z1"``),
* a variable is a :class:`Var`,
* a proper list is a ``tuple`` of terms (``()`` is the empty list).

There are no other function symbols.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence, Union

logger = logging.getLogger(__name__)


class Var:
    """A logic variable. Two variables are equal iff name and index match."""

    __slots__ = ("name", "index", "_hash")

    def __init__(self, name: str, index: int = 0):
        self.name = name
        self.index = index
        self._hash = hash((name, index))

    def __eq__(self, other):
        return (
            isinstance(other, Var)
            and self.index == other.index
            and self.name == other.name
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return (self.name, self.index) < (other.name, other.index)

    def __repr__(self):
        return self.name if self.index == 0 else f"{self.name}_{self.index}"


Term = Union[str, Var, tuple]


def is_ground(term: Term) -> bool:
    if isinstance(term, Var):
        return False
    if isinstance(term, tuple):
        return all(is_ground(t) for t in term)
    return True


def term_vars(term: Term) -> Iterator[Var]:
    """Variables of ``term`` in left-to-right first-occurrence order (with repeats)."""
    if isinstance(term, Var):
        yield term
    elif isinstance(term, tuple):
        for t in term:
            yield from term_vars(t)


class Atom:
    __slots__ = ("pred", "args", "_hash")

    def __init__(self, pred: str, args: Sequence[Term]):
        self.pred = pred
        self.args = tuple(args)
        self._hash = hash((pred, self.args))

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def key(self) -> tuple[str, int]:
        return self.pred, len(self.args)

    def is_ground(self) -> bool:
        return all(is_ground(a) for a in self.args)

    def vars(self) -> Iterator[Var]:
        for a in self.args:
            yield from term_vars(a)

    def __eq__(self, other):
        return (
            isinstance(other, Atom)
            and self._hash == other._hash
            and self.pred == other.pred
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return format_atom(self) < format_atom(other)

    def __repr__(self):
        return format_atom(self)


@dataclass(frozen=True)
class Clause:
    """Definite clause ``head :- body``; an empty body makes a fact."""

    head: Atom
    body: tuple[Atom, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))

    @property
    def is_fact(self) -> bool:
        return not self.body

    @property
    def size(self) -> int:
        return 1 + len(self.body)

    def atoms(self) -> Iterator[Atom]:
        yield self.head
        yield from self.body

    @cached_property
    def var_tuple(self) -> tuple[Var, ...]:
        seen: dict[Var, None] = {}
        for atom in self.atoms():
            for v in atom.vars():
                seen.setdefault(v)
        return tuple(seen)

    def vars(self) -> list[Var]:
        return list(self.var_tuple)

    def is_ground(self) -> bool:
        return not self.var_tuple

    def is_recursive(self) -> bool:
        return any(b.key == self.head.key for b in self.body)

    def __str__(self):
        return format_clause(self)


class Program:
    """An ordered set of clauses with a (predicate, arity) index.

    Programs are immutable; :meth:`union` and friends build new ones.
    """

    def __init__(self, clauses: Iterable[Clause] = ()):
        self.clauses: tuple[Clause, ...] = tuple(clauses)
        index: dict[tuple[str, int], list[int]] = {}
        for i, c in enumerate(self.clauses):
            index.setdefault(c.head.key, []).append(i)
        self.index = {k: tuple(v) for k, v in index.items()}
        self._by_key: dict | None = None

    @classmethod
    def from_atoms(cls, atoms: Iterable[Atom]) -> "Program":
        """Facts from ground atoms, duplicates dropped, order kept."""
        return cls(Clause(a) for a in dict.fromkeys(atoms))

    def atoms(self) -> list[Atom]:
        """Heads of the unit clauses."""
        return [c.head for c in self.clauses if c.is_fact]

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def __bool__(self):
        return bool(self.clauses)

    def __eq__(self, other):
        return isinstance(other, Program) and self.clauses == other.clauses

    def __hash__(self):
        return hash(self.clauses)

    def __repr__(self):
        return f"Program({len(self.clauses)} clauses)"

    def __str__(self):
        return format_program(self)

    def clauses_for(self, key: tuple[str, int]) -> tuple[Clause, ...]:
        if self._by_key is None:
            self._by_key = {
                k: tuple(self.clauses[i] for i in idx) for k, idx in self.index.items()
            }
        return self._by_key.get(key, ())

    def predicates(self) -> set[tuple[str, int]]:
        keys = set(self.index)
        for c in self.clauses:
            keys.update(b.key for b in c.body)
        return keys

    def defined(self, pred: str) -> bool:
        return any(k[0] == pred for k in self.index)

    def restrict(self, pred: str) -> "Program":
        return Program(c for c in self.clauses if c.head.pred == pred)

    def without(self, pred: str) -> "Program":
        return Program(c for c in self.clauses if c.head.pred != pred)

    def union(self, *others: "Program | Iterable[Clause]") -> "Program":
        """Order-preserving union, dropping clauses equal up to renaming."""
        out = list(self.clauses)
        seen = {canonical_clause_key(c) for c in out}
        for other in others:
            for c in other:
                k = canonical_clause_key(c)
                if k not in seen:
                    seen.add(k)
                    out.append(c)
        return Program(out)

    __or__ = union

    def arity_conflicts(self) -> dict[str, set[int]]:
        arities: dict[str, set[int]] = {}
        for pred, arity in self.predicates():
            arities.setdefault(pred, set()).add(arity)
        return {p: a for p, a in arities.items() if len(a) > 1}


# ---------------------------------------------------------------------------
# Text syntax


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int, token: str):
        super().__init__(f"{message} at line {line}, column {col}: {token!r}")
        self.line = line
        self.col = col
        self.token = token


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<neck>:-)
  | (?P<ident>[a-z][a-zA-Z0-9_]*)
  | (?P<num>[0-9][a-zA-Z0-9_]*)
  | (?P<var>[A-Z_][a-zA-Z0-9_]*)
  | (?P<punct>[(),.\[\]])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("unexpected character", line, pos - line_start + 1, text[pos])
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append((kind, value, line, pos - line_start + 1))
        nl = value.count("\n")
        if nl:
            line += nl
            line_start = m.start() + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.varmap: dict[str, Var] = {}

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, tok, line, col = self.next()
        if tok != value or kind == "eof":
            raise ParseError(f"expected {value!r}", line, col, tok)

    def error(self, message: str):
        _, tok, line, col = self.peek()
        raise ParseError(message, line, col, tok)

    def program(self) -> list[Clause]:
        clauses = []
        while self.peek()[0] != "eof":
            clauses.append(self.clause())
        return clauses

    def clause(self) -> Clause:
        self.varmap = {}
        head = self.atom()
        body = []
        if self.peek()[1] == ":-":
            self.next()
            body.append(self.atom())
            while self.peek()[1] == ",":
                self.next()
                body.append(self.atom())
        self.expect(".")
        return Clause(head, tuple(body))

    def atom(self) -> Atom:
        kind, name, line, col = self.next()
        if kind != "ident":
            raise ParseError("expected predicate name", line, col, name)
        if self.peek()[1] != "(":
            return Atom(name, ())
        self.next()
        args = [self.term()]
        while self.peek()[1] == ",":
            self.next()
            args.append(self.term())
        self.expect(")")
        return Atom(name, args)

    def term(self) -> Term:
        kind, value, line, col = self.next()
        if kind in ("ident", "num"):
            return value
        if kind == "var":
            # `_` is anonymous: every occurrence is a fresh variable
            if value == "_":
                v = Var(f"_G{len(self.varmap)}")
                self.varmap[v.name] = v
                return v
            return self.varmap.setdefault(value, Var(value))
        if value == "[":
            items = []
            if self.peek()[1] != "]":
                items.append(self.term())
                while self.peek()[1] == ",":
                    self.next()
                    items.append(self.term())
            self.expect("]")
            return tuple(items)
        raise ParseError("expected term", line, col, value)


def parse_program(text: str) -> Program:
    """Parse clause syntax into a :class:`Program` (clauses in source order)."""
    prog = Program(_Parser(text).program())
    for pred, arities in prog.arity_conflicts().items():
        logger.warning("predicate %s used with arities %s", pred, sorted(arities))
    return prog


def parse_clause(text: str) -> Clause:
    clauses = _Parser(text).program()
    if len(clauses) != 1:
        raise ValueError(f"expected exactly one clause, got {len(clauses)}")
    return clauses[0]


def parse_atom(text: str) -> Atom:
    p = _Parser(text)
    atom = p.atom()
    if p.peek()[0] != "eof":
        p.error("trailing input after atom")
    return atom


def format_term(term: Term, names: dict[Var, str] | None = None) -> str:
    if isinstance(term, Var):
        if names is not None and term in names:
            return names[term]
        return term.name if term.index == 0 else f"{term.name}_{term.index}"
    if isinstance(term, tuple):
        return "[" + ",".join(format_term(t, names) for t in term) + "]"
    return term


def format_atom(atom: Atom, names: dict[Var, str] | None = None) -> str:
    if not atom.args:
        return atom.pred
    return f"{atom.pred}(" + ",".join(format_term(a, names) for a in atom.args) + ")"


def _var_names(clause: Clause) -> dict[Var, str] | None:
    vs = clause.vars()
    plain = {v: format_term(v) for v in vs}
    if len(set(plain.values())) == len(vs) and all(
        re.fullmatch(r"[A-Z_][a-zA-Z0-9_]*", n) for n in plain.values()
    ):
        return plain
    return {v: _letter_name(i) for i, v in enumerate(vs)}


def _letter_name(i: int) -> str:
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    return letters[i] if i < 26 else f"V{i}"


def format_clause(clause: Clause) -> str:
    names = _var_names(clause)
    head = format_atom(clause.head, names)
    if not clause.body:
        return head + "."
    return head + ":- " + ", ".join(format_atom(b, names) for b in clause.body) + "."


def format_program(program: Iterable[Clause]) -> str:
    return "".join(format_clause(c) + "\n" for c in program)


# ---------------------------------------------------------------------------
# Substitutions and unification


Substitution = dict  # Var -> Term, triangular form


def walk(term: Term, s: Substitution) -> Term:
    while isinstance(term, Var) and term in s:
        term = s[term]
    return term


def apply(term: Term, s: Substitution) -> Term:
    """Fully resolve ``term`` under ``s``."""
    term = walk(term, s)
    if isinstance(term, tuple):
        return tuple(apply(t, s) for t in term)
    return term


def apply_atom(atom: Atom, s: Substitution) -> Atom:
    return Atom(atom.pred, [apply(a, s) for a in atom.args])


def apply_clause(clause: Clause, s: Substitution) -> Clause:
    return Clause(apply_atom(clause.head, s), tuple(apply_atom(b, s) for b in clause.body))


def occurs(v: Var, term: Term, s: Substitution) -> bool:
    term = walk(term, s)
    if term == v:
        return True
    if isinstance(term, tuple):
        return any(occurs(v, t, s) for t in term)
    return False


def unify_terms(a: Term, b: Term, s: Substitution) -> Substitution | None:
    a = walk(a, s)
    b = walk(b, s)
    if a == b:
        return s
    if isinstance(a, Var):
        if occurs(a, b, s):
            return None
        return {**s, a: b}
    if isinstance(b, Var):
        if occurs(b, a, s):
            return None
        return {**s, b: a}
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        for x, y in zip(a, b):
            s = unify_terms(x, y, s)
            if s is None:
                return None
        return s
    return None


def unify(a: Atom, b: Atom, s: Substitution | None = None) -> Substitution | None:
    """Most general unifier of two atoms extending ``s``, or ``None``."""
    if s is None:
        s = {}
    if a.pred != b.pred or len(a.args) != len(b.args):
        return None
    for x, y in zip(a.args, b.args):
        s = unify_terms(x, y, s)
        if s is None:
            return None
    return s


def resolve_substitution(s: Substitution) -> Substitution:
    """Idempotent form of a triangular substitution."""
    return {v: apply(t, s) for v, t in s.items()}


def rename_apart(clause: Clause, counter: int) -> Clause:
    """Give every variable of ``clause`` the index ``counter``."""
    mapping = {v: Var(v.name, counter) for v in clause.vars()}
    if not mapping:
        return clause
    return apply_clause(clause, mapping)


# ---------------------------------------------------------------------------
# Canonical forms


def _canon_term(term: Term, names: dict[Var, int]) -> str:
    if isinstance(term, Var):
        if term not in names:
            names[term] = len(names)
        return f"V{names[term]}"
    if isinstance(term, tuple):
        return "[" + ",".join(_canon_term(t, names) for t in term) + "]"
    return term


def _canon_atom(atom: Atom, names: dict[Var, int]) -> str:
    return atom.pred + "(" + ",".join(_canon_term(a, names) for a in atom.args) + ")"


def _shape_key(atom: Atom, fixed: dict[Var, int]) -> tuple:
    """Sort key that ignores names of not-yet-numbered variables."""
    parts = []
    for a in atom.args:
        if isinstance(a, Var):
            parts.append(f"V{fixed[a]}" if a in fixed else "?")
        elif isinstance(a, tuple):
            parts.append("[" + ",".join(
                f"V{fixed[t]}" if isinstance(t, Var) and t in fixed else ("?" if isinstance(t, Var) else str(t))
                for t in term_flat(a)) + "]")
        else:
            parts.append(a)
    return (atom.pred, len(atom.args), tuple(parts))


def term_flat(term: tuple) -> Iterator[Term]:
    for t in term:
        if isinstance(t, tuple):
            yield "["
            yield from term_flat(t)
            yield "]"
        else:
            yield t


def canonical_clause_key(clause: Clause) -> str:
    """Canonical text of a clause: body order and variable names factored out.

    Variables are numbered by first occurrence (head first, then body in
    canonical order); the body order is the lexicographically smallest
    rendering among orders consistent with the shape sort.
    """
    names: dict[Var, int] = {}
    head = _canon_atom(clause.head, names)
    if not clause.body:
        return head + "."
    body = list(clause.body)
    groups: dict[tuple, list[Atom]] = {}
    for b in body:
        groups.setdefault(_shape_key(b, names), []).append(b)
    ordered_groups = [groups[k] for k in sorted(groups)]
    best = None
    choices = [
        itertools.permutations(g) if len(g) > 1 else (tuple(g),) for g in ordered_groups
    ]
    n_perm = 1
    for g in ordered_groups:
        for i in range(2, len(g) + 1):
            n_perm *= i
    if n_perm > 5040:
        # fall back to a fixed order; only reached for pathological clauses
        choices = [(tuple(g),) for g in ordered_groups]
    for combo in itertools.product(*[list(c) for c in choices]):
        local = dict(names)
        text = ",".join(_canon_atom(b, local) for group in combo for b in group)
        if best is None or text < best:
            best = text
    return head + ":-" + best + "."


def canonical_program_key(program: Iterable[Clause]) -> tuple[str, ...]:
    return tuple(sorted(canonical_clause_key(c) for c in program))


def clause_equal_upto_renaming(a: Clause, b: Clause) -> bool:
    return canonical_clause_key(a) == canonical_clause_key(b)


def programs_equal_upto_renaming(a: Iterable[Clause], b: Iterable[Clause]) -> bool:
    return canonical_program_key(a) == canonical_program_key(b)


# ---------------------------------------------------------------------------
# theta-subsumption


def subsumes(general: Clause, specific: Clause) -> bool:
    """True iff some substitution maps ``general`` into ``specific``.

    The head must map onto the head and every body literal onto some body
    literal of ``specific``. Variables of ``specific`` are treated as
    constants.
    """
    if general.head.key != specific.head.key or len(general.body) > len(specific.body):
        return False
    frozen = _freeze_clause(specific)
    s = _match_atom(general.head, frozen.head, {})
    if s is None:
        return False
    return _match_body(list(general.body), frozen.body, s)


class _Frozen(str):
    """A variable of the subsumed clause, treated as a distinct constant."""


def _freeze_term(t: Term):
    if isinstance(t, Var):
        return _Frozen(f"${t.name}_{t.index}")
    if isinstance(t, tuple):
        return tuple(_freeze_term(x) for x in t)
    return t


def _freeze_clause(c: Clause) -> Clause:
    f = lambda a: Atom(a.pred, [_freeze_term(x) for x in a.args])
    return Clause(f(c.head), tuple(f(b) for b in c.body))


def _match_term(p: Term, t: Term, s: dict) -> dict | None:
    if isinstance(p, Var):
        if p in s:
            return s if s[p] == t else None
        return {**s, p: t}
    if isinstance(p, tuple):
        if not isinstance(t, tuple) or len(t) != len(p):
            return None
        for x, y in zip(p, t):
            s = _match_term(x, y, s)
            if s is None:
                return None
        return s
    return s if p == t else None


def _match_atom(p: Atom, t: Atom, s: dict) -> dict | None:
    if p.pred != t.pred or len(p.args) != len(t.args):
        return None
    for x, y in zip(p.args, t.args):
        s = _match_term(x, y, s)
        if s is None:
            return None
    return s


def _match_body(lits: list[Atom], targets: tuple[Atom, ...], s: dict) -> bool:
    if not lits:
        return True
    first, rest = lits[0], lits[1:]
    for t in targets:
        s2 = _match_atom(first, t, s)
        if s2 is not None and _match_body(rest, targets, s2):
            return True
    return False
