"""Language bias, clause generation, and the learning-from-failures constraint store."""

from __future__ import annotations

import bisect
import hashlib
import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, Sequence

from .logic import (
    Atom,
    Clause,
    Program,
    Var,
    canonical_clause_key,
    format_program,
    subsumes,
)

IN, OUT = "+", "-"


class InvalidBias(ValueError):
    pass


class EmptyHypothesisSpace(InvalidBias):
    pass


@dataclass(frozen=True)
class PredDecl:
    name: str
    arity: int
    types: tuple[str, ...] | None = None
    directions: tuple[str, ...] | None = None

    @property
    def key(self) -> tuple[str, int]:
        return self.name, self.arity


@dataclass(frozen=True)
class BiasSpec:
    head: PredDecl
    body: tuple[PredDecl, ...]
    max_vars: int
    max_body: int
    max_clauses: int
    recursion: bool = False
    # a recursive clause must also contain one of these (decreasing structure)
    structural: tuple[tuple[str, int], ...] = (("tail", 2),)

    def validate(self):
        if self.max_body < 1 or self.max_clauses < 1:
            raise InvalidBias("max_body and max_clauses must be >= 1")
        if self.max_vars < self.head.arity:
            raise EmptyHypothesisSpace(
                f"max_vars={self.max_vars} is below the head arity {self.head.arity}"
            )
        if not self.recursion and any(d.key == self.head.key for d in self.body):
            raise InvalidBias("head predicate in body requires enable_recursion")
        for d in (self.head, *self.body):
            if d.types is None:
                raise InvalidBias(f"missing type declaration for {d.name}/{d.arity}")
            if len(d.types) != d.arity:
                raise InvalidBias(f"type arity mismatch for {d.name}/{d.arity}")
            if d.directions is not None and len(d.directions) != d.arity:
                raise InvalidBias(f"direction arity mismatch for {d.name}/{d.arity}")
        return self

    @property
    def max_size(self) -> int:
        return self.max_clauses * (1 + self.max_body)

    def body_decls(self) -> list[PredDecl]:
        decls = [d for d in self.body if d.key != self.head.key]
        if self.recursion:
            decls.append(self.head)
        return decls

    def body_predicates(self) -> set[tuple[str, int]]:
        return {d.key for d in self.body if d.key != self.head.key}


# ---------------------------------------------------------------------------
# Bias file format

_STMT_RE = re.compile(r"([a-z_]+)(?:\((.*)\))?$", re.S)


def _split_statements(text: str) -> list[str]:
    text = re.sub(r"%[^\n]*", "", text)
    out, depth, buf = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "." and depth == 0:
            stmt = "".join(buf).strip()
            if stmt:
                out.append(stmt)
            buf = []
        else:
            buf.append(ch)
    if "".join(buf).strip():
        raise InvalidBias(f"unterminated statement: {''.join(buf).strip()!r}")
    return out


def _parse_tuple(s: str) -> tuple[str, ...]:
    s = s.strip()
    if not (s.startswith("(") and s.endswith(")")):
        return (s,)
    return tuple(x.strip() for x in s[1:-1].split(",") if x.strip())


def parse_bias(text: str) -> BiasSpec:
    """Read the declarative bias format.

    Statements: ``head(p/n).``, ``body(p/n).``, ``type(p, (t1,...,tn)).``,
    ``direction(p, (in,out,...)).``, ``max_vars(n).``, ``max_body(n).``,
    ``max_clauses(n).``, ``enable_recursion.``
    """
    head = None
    body: list[tuple[str, int]] = []
    types: dict[str, tuple[str, ...]] = {}
    dirs: dict[str, tuple[str, ...]] = {}
    limits = {"max_vars": None, "max_body": None, "max_clauses": 1}
    recursion = False
    for stmt in _split_statements(text):
        m = _STMT_RE.match(stmt.replace("\n", " ").strip())
        if m is None:
            raise InvalidBias(f"cannot parse bias statement {stmt!r}")
        name, arg = m.group(1), m.group(2)
        if name in ("head", "body"):
            pm = re.fullmatch(r"\s*([a-z][a-zA-Z0-9_]*)\s*/\s*(\d+)\s*", arg or "")
            if pm is None:
                raise InvalidBias(f"expected pred/arity in {stmt!r}")
            decl = (pm.group(1), int(pm.group(2)))
            if name == "head":
                if head is not None:
                    raise InvalidBias("multiple head declarations")
                head = decl
            else:
                body.append(decl)
        elif name in ("type", "direction"):
            pred, _, rest = (arg or "").partition(",")
            vals = _parse_tuple(rest)
            if name == "direction":
                vals = tuple({"in": IN, "out": OUT, "+": IN, "-": OUT}[v] for v in vals)
                dirs[pred.strip()] = vals
            else:
                types[pred.strip()] = vals
        elif name in limits:
            limits[name] = int(arg)
        elif name == "enable_recursion":
            recursion = True
        else:
            raise InvalidBias(f"unknown bias statement {name!r}")
    if head is None:
        raise InvalidBias("no head declaration")
    mk = lambda p, n: PredDecl(p, n, types.get(p), dirs.get(p))
    head_decl = mk(*head)
    if limits["max_vars"] is None:
        limits["max_vars"] = head_decl.arity
    if limits["max_body"] is None:
        raise InvalidBias("max_body not declared")
    return BiasSpec(
        head=head_decl,
        body=tuple(mk(p, n) for p, n in body),
        max_vars=limits["max_vars"],
        max_body=limits["max_body"],
        max_clauses=limits["max_clauses"],
        recursion=recursion,
    ).validate()


def format_bias(bias: BiasSpec) -> str:
    lines = [f"head({bias.head.name}/{bias.head.arity})."]
    lines += [f"body({d.name}/{d.arity})." for d in bias.body if d.key != bias.head.key]
    for d in (bias.head, *[d for d in bias.body if d.key != bias.head.key]):
        lines.append(f"type({d.name},({','.join(d.types)})).")
        if d.directions:
            words = ",".join("in" if x == IN else "out" for x in d.directions)
            lines.append(f"direction({d.name},({words})).")
    lines += [
        f"max_vars({bias.max_vars}).",
        f"max_body({bias.max_body}).",
        f"max_clauses({bias.max_clauses}).",
    ]
    if bias.recursion:
        lines.append("enable_recursion.")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Clause generation

_VAR_NAMES = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _mode_order(body: Sequence[Atom], decls: dict, head: Atom, head_dirs) -> list[Atom] | None:
    """Order body literals so every input argument is bound when reached."""
    bound = {
        v for v, d in zip(head.args, head_dirs or (IN,) * len(head.args)) if d == IN
    }
    remaining = list(body)
    # non-recursive literals first, recursion last when possible
    remaining.sort(key=lambda a: a.key == head.key)
    order = []
    while remaining:
        for i, lit in enumerate(remaining):
            dirs = decls[lit.key].directions
            if dirs is None or all(d != IN or a in bound for a, d in zip(lit.args, dirs)):
                order.append(lit)
                bound.update(lit.args)
                del remaining[i]
                break
        else:
            return None
    return order


def generate_clauses(bias: BiasSpec) -> list[Clause]:
    """Every clause admitted by ``bias``, deduplicated up to renaming.

    Admission rules: variables only (no constants), type-consistent, at most
    ``max_vars`` variables and ``max_body`` body literals, no variable occurring
    only once, every head variable used in the body, no repeated variable
    inside one literal, an input-mode ordering of the body exists, and at most
    one recursive literal, which must differ from the head and come with a
    structural literal.
    """
    bias.validate()
    head_types = bias.head.types
    arity = bias.head.arity
    decls = {d.key: d for d in bias.body_decls()}
    all_types = sorted({t for d in decls.values() for t in d.types} | set(head_types))
    head_vars = [Var(_VAR_NAMES[i]) for i in range(arity)]
    head = Atom(bias.head.name, head_vars)
    seen: dict[str, Clause] = {}

    for n_extra in range(0, bias.max_vars - arity + 1):
        for extra_types in itertools.combinations_with_replacement(all_types, n_extra):
            extra = [Var(_VAR_NAMES[arity + i]) for i in range(n_extra)]
            vtypes = dict(zip(head_vars, head_types))
            vtypes.update(zip(extra, extra_types))
            allvars = head_vars + extra
            universe: list[Atom] = []
            for d in decls.values():
                pools = [[v for v in allvars if vtypes[v] == t] for t in d.types]
                for args in itertools.product(*pools):
                    if len(set(args)) != len(args):
                        continue
                    lit = Atom(d.name, args)
                    if lit == head:
                        continue
                    universe.append(lit)
            rec_key = bias.head.key
            for size in range(1, bias.max_body + 1):
                for body in itertools.combinations(universe, size):
                    counts = {v: 0 for v in allvars}
                    for v in head_vars:
                        counts[v] = 1
                    n_rec = 0
                    for lit in body:
                        if lit.key == rec_key:
                            n_rec += 1
                        for a in lit.args:
                            counts[a] += 1
                    if any(c < 2 for c in counts.values()):
                        continue
                    if n_rec > 1:
                        continue
                    if n_rec and not any(lit.key in bias.structural for lit in body):
                        continue
                    order = _mode_order(body, decls, head, bias.head.directions)
                    if order is None:
                        continue
                    clause = Clause(head, tuple(order))
                    key = canonical_clause_key(clause)
                    if key not in seen:
                        seen[key] = clause
    return [seen[k] for k in sorted(seen)]


# ---------------------------------------------------------------------------
# Candidates and constraints


@dataclass(frozen=True)
class Candidate:
    clauses: tuple[Clause, ...]
    keys: tuple[str, ...]

    @classmethod
    def of(cls, clauses: Iterable[Clause]) -> "Candidate":
        pairs = sorted((canonical_clause_key(c), c) for c in clauses)
        return cls(tuple(c for _, c in pairs), tuple(k for k, _ in pairs))

    @property
    def size(self) -> int:
        return sum(c.size for c in self.clauses)

    @cached_property
    def program(self) -> Program:
        return Program(self.clauses)

    @cached_property
    def id(self) -> str:
        return hashlib.sha1("\n".join(self.keys).encode()).hexdigest()[:16]

    def is_recursive(self) -> bool:
        return any(c.is_recursive() for c in self.clauses)

    def __len__(self):
        return len(self.clauses)

    def __str__(self):
        return format_program(self.clauses)


def _is_generalisation(cand: Sequence[Clause], failed: Sequence[Clause]) -> bool:
    # every failed clause is subsumed by some clause of the candidate
    return all(any(subsumes(c, f) for c in cand) for f in failed)


def _is_specialisation(cand: Sequence[Clause], failed: Sequence[Clause]) -> bool:
    # same clause count, each candidate clause specialises a distinct failed clause
    if len(cand) != len(failed):
        return False
    for perm in itertools.permutations(range(len(cand))):
        if all(subsumes(failed[i], cand[j]) for i, j in enumerate(perm)):
            return True
    return False


class PoolRelations:
    """Precomputed theta-subsumption order over a clause pool.

    ``gen[i]`` holds the pool indices whose clause subsumes clause ``i``
    (its generalisations, ``i`` included); ``spec[i]`` the converse.
    """

    def __init__(self, pool: Sequence[Clause]):
        self.keys = [canonical_clause_key(c) for c in pool]
        self.pos = {k: i for i, k in enumerate(self.keys)}
        self.gen: list[set[int]] = [{i} for i in range(len(pool))]
        self.spec: list[set[int]] = [{i} for i in range(len(pool))]
        preds = [frozenset(b.pred for b in c.body) for c in pool]
        for i, g in enumerate(pool):
            for j, s in enumerate(pool):
                if i != j and preds[i] <= preds[j] and subsumes(g, s):
                    self.gen[j].add(i)
                    self.spec[i].add(j)


@dataclass
class ConstraintStore:
    """Constraints learned from failed candidates; only ever grows.

    With ``relations`` the checks run against precomputed subsumption sets
    for clauses of that pool; clauses outside the pool fall back to direct
    subsumption tests.
    """

    relations: PoolRelations | None = None
    banned_generalisations: list[tuple[Clause, ...]] = field(default_factory=list)
    banned_specialisations: list[tuple[Clause, ...]] = field(default_factory=list)
    banned_exact: set[tuple[str, ...]] = field(default_factory=set)
    # clause keys known to be too general on their own
    too_general_clauses: set[str] = field(default_factory=set)
    pruned_count: int = 0

    def __post_init__(self):
        self._gen_by_member: dict[int, list[tuple[int, ...]]] = {}
        self._spec_by_member: dict[int, list[tuple[int, ...]]] = {}
        self._slow_gen: list[tuple[Clause, ...]] = []
        self._slow_spec: list[tuple[Clause, ...]] = []

    def _indices(self, keys: Sequence[str]) -> tuple[int, ...] | None:
        if self.relations is None:
            return None
        out = []
        for k in keys:
            i = self.relations.pos.get(k)
            if i is None:
                return None
            out.append(i)
        return tuple(out)

    def prune_generalisations(self, failed: Candidate) -> "ConstraintStore":
        """Exclude ``failed`` and every program at least as general."""
        self.banned_exact.add(failed.keys)
        self.banned_generalisations.append(failed.clauses)
        idx = self._indices(failed.keys)
        if idx is None:
            self._slow_gen.append(failed.clauses)
            if len(failed) == 1:
                self.too_general_clauses.add(failed.keys[0])
        elif len(idx) == 1:
            rel = self.relations
            self.too_general_clauses.update(rel.keys[j] for j in rel.gen[idx[0]])
        else:
            for f in set(idx):
                self._gen_by_member.setdefault(f, []).append(idx)
        return self

    def prune_specialisations(self, failed: Candidate) -> "ConstraintStore":
        """Exclude ``failed`` and every program made by adding body literals."""
        self.banned_exact.add(failed.keys)
        self.banned_specialisations.append(failed.clauses)
        idx = self._indices(failed.keys)
        if idx is None or not idx:
            self._slow_spec.append(failed.clauses)
        else:
            # index under the member with the fewest specialisations
            rel = self.relations
            anchor = min(idx, key=lambda i: len(rel.spec[i]))
            self._spec_by_member.setdefault(anchor, []).append(idx)
        return self

    def ban(self, cand: Candidate) -> "ConstraintStore":
        self.banned_exact.add(cand.keys)
        return self

    def is_pruned(self, cand: Candidate) -> bool:
        if cand.keys in self.banned_exact:
            return True
        if any(k in self.too_general_clauses for k in cand.keys):
            return True
        idx = self._indices(cand.keys)
        if idx is None:
            return self._slow_pruned(cand, self.banned_generalisations, self.banned_specialisations)
        if self._slow_pruned(cand, self._slow_gen, self._slow_spec):
            return True
        rel = self.relations
        if self._gen_by_member:
            below = set().union(*(rel.spec[i] for i in idx)) if idx else set()
            for s in below:
                for failed in self._gen_by_member.get(s, ()):
                    if all(f in below for f in failed):
                        return True
        if self._spec_by_member and idx:
            above = set().union(*(rel.gen[i] for i in idx))
            k = len(idx)
            for g in above:
                for failed in self._spec_by_member.get(g, ()):
                    if len(failed) == k and _bijective(failed, idx, rel):
                        return True
        return False

    def _slow_pruned(self, cand, gens, specs) -> bool:
        for failed in gens:
            if _is_generalisation(cand.clauses, failed):
                if len(cand) == 1:
                    self.too_general_clauses.add(cand.keys[0])
                return True
        for failed in specs:
            if _is_specialisation(cand.clauses, failed):
                return True
        return False


def _bijective(failed: tuple[int, ...], cand: tuple[int, ...], rel: PoolRelations) -> bool:
    for perm in itertools.permutations(cand):
        if all(f in rel.gen[c] for f, c in zip(failed, perm)):
            return True
    return False


def enumerate_candidates(
    bias: BiasSpec,
    store: ConstraintStore,
    pool: Sequence[Clause] | None = None,
    *,
    include_empty: bool = True,
    accept: Callable[[Candidate], bool] | None = None,
    pool_filter: Callable[[int, Clause, str], bool] | None = None,
) -> Iterator[Candidate]:
    """Lazily emit candidate programs in (size, canonical form) order.

    Within a size class programs are ordered lexicographically on their
    sorted tuple of canonical clause keys. ``store`` is consulted at emission
    time, so constraints the caller adds while consuming the stream apply
    immediately. ``accept`` and ``pool_filter`` let a caller add further
    sound pruning; ``pool_filter`` sees (size class, clause, key) and decides
    whether the clause may appear in a multi-clause program of that class.
    """
    if pool is None:
        pool = generate_clauses(bias)
    if not pool:
        raise EmptyHypothesisSpace(f"bias for {bias.head.name} admits no clause")
    keyed = sorted((canonical_clause_key(c), c) for c in pool)
    sizes = [c.size for _, c in keyed]
    min_size = min(sizes)

    if include_empty:
        empty = Candidate((), ())
        if not store.is_pruned(empty) and (accept is None or accept(empty)):
            yield empty

    def emit(prefix):
        cand = Candidate(tuple(keyed[i][1] for i in prefix), tuple(keyed[i][0] for i in prefix))
        if store.is_pruned(cand) or (accept is not None and not accept(cand)):
            store.pruned_count += 1
            return None
        return cand

    for total in range(min_size, bias.max_size + 1):
        for i, s in enumerate(sizes):
            if s == total:
                cand = emit((i,))
                if cand is not None:
                    yield cand
        if bias.max_clauses < 2:
            continue
        multi = [
            i for i, s in enumerate(sizes)
            if s <= total - min_size
            and keyed[i][0] not in store.too_general_clauses
            and (pool_filter is None or pool_filter(total, keyed[i][1], keyed[i][0]))
        ]
        for k in range(2, bias.max_clauses + 1):
            yield from _combos(multi, sizes, keyed, total, k, store, emit, min_size)


def _combos(multi, sizes, keyed, total, k, store, emit, min_size):
    """k-clause programs of exactly ``total`` literals, in lexicographic order."""
    by_size: dict[int, list[int]] = {}
    for pos, i in enumerate(multi):
        by_size.setdefault(sizes[i], []).append(pos)
    too_general = store.too_general_clauses

    def rec(prefix, start, remaining, left):
        if left == 1:
            positions = by_size.get(remaining, ())
            for pos in positions[bisect.bisect_left(positions, start):]:
                i = multi[pos]
                if keyed[i][0] in too_general:
                    continue
                cand = emit(prefix + (i,))
                if cand is not None:
                    yield cand
            return
        for pos in range(start, len(multi)):
            i = multi[pos]
            s = sizes[i]
            if remaining - s < min_size * (left - 1) or keyed[i][0] in too_general:
                continue
            yield from rec(prefix + (i,), pos + 1, remaining - s, left - 1)

    yield from rec((), 0, total, k)
