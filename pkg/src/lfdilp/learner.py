"""Learning from failures for a single target predicate.

The loop generates candidate programs in size order, tests each against the
positive and negative examples under the background program, and turns every
failure into constraints that prune the rest of the space:

* a candidate entailing a negative example is too general, so every program
  at least as general is discarded;
* a candidate missing a positive example is too specific, so every program
  obtained by adding body literals to its clauses is discarded.

The first candidate entailing all positives and no negatives is returned.
"""

from __future__ import annotations

import itertools
import logging
import re
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .hypothesis import (
    IN,
    OUT,
    BiasSpec,
    Candidate,
    ConstraintStore,
    PoolRelations,
    enumerate_candidates,
    format_bias,
    generate_clauses,
)
from .inference import (
    DEFAULT_BUDGET,
    BudgetExhausted,
    QueryBudget,
    Solver,
    answers,
    entails,
)
from .logic import Atom, Clause, Program, Var, format_atom, parse_atom

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    atom: Atom
    positive: bool
    provenance: str = ""

    def __post_init__(self):
        if not self.atom.is_ground():
            raise ValueError(f"example {self.atom} is not ground")


class ConflictingExamples(ValueError):
    pass


def check_examples(pos: Iterable[Example], neg: Iterable[Example]):
    pos_atoms = {e.atom for e in pos}
    clash = pos_atoms & {e.atom for e in neg}
    if clash:
        raise ConflictingExamples(
            "atoms labelled both positive and negative: "
            + ", ".join(sorted(format_atom(a) for a in clash))
        )


def _atoms(examples: Iterable[Example | Atom]) -> list[Atom]:
    return [e.atom if isinstance(e, Example) else e for e in examples]


# ---------------------------------------------------------------------------
# Example files


_EX_RE = re.compile(r"^\s*(pos|neg)\((.*)\)\s*$", re.S)


def read_examples(text: str, provenance: str = "") -> tuple[list[Example], list[Example]]:
    """Parse ``pos(atom).`` / ``neg(atom).`` lines."""
    pos, neg = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("%", 1)[0].strip()
        if not line:
            continue
        if not line.endswith("."):
            raise ValueError(f"line {lineno}: missing terminating '.'")
        m = _EX_RE.match(line[:-1])
        if m is None:
            raise ValueError(f"line {lineno}: expected pos(...) or neg(...)")
        atom = parse_atom(m.group(2))
        ex = Example(atom, m.group(1) == "pos", provenance or f"line{lineno}")
        (pos if ex.positive else neg).append(ex)
    check_examples(pos, neg)
    return pos, neg


def write_examples(pos: Iterable[Example], neg: Iterable[Example]) -> str:
    lines = [f"pos({format_atom(e.atom)})." for e in pos]
    lines += [f"neg({format_atom(e.atom)})." for e in neg]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Testing


@dataclass(frozen=True)
class TestOutcome:
    missed: Atom | None = None  # first positive not entailed
    covered: Atom | None = None  # first negative entailed
    budget_hit: bool = False  # some positive failed only because of the budget

    @property
    def kind(self) -> str:
        if self.missed is None and self.covered is None:
            return "complete_consistent"
        if self.missed is not None and self.covered is not None:
            return "both"
        return "too_specific" if self.missed is not None else "too_general"

    @property
    def ok(self) -> bool:
        return self.missed is None and self.covered is None

    @property
    def too_general(self) -> bool:
        return self.covered is not None

    @property
    def too_specific(self) -> bool:
        return self.missed is not None


TestOutcome.__test__ = False  # not a pytest class


def test_candidate(
    background: Program,
    candidate: Candidate | Program | Sequence[Clause],
    pos: Iterable[Example | Atom],
    neg: Iterable[Example | Atom],
    budget: QueryBudget = DEFAULT_BUDGET,
) -> TestOutcome:
    """Check a candidate by SLD resolution; negatives are tried first.

    A negative whose proof search exhausts the budget counts as not entailed;
    a positive in the same situation counts as missed, with ``budget_hit`` set.
    """
    if isinstance(candidate, Candidate):
        prog = candidate.program
    elif isinstance(candidate, Program):
        prog = candidate
    else:
        prog = Program(candidate)
    layers = (background, prog)
    covered = None
    for atom in _atoms(neg):
        try:
            if entails(layers, atom, budget):
                covered = atom
                break
        except BudgetExhausted:
            pass
    missed, budget_hit = None, False
    for atom in _atoms(pos):
        try:
            if entails(layers, atom, budget):
                continue
        except BudgetExhausted:
            budget_hit = True
        missed = atom
        break
    return TestOutcome(missed, covered, budget_hit and missed is not None)


test_candidate.__test__ = False


class _NotTabled(Exception):
    pass


class CoverageTable:
    """Memoised per-clause coverage used to test programs quickly.

    A non-recursive clause contributes the set of atoms it derives on its
    own; a clause with one recursive literal contributes edges ``a <- b``
    (``a`` holds if ``b`` does). A program's coverage is the least fixpoint
    of those contributions, which coincides with SLD entailment whenever the
    latter terminates within budget. The learner confirms every solution it
    finds with :func:`test_candidate`.
    """

    def __init__(
        self,
        background: Program,
        target: tuple[str, int],
        pos,
        neg,
        budget,
        pool: Sequence[Clause] = (),
        relations: PoolRelations | None = None,
    ):
        self.bg = background
        self.target = target
        self.budget = budget
        self.atoms: list[Atom] = []
        self.ids: dict[Atom, int] = {}
        for a in list(pos) + list(neg):
            self._id(a)
        self.n_pos = len(pos)
        self.n_ex = len(pos) + len(neg)
        self.pos_mask = (1 << self.n_pos) - 1
        self.neg_mask = ((1 << self.n_ex) - 1) ^ self.pos_mask
        self.bg_defines = background.defined(target[0])
        self._derives: dict[Clause, dict[int, bool]] = {}
        self._ex_mask: dict[Clause, int] = {}
        self._reqs: dict[Clause, dict[int, tuple[int, ...]]] = {}
        self._bg_derives: dict[int, bool] = {}
        self._stripped: dict[Clause, tuple[Clause, Atom]] = {}
        self.budget_hits = 0
        # a clause derives nothing its generalisations do not derive, so its
        # generalisations in the pool bound the examples worth trying
        self._parents: dict[Clause, tuple[Clause, ...]] = {}
        if relations is not None:
            for i, c in enumerate(pool):
                if not c.is_recursive():
                    self._parents[c] = tuple(
                        pool[j] for j in sorted(relations.gen[i]) if pool[j].size < c.size
                    )

    def _id(self, atom: Atom) -> int:
        i = self.ids.get(atom)
        if i is None:
            i = self.ids[atom] = len(self.atoms)
            self.atoms.append(atom)
        return i

    def _entails(self, layers, atom) -> bool:
        try:
            return entails(layers, atom, self.budget)
        except BudgetExhausted:
            self.budget_hits += 1
            return False

    def derives(self, clause: Clause, i: int) -> bool:
        memo = self._derives.setdefault(clause, {})
        r = memo.get(i)
        if r is None:
            for p in self._parents.get(clause, ()):
                if self._derives.get(p, {}).get(i) is False:
                    r = False
                    break
            else:
                r = self._entails((self.bg, Program([clause])), self.atoms[i])
            memo[i] = r
        return r

    def neg_hit(self, clause: Clause) -> int | None:
        """Index of the first negative a non-recursive clause derives alone, if any."""
        m = self._ex_mask.get(clause)
        if m is None and clause in self._parents:
            m = self.example_mask(clause)
        if m is not None:
            bad = m & self.neg_mask
            return (bad & -bad).bit_length() - 1 if bad else None
        for i in range(self.n_pos, self.n_ex):
            if self.derives(clause, i):
                return i
        return None

    def example_mask(self, clause: Clause) -> int:
        """Bitmask over the examples that ``clause`` derives alone (non-recursive)."""
        m = self._ex_mask.get(clause)
        if m is None:
            cand = (1 << self.n_ex) - 1
            for p in self._parents.get(clause, ()):
                cand &= self.example_mask(p)
            m = 0
            while cand:
                low = cand & -cand
                i = low.bit_length() - 1
                if self._entails((self.bg, Program([clause])), self.atoms[i]):
                    m |= low
                cand ^= low
            self._ex_mask[clause] = m
        return m

    def _split(self, clause: Clause) -> tuple[Clause, Atom]:
        r = self._stripped.get(clause)
        if r is None:
            recs = [b for b in clause.body if b.key == self.target]
            if len(recs) != 1:
                raise _NotTabled
            rest = tuple(b for b in clause.body if b.key != self.target)
            r = self._stripped[clause] = (Clause(clause.head, rest), recs[0])
        return r

    def requirements(self, clause: Clause, i: int) -> tuple[int, ...]:
        memo = self._reqs.setdefault(clause, {})
        r = memo.get(i)
        if r is not None:
            return r
        stripped, rec_lit = self._split(clause)
        solver = Solver((self.bg,), self.budget)
        head, body = solver._rename(Clause(clause.head, stripped.body + (rec_lit,)))
        out: list[int] = []
        if solver._unify_args(self.atoms[i].args, head.args):
            rec_renamed = body[-1]
            try:
                for _ in solver.solve(body[:-1]):
                    args = [solver.resolve(a) for a in rec_renamed.args]
                    req = Atom(rec_renamed.pred, args)
                    if not req.is_ground():
                        raise _NotTabled
                    j = self._id(req)
                    if j != i and j not in out:
                        out.append(j)
            except BudgetExhausted:
                self.budget_hits += 1
        r = memo[i] = tuple(out)
        return r

    def _bg_derived(self, i: int) -> bool:
        r = self._bg_derives.get(i)
        if r is None:
            r = self._bg_derives[i] = self._entails((self.bg,), self.atoms[i])
        return r

    def coverage(self, clauses: Sequence[Clause]) -> int:
        """Bitmask of the examples entailed by background plus ``clauses``."""
        nonrec = [c for c in clauses if not c.is_recursive()]
        rec = [c for c in clauses if c.is_recursive()]
        if not rec:
            m = 0
            for c in nonrec:
                m |= self.example_mask(c)
            if self.bg_defines:
                for i in range(self.n_ex):
                    if self._bg_derived(i):
                        m |= 1 << i
            return m
        seen = set(range(self.n_ex))
        frontier = list(seen)
        rev: dict[int, list[int]] = {}
        while frontier:
            a = frontier.pop()
            for c in rec:
                for b in self.requirements(c, a):
                    rev.setdefault(b, []).append(a)
                    if b not in seen:
                        seen.add(b)
                        frontier.append(b)
        derived = set()
        for j in seen:
            if any(self.derives(c, j) for c in nonrec) or (self.bg_defines and self._bg_derived(j)):
                derived.add(j)
        queue = list(derived)
        while queue:
            b = queue.pop()
            for a in rev.get(b, ()):
                if a not in derived:
                    derived.add(a)
                    queue.append(a)
        m = 0
        for j in derived:
            if j < self.n_ex:
                m |= 1 << j
        return m

    def outcome(self, clauses: Sequence[Clause]) -> TestOutcome:
        if not self.bg_defines and not any(c.is_recursive() for c in clauses):
            for c in clauses:
                j = self.neg_hit(c)
                if j is not None:
                    return TestOutcome(None, self.atoms[j])
        m = self.coverage(clauses)
        covered = None
        bad = m & self.neg_mask
        if bad:
            covered = self.atoms[(bad & -bad).bit_length() - 1]
        missed = None
        lacking = ~m & self.pos_mask
        if lacking:
            missed = self.atoms[(lacking & -lacking).bit_length() - 1]
        return TestOutcome(missed, covered)


# ---------------------------------------------------------------------------
# The learning loop


@dataclass(frozen=True)
class SearchLimits:
    max_candidates: int | None = None
    timeout: float | None = None
    budget: QueryBudget = DEFAULT_BUDGET


@dataclass
class LearnResult:
    hypothesis: Program
    status: str  # found | exhausted | budget_exceeded
    tested_count: int = 0
    pruned_count: int = 0
    elapsed: float = 0.0
    target: tuple[str, int] | None = None

    @property
    def found(self) -> bool:
        return self.status == "found"


@lru_cache(maxsize=32)
def _pool_for(bias_text: str, bias: BiasSpec) -> tuple[Clause, ...]:
    return tuple(generate_clauses(bias))


@lru_cache(maxsize=32)
def _relations_for(bias_text: str, bias: BiasSpec) -> PoolRelations:
    return PoolRelations(_pool_for(bias_text, bias))


def clause_pool(bias: BiasSpec) -> tuple[Clause, ...]:
    return _pool_for(format_bias(bias), bias)


def _list_types(bias: BiasSpec) -> set[str] | None:
    """Types that hold proper lists, when lists are only ever shortened by tail/2."""
    decls = {d.key: d for d in bias.body_decls()}
    types = set()
    for key in (("head", 2), ("tail", 2), ("empty", 1)):
        if key in decls:
            types.add(decls[key].types[0])
    if not types:
        return set()
    for d in decls.values():
        if d.key in (("tail", 2), bias.head.key):
            continue
        dirs = d.directions or (OUT,) * d.arity
        if any(t in types and m != IN for t, m in zip(d.types, dirs)):
            return None
    return types


def _templates(bias: BiasSpec, pos_atoms: Sequence[Atom]) -> list[Atom]:
    """Over-approximation of the target atoms a proof of a positive can visit.

    Recursion can only shorten a list argument by ``tail/2``, so list
    positions range over suffixes of the positives' lists; every other
    position is left open.
    """
    list_types = _list_types(bias)
    out: dict[Atom, None] = {}
    counter = 0
    for atom in pos_atoms:
        choices = []
        for t, a in zip(bias.head.types, atom.args):
            if list_types is not None and t in list_types and isinstance(a, tuple):
                choices.append([a[k:] for k in range(len(a) + 1)])
            else:
                counter += 1
                choices.append([Var("_T", counter)])
        for combo in itertools.product(*choices):
            out.setdefault(Atom(atom.pred, combo))
    return list(out)


def learn_target(
    background: Program,
    bias: BiasSpec,
    pos: Sequence[Example | Atom],
    neg: Sequence[Example | Atom],
    limits: SearchLimits = SearchLimits(),
    prune: bool = True,
) -> LearnResult:
    """Find a minimal program that, with ``background``, entails exactly the positives.

    With ``prune=False`` every candidate in the bias space is tested by plain
    SLD resolution in size order with no constraints; this is the reference
    the pruned search is checked against.
    """
    start = time.perf_counter()
    pos_atoms, neg_atoms = _atoms(pos), _atoms(neg)
    if isinstance(pos[0] if pos else None, Example) or isinstance(neg[0] if neg else None, Example):
        check_examples(
            [e for e in pos if isinstance(e, Example)], [e for e in neg if isinstance(e, Example)]
        )
    elif set(pos_atoms) & set(neg_atoms):
        raise ConflictingExamples("an atom is labelled both positive and negative")
    bias_text = format_bias(bias)
    pool = _pool_for(bias_text, bias)
    target = bias.head.key
    budget = limits.budget

    def result(hyp, status, tested, pruned):
        return LearnResult(
            Program(hyp), status, tested, pruned, time.perf_counter() - start, target
        )

    def out_of_time(tested):
        if limits.max_candidates is not None and tested >= limits.max_candidates:
            return True
        return limits.timeout is not None and time.perf_counter() - start > limits.timeout

    if not prune:
        store = ConstraintStore()
        tested = 0
        for cand in enumerate_candidates(bias, store, pool):
            if out_of_time(tested):
                return result((), "budget_exceeded", tested, 0)
            tested += 1
            if test_candidate(background, cand, pos_atoms, neg_atoms, budget).ok:
                return result(cand.clauses, "found", tested, 0)
        return result((), "exhausted", tested, 0)

    relations = _relations_for(bias_text, bias)
    store = ConstraintStore(relations)
    table = CoverageTable(background, target, pos_atoms, neg_atoms, budget, pool, relations)
    pos_mask = table.pos_mask
    templates = _templates(bias, pos_atoms) if bias.recursion else []
    relevant: dict[Clause, int] = {}
    gens = {
        c: tuple(pool[j] for j in sorted(relations.gen[i]) if pool[j].size < c.size)
        for i, c in enumerate(pool)
    }

    def relevant_templates(clause: Clause) -> int:
        # which templates can this clause fire on, ignoring its recursive call?
        r = relevant.get(clause)
        if r is None:
            cand = (1 << len(templates)) - 1
            for g in gens.get(clause, ()):
                cand &= relevant_templates(g)
            if clause.is_recursive():
                stripped = Clause(clause.head, tuple(b for b in clause.body if b.key != target))
            else:
                stripped = clause
            layers = (background, Program([stripped]))
            r = 0
            while cand:
                low = cand & -cand
                t = templates[low.bit_length() - 1]
                try:
                    if answers(layers, t, budget, limit=1):
                        r |= low
                except BudgetExhausted:
                    r |= low
                cand ^= low
            relevant[clause] = r
        return r

    def is_relevant(clause: Clause) -> bool:
        return relevant_templates(clause) != 0

    dominated: dict[Clause, bool] = {}
    consistent_nonrec: list[tuple[int, int]] = []  # (size, positive mask)

    def is_dominated(clause: Clause) -> bool:
        # a strictly smaller consistent clause covering a superset of positives
        d = dominated.get(clause)
        if d is None:
            m = table.example_mask(clause) & pos_mask
            d = any(s < clause.size and (pm & m) == m for s, pm in consistent_nonrec)
            dominated[clause] = d
        return d

    def pool_filter(total: int, clause: Clause, key: str) -> bool:
        if clause.is_recursive():
            return is_relevant(clause)
        if table.neg_hit(clause) is not None:
            return False
        m = table.example_mask(clause)
        if m & pos_mask and not is_dominated(clause):
            return True
        return bias.recursion and is_relevant(clause)

    def accept(cand: Candidate) -> bool:
        if not cand.clauses:
            return True
        rec = [c for c in cand.clauses if c.is_recursive()]
        nonrec = [c for c in cand.clauses if not c.is_recursive()]
        if rec and not nonrec and not table.bg_defines:
            return False  # recursion without a base case derives nothing
        if not rec and len(nonrec) > 1:
            masks = [table.example_mask(c) & pos_mask for c in nonrec]
            for i, m in enumerate(masks):
                others = 0
                for j, o in enumerate(masks):
                    if j != i:
                        others |= o
                if m & ~others == 0 or is_dominated(nonrec[i]):
                    return False
        return True

    tested = 0
    for cand in enumerate_candidates(bias, store, pool, accept=accept, pool_filter=pool_filter):
        if out_of_time(tested):
            return result((), "budget_exceeded", tested, store.pruned_count)
        tested += 1
        try:
            outcome = table.outcome(cand.clauses)
        except _NotTabled:
            outcome = test_candidate(background, cand, pos_atoms, neg_atoms, budget)
        if outcome.ok:
            confirmed = test_candidate(background, cand, pos_atoms, neg_atoms, budget)
            if confirmed.ok:
                logger.debug("found %s after %d candidates", cand.keys, tested)
                return result(cand.clauses, "found", tested, store.pruned_count)
            outcome = confirmed
        if len(cand) == 1 and not cand.clauses[0].is_recursive() and not outcome.too_general:
            consistent_nonrec.append((cand.size, table.example_mask(cand.clauses[0]) & pos_mask))
        if outcome.too_general:
            store.prune_generalisations(cand)
        if outcome.too_specific and not outcome.budget_hit:
            store.prune_specialisations(cand)
        if not outcome.too_general and not outcome.too_specific or outcome.budget_hit:
            store.ban(cand)
    return result((), "exhausted", tested, store.pruned_count)
