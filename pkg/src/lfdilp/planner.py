"""Pick-and-place planning constrained by a rule set.

The planner only ever asks three questions of the rules: which site lists
satisfy ``tower_site/1``, which blocks sit at which level (``target_z/2``),
and which bottom-up block lists satisfy ``tower_from(List, z1)``. Any program
defining those predicates can drive it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .blockworld import LEVELS, SITES, Block, Goal, Task, WorldState, background_for
from .inference import DEFAULT_BUDGET, BudgetExhausted, QueryBudget, entails
from .logic import Atom, Program, format_atom, parse_program


class InapplicableAction(ValueError):
    pass


class PlanningBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanAction:
    kind: str  # pick | place
    block: str
    site: str | None = None
    level: str | None = None

    def to_atom(self) -> Atom:
        if self.kind == "pick":
            return Atom("pick", (self.block,))
        return Atom("place", (self.block, self.site, self.level))


@dataclass(frozen=True)
class Plan:
    actions: tuple[PlanAction, ...]
    towers: tuple[tuple[str, tuple[str, ...]], ...]  # (site, bottom-up blocks)

    def to_text(self) -> str:
        return "".join(format_atom(a.to_atom()) + ".\n" for a in self.actions)

    @classmethod
    def from_text(cls, text: str) -> "Plan":
        actions = []
        towers: dict[str, list[str]] = {}
        for atom in parse_program(text).atoms():
            if atom.pred == "pick":
                actions.append(PlanAction("pick", atom.args[0]))
            elif atom.pred == "place":
                b, s, z = atom.args
                actions.append(PlanAction("place", b, s, z))
                towers.setdefault(s, []).append(b)
            else:
                raise ValueError(f"unknown action {atom.pred}")
        return cls(tuple(actions), tuple((s, tuple(bs)) for s, bs in towers.items()))


def apply_transition(state: WorldState, action: PlanAction) -> WorldState:
    if action.kind == "pick":
        if state.holding is not None:
            raise InapplicableAction(f"hand not empty (holding {state.holding})")
        if action.block not in state.available:
            raise InapplicableAction(f"{action.block} is not available")
        return WorldState(
            state.blocks, state.occupancy, state.blocked, state.available - {action.block}, action.block
        )
    if action.kind != "place":
        raise InapplicableAction(f"unknown action kind {action.kind!r}")
    if state.holding != action.block:
        raise InapplicableAction(f"{action.block} is not in hand")
    if action.site not in SITES or action.level not in LEVELS:
        raise InapplicableAction(f"no cell {action.site}/{action.level}")
    if action.site in state.blocked:
        raise InapplicableAction(f"site {action.site} is blocked")
    if state.at(action.site, action.level) is not None:
        raise InapplicableAction(f"cell {action.site}/{action.level} is occupied")
    k = LEVELS.index(action.level)
    if k > 0 and state.at(action.site, LEVELS[k - 1]) is None:
        raise InapplicableAction(f"no support below {action.site}/{action.level}")
    occ = state.occupancy + ((action.site, action.level, action.block),)
    return WorldState(state.blocks, occ, state.blocked, state.available, None)


@lru_cache(maxsize=256)
def _facts(blocks: tuple[Block, ...]) -> Program:
    return background_for(blocks)


class _Oracle:
    """Memoised rule queries for one (objects, rules) pair."""

    def __init__(self, blocks: Sequence[Block], rules: Program, budget: QueryBudget):
        self.layers = (_facts(tuple(sorted(blocks))), rules)
        self.budget = budget
        self.memo: dict[Atom, bool] = {}
        self.queries = 0

    def holds(self, atom: Atom) -> bool:
        r = self.memo.get(atom)
        if r is None:
            self.queries += 1
            try:
                r = entails(self.layers, atom, self.budget)
            except BudgetExhausted:
                r = False
            self.memo[atom] = r
        return r

    def site_ok(self, sites: Sequence[str]) -> bool:
        return self.holds(Atom("tower_site", (tuple(sites),)))

    def tower_ok(self, blocks: Sequence[str]) -> bool:
        return self.holds(Atom("tower_from", (tuple(blocks), "z1")))

    def level_ok(self, block: str, level: str) -> bool:
        return self.holds(Atom("target_z", (block, level)))


def check_goal(state: WorldState, goal: Goal, rules: Program, budget: QueryBudget = DEFAULT_BUDGET) -> bool:
    oracle = _Oracle(state.blocks, rules, budget)
    towers = state.towers()
    if tuple(sorted((len(t) for t in towers.values()), reverse=True)) != goal.heights:
        return False
    if not all(oracle.tower_ok(t) for t in towers.values()):
        return False
    return oracle.site_ok(state.occupied_sites())


def plan(
    task: Task,
    rules: Program,
    budget: QueryBudget = DEFAULT_BUDGET,
    block_order: Sequence[str] | None = None,
    max_checks: int = 200_000,
) -> Plan | None:
    """First goal-reaching plan in enumeration order, or None if there is none.

    Site lists are tried as row-major combinations of unblocked sites; the
    required heights, tallest first, go to the chosen sites in order. Blocks
    for each level are tried with those the rules place at that level first.
    Raises :class:`PlanningBudgetExceeded` after ``max_checks`` rule queries.
    """
    state = task.initial
    heights = task.goal.heights
    if not heights:
        return Plan((), ())
    oracle = _Oracle(task.objects, rules, budget)

    def tick():
        if oracle.queries > max_checks:
            raise PlanningBudgetExceeded(f"more than {max_checks} rule queries")

    free = [s for s in SITES if s not in state.blocked]
    sites = None
    for combo in itertools.combinations(free, len(heights)):
        tick()
        if oracle.site_ok(combo):
            sites = combo
            break
    if sites is None:
        return None

    order = list(block_order) if block_order is not None else sorted(state.available)
    order = [b for b in order if b in state.available]

    def lists(h: int, remaining: frozenset, prefix: tuple) -> Iterator[tuple]:
        if len(prefix) == h:
            tick()
            if oracle.tower_ok(prefix):
                yield prefix
            return
        level = LEVELS[len(prefix)] if len(prefix) < len(LEVELS) else None
        cands = [b for b in order if b in remaining]
        if level is not None:
            cands.sort(key=lambda b: not oracle.level_ok(b, level))
        for b in cands:
            yield from lists(h, remaining - {b}, prefix + (b,))

    failed: set[tuple[int, frozenset]] = set()

    def assign(i: int, remaining: frozenset) -> list[tuple] | None:
        if i == len(heights):
            return []
        if (i, remaining) in failed:
            return None
        if heights[i] > len(LEVELS) or heights[i] > len(remaining):
            failed.add((i, remaining))
            return None
        for lst in lists(heights[i], remaining, ()):
            rest = assign(i + 1, remaining - set(lst))
            if rest is not None:
                return [lst] + rest
        failed.add((i, remaining))
        return None

    chosen = assign(0, frozenset(order))
    if chosen is None:
        return None
    actions = []
    for site, blocks in zip(sites, chosen):
        for k, b in enumerate(blocks):
            actions.append(PlanAction("pick", b))
            actions.append(PlanAction("place", b, site, LEVELS[k]))
    return Plan(tuple(actions), tuple(zip(sites, chosen)))


def replay(task: Task, p: Plan) -> WorldState:
    state = task.initial
    for a in p.actions:
        state = apply_transition(state, a)
    return state
