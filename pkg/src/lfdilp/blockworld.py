"""A 3x3 block-assembly world.

Sites are named ``s<row><col>`` and read row-major; levels run ``z1`` (ground)
to ``z4``. Towers are lists of blocks read bottom-up. The centre site ``s22``
is the goal anchor.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .inference import DEFAULT_BUDGET as DEFAULT_QUERY_BUDGET
from .logic import Atom, Program, format_atom, parse_program

MATERIALS = ("stone", "brick", "glass", "wood")
COLORS = ("red", "green", "blue", "yellow", "white")
SHAPES = ("cube", "cylinder", "cone")
LEVELS = ("z1", "z2", "z3", "z4")
SITES = tuple(f"s{r}{c}" for r in range(1, 4) for c in range(1, 4))
ANCHOR = "s22"
MATERIAL_LEVEL = dict(zip(MATERIALS, LEVELS))

TRAIN_SITES = ("s21", "s22", "s23")
TEST_SITES = ("s12", "s22", "s32")
TRAIN_BLOCKED = frozenset({"s12", "s32"})
TEST_BLOCKED = frozenset({"s21", "s23"})
TRAIN_HEIGHTS = (3, 3, 2)
TEST_HEIGHTS = (4, 3, 2)

CORRUPTIONS = ("permuted_materials", "bad_site", "distractor_used")


def _coords(site: str) -> tuple[int, int]:
    return int(site[1]), int(site[2])


def site_order(site: str) -> int:
    return SITES.index(site)


def cardinal_pairs() -> list[tuple[str, str]]:
    """Ordered pairs of sites sharing an edge."""
    out = []
    for a, b in itertools.permutations(SITES, 2):
        (r1, c1), (r2, c2) = _coords(a), _coords(b)
        if abs(r1 - r2) + abs(c1 - c2) == 1:
            out.append((a, b))
    return out


def diagonal_pairs() -> list[tuple[str, str]]:
    out = []
    for a, b in itertools.permutations(SITES, 2):
        (r1, c1), (r2, c2) = _coords(a), _coords(b)
        if abs(r1 - r2) == 1 and abs(c1 - c2) == 1:
            out.append((a, b))
    return out


@dataclass(frozen=True, order=True)
class Block:
    id: str
    material: str | None  # None marks a distractor
    color: str
    shape: str

    @property
    def is_distractor(self) -> bool:
        return self.material is None


def block_pool() -> list[Block]:
    """The 60 blocks, one per material/colour/shape combination."""
    combos = itertools.product(MATERIALS, COLORS, SHAPES)
    return [Block(f"b{i:02d}", m, c, s) for i, (m, c, s) in enumerate(combos, 1)]


@dataclass(frozen=True)
class WorldState:
    blocks: tuple[Block, ...]
    occupancy: tuple[tuple[str, str, str], ...] = ()  # (site, level, block id), sorted
    blocked: frozenset = frozenset()
    available: frozenset = frozenset()
    holding: str | None = None

    def __post_init__(self):
        occ = tuple(sorted(self.occupancy, key=lambda t: (site_order(t[0]), t[1])))
        object.__setattr__(self, "occupancy", occ)
        ids = [b for _, _, b in occ] + list(self.available) + ([self.holding] if self.holding else [])
        if len(ids) != len(set(ids)):
            raise ValueError("a block appears more than once in the state")
        cells = {(s, z) for s, z, _ in occ}
        if len(cells) != len(occ):
            raise ValueError("two blocks share a cell")
        for s, z, _ in occ:
            k = LEVELS.index(z)
            if k > 0 and (s, LEVELS[k - 1]) not in cells:
                raise ValueError(f"floating block at {s}/{z}")

    @classmethod
    def initial(cls, blocks: Sequence[Block], blocked: Iterable[str] = ()) -> "WorldState":
        return cls(tuple(blocks), (), frozenset(blocked), frozenset(b.id for b in blocks))

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)

    def at(self, site: str, level: str) -> str | None:
        for s, z, b in self.occupancy:
            if s == site and z == level:
                return b
        return None

    def towers(self) -> dict[str, tuple[str, ...]]:
        """Site -> bottom-up block ids, sites in row-major order."""
        out: dict[str, list[str]] = {}
        for s, z, b in self.occupancy:
            out.setdefault(s, []).append(b)
        return {s: tuple(v) for s, v in out.items()}

    def occupied_sites(self) -> tuple[str, ...]:
        return tuple(self.towers())

    def with_towers(self, towers: Mapping[str, Sequence[str]]) -> "WorldState":
        """Same objects with the grid replaced by ``towers``; unused blocks become available."""
        occ = tuple((s, LEVELS[k], b) for s, bs in towers.items() for k, b in enumerate(bs))
        used = {b for _, _, b in occ}
        avail = frozenset(b.id for b in self.blocks if b.id not in used)
        return WorldState(self.blocks, occ, self.blocked, avail, None)


@dataclass(frozen=True)
class Goal:
    heights: tuple[int, ...]  # required tower heights, sorted descending

    def __post_init__(self):
        object.__setattr__(self, "heights", tuple(sorted(self.heights, reverse=True)))


@dataclass(frozen=True)
class Task:
    id: str
    objects: tuple[Block, ...]
    initial: WorldState
    goal: Goal
    split: str = "train"

    def counts(self) -> dict[str, int]:
        out = {m: 0 for m in MATERIALS}
        out["distractor"] = 0
        for b in self.objects:
            out[b.material or "distractor"] += 1
        return out


@dataclass(frozen=True)
class Demonstration:
    id: str
    states: tuple[WorldState, ...]
    positive: bool
    corruption: str = "none"
    marked: tuple[tuple[str, str], ...] = ()  # cells the corruption touched
    task_id: str = ""

    @property
    def final(self) -> WorldState:
        return self.states[-1]

    @property
    def label(self) -> str:
        return "positive" if self.positive else "negative"


# ---------------------------------------------------------------------------
# Grounding


def static_facts() -> list[Atom]:
    """Ontology and topology facts that do not depend on the state."""
    out = []
    for group in (MATERIALS, COLORS, SHAPES, LEVELS):
        out += [Atom(c, (c,)) for c in group]
    out += [Atom("succ_z", (a, b)) for a, b in zip(LEVELS, LEVELS[1:])]
    out += [Atom("site", (s,)) for s in SITES]
    out += [Atom("adj_h", p) for p in cardinal_pairs()]
    out += [Atom("diagonal_adj", p) for p in diagonal_pairs()]
    out.append(Atom("goal_anchor", (ANCHOR,)))
    return out


def block_facts(blocks: Iterable[Block]) -> list[Atom]:
    out = []
    for b in sorted(blocks):
        out.append(Atom("block", (b.id,)))
        if b.material is not None:
            out.append(Atom("material", (b.id, b.material)))
        out.append(Atom("color", (b.id, b.color)))
        out.append(Atom("shape", (b.id, b.shape)))
    return out


def ground_state(state: WorldState) -> list[Atom]:
    """All ground atoms true in ``state``.

    ``adj_h`` relates sites sharing an edge in the horizontal grid plane,
    ``adj_v`` relates a block to the block resting directly on it.
    """
    out = static_facts() + block_facts(state.blocks)
    out += [Atom("blocked", (s,)) for s in sorted(state.blocked, key=site_order)]
    out += [Atom("at", (b, s, z)) for s, z, b in state.occupancy]
    for tower in state.towers().values():
        out += [Atom("adj_v", (lo, hi)) for lo, hi in zip(tower, tower[1:])]
    out += [Atom("available", (b,)) for b in sorted(state.available)]
    if state.holding:
        out.append(Atom("holding", (state.holding,)))
    return out


def background_for(blocks: Iterable[Block]) -> Program:
    """Background program for learning and planning over ``blocks``."""
    return Program.from_atoms(static_facts() + block_facts(blocks))


# ---------------------------------------------------------------------------
# Ground truth

GROUND_TRUTH = """
target_z(B,Z):- material(B,M), stone(M), z1(Z).
target_z(B,Z):- material(B,M), brick(M), z2(Z).
target_z(B,Z):- material(B,M), glass(M), z3(Z).
target_z(B,Z):- material(B,M), wood(M), z4(Z).
tower_from(List,Z):- head(List,LHead), target_z(LHead,Z), tail(List,LRest), empty(LRest).
tower_from(List,Z):- head(List,LHead), target_z(LHead,Z), tail(List,LRest), succ_z(Z,ZNext), tower_from(LRest,ZNext).
tower_site(L):- empty(L).
tower_site(L):- head(L,S), goal_anchor(S), tail(L,R), tower_site(R).
tower_site(L):- head(L,S), goal_anchor(A), adj_h(A,S), tail(L,R), tower_site(R).
"""

WOOD_RULE = "target_z(B,Z):- material(B,M), wood(M), z4(Z).\n"


def ground_truth_program() -> Program:
    return parse_program(GROUND_TRUTH)


def wood_rule() -> Program:
    return parse_program(WOOD_RULE)


# ---------------------------------------------------------------------------
# Sampling


def sample_experiment(seed: int) -> tuple[list[Task], Task]:
    """Split the 60-block pool into four training tasks and one test task."""
    rng = random.Random(f"experiment:{seed}")
    by_mat = {m: [b for b in block_pool() if b.material == m] for m in MATERIALS}
    for m in MATERIALS:
        rng.shuffle(by_mat[m])

    def take(m, n):
        out, by_mat[m] = by_mat[m][:n], by_mat[m][n:]
        return out

    groups = []
    for _ in range(5):
        groups.append(take("stone", 3) + take("brick", 3) + take("glass", 2))
    groups[4] += take("wood", 1)
    leftovers = by_mat["glass"] + by_mat["wood"]
    rng.shuffle(leftovers)
    distractors = [replace(b, material=None) for b in leftovers]
    for k in range(4):
        groups[k] += distractors[4 * k : 4 * k + 4]
    groups[4] += distractors[16:19]

    train = []
    for k in range(4):
        blocks = tuple(sorted(groups[k]))
        train.append(
            Task(
                f"seed{seed}-train{k}",
                blocks,
                WorldState.initial(blocks, TRAIN_BLOCKED),
                Goal(TRAIN_HEIGHTS),
                "train",
            )
        )
    blocks = tuple(sorted(groups[4]))
    test = Task(
        f"seed{seed}-test", blocks, WorldState.initial(blocks, TEST_BLOCKED), Goal(TEST_HEIGHTS), "test"
    )
    return train, test


# ---------------------------------------------------------------------------
# Demonstrations


@dataclass(frozen=True)
class DemoConfig:
    positives: int = 6  # planner runs with different block and tower orders
    all_permutations: bool = True  # False: adjacent swaps only
    distractors_per_level: int | None = None  # None: every distractor
    max_moved_towers: int = 3  # bad-site corruptions move up to this many towers


class UnsolvableTask(RuntimeError):
    pass


def _trajectory(task: Task, plan) -> tuple[WorldState, ...]:
    from .planner import apply_transition

    states = [task.initial]
    for action in plan.actions:
        states.append(apply_transition(states[-1], action))
    return tuple(states)


def _reorder_towers(plan, order: Sequence[int]):
    from .planner import Plan

    site_of = {}
    for a in plan.actions:
        if a.kind == "place":
            site_of[a.block] = a.site
    per_site: dict[str, list] = {s: [] for s, _ in plan.towers}
    for a in plan.actions:
        per_site[site_of[a.block]].append(a)
    sites = [plan.towers[k][0] for k in order]
    actions = tuple(a for s in sites for a in per_site[s])
    return Plan(actions, plan.towers)


def violates(state: WorldState, corruption: str, rules: Program) -> bool:
    """Whether ``state`` breaks the rule the corruption class is about."""
    from .planner import _Oracle

    oracle = _Oracle(state.blocks, rules, DEFAULT_QUERY_BUDGET)
    if corruption == "bad_site":
        return not oracle.site_ok(state.occupied_sites())
    return not all(oracle.tower_ok(t) for t in state.towers().values())


def generate_demonstrations(
    task: Task, hgt: Program | None = None, seed: int = 0, config: DemoConfig = DemoConfig()
) -> list[Demonstration]:
    """Positive trajectories from the planner plus single corrupted states.

    Material permutations and distractor substitutions corrupt final states;
    bad-site corruptions move towers to free diagonal sites in every
    trajectory state where the hand is empty.
    """
    from .planner import check_goal, plan

    rules = hgt if hgt is not None else ground_truth_program()
    rng = random.Random(f"demos:{seed}:{task.id}")
    ids = [b.id for b in task.objects]
    positives: list[Demonstration] = []
    seen = set()
    attempts = 0
    while len(positives) < config.positives and attempts < 20 * config.positives:
        first = attempts == 0
        order = list(ids) if first else rng.sample(ids, len(ids))
        attempts += 1
        result = plan(task, rules, block_order=order)
        if result is None:
            raise UnsolvableTask(task.id)
        n = len(result.towers)
        tower_order = list(range(n)) if first else rng.sample(range(n), n)
        states = _trajectory(task, _reorder_towers(result, tower_order))
        if states in seen:
            continue
        seen.add(states)
        if not check_goal(states[-1], task.goal, rules):
            raise AssertionError("planner produced a non-goal state")
        positives.append(Demonstration(f"{task.id}-p{len(positives)}", states, True, task_id=task.id))
    if not positives:
        raise UnsolvableTask(task.id)

    negatives: list[Demonstration] = []
    distractors = [b.id for b in task.objects if b.is_distractor]
    free_diagonals = [s for s in SITES if _is_diagonal_site(s) and s not in task.initial.blocked]
    seen_states = {d.final for d in positives}

    def add(state, corruption, marked):
        if state in seen_states or not violates(state, corruption, rules):
            return
        seen_states.add(state)
        negatives.append(
            Demonstration(
                f"{task.id}-n{len(negatives)}", (state,), False, corruption, tuple(marked), task.id
            )
        )

    for demo in positives:
        final = demo.final
        towers = final.towers()
        for site, blocks in towers.items():
            if config.all_permutations:
                perms = [p for p in itertools.permutations(blocks) if p != blocks]
            else:
                perms = []
                for k in range(len(blocks) - 1):
                    p = list(blocks)
                    p[k], p[k + 1] = p[k + 1], p[k]
                    perms.append(tuple(p))
            for p in perms:
                marked = [(site, LEVELS[k]) for k in range(len(p)) if p[k] != blocks[k]]
                add(final.with_towers({**towers, site: p}), "permuted_materials", marked)
        for site, blocks in towers.items():
            for k in range(len(blocks)):
                pool = distractors
                if config.distractors_per_level is not None:
                    pool = rng.sample(distractors, min(config.distractors_per_level, len(distractors)))
                for d in pool:
                    p = list(blocks)
                    p[k] = d
                    add(final.with_towers({**towers, site: tuple(p)}), "distractor_used", [(site, LEVELS[k])])
    site_lists = set()
    for demo in positives:
        for state in demo.states:
            towers = state.towers()
            if state.holding is not None or not towers:
                continue
            sites = list(towers)
            for r in range(1, min(config.max_moved_towers, len(sites)) + 1):
                for moved_sites in itertools.combinations(sites, r):
                    for diags in itertools.permutations(free_diagonals, r):
                        where = dict(zip(moved_sites, diags))
                        moved = {where.get(s, s): bs for s, bs in towers.items()}
                        moved = dict(sorted(moved.items(), key=lambda kv: site_order(kv[0])))
                        marked = [(where[s], LEVELS[k]) for s in moved_sites for k in range(len(towers[s]))]
                        if tuple(moved) not in site_lists:
                            site_lists.add(tuple(moved))
                            add(state.with_towers(moved), "bad_site", marked)
    return positives + negatives


def _is_diagonal_site(site: str) -> bool:
    r, c = _coords(site)
    return abs(r - 2) == 1 and abs(c - 2) == 1


def subsample(
    demos: Sequence[Demonstration],
    rates: Mapping[str, float],
    seed: int,
    target: str,
) -> list[Demonstration]:
    """Keep every positive and a seeded fraction of each negative class.

    Each target draws from its own offset into the seeded stream, so the
    subsets differ between targets but are stable across runs.
    """
    for r in rates.values():
        if not 0.0 <= r <= 1.0:
            raise ValueError("sampling rates must lie in [0, 1]")
    offset = _stable_offset(target)
    rng = random.Random(seed)
    for _ in range(offset):
        rng.random()
    out = []
    for d in demos:
        if d.positive:
            out.append(d)
            continue
        rate = rates.get(d.corruption, 1.0)
        u = rng.random()
        if rate >= 1.0 or u < rate:
            out.append(d)
    return out


def _stable_offset(name: str) -> int:
    import zlib

    return zlib.crc32(name.encode()) % 997


# ---------------------------------------------------------------------------
# Serialisation


def _state_to_text(state: WorldState) -> str:
    return "".join(format_atom(a) + ".\n" for a in ground_state(state))


def state_from_atoms(atoms: Iterable[Atom]) -> WorldState:
    props: dict[str, dict[str, str]] = {}
    occ, blocked, avail, holding = [], set(), set(), None
    for a in atoms:
        p = a.pred
        if p == "block":
            props.setdefault(a.args[0], {})
        elif p in ("material", "color", "shape"):
            props.setdefault(a.args[0], {})[p] = a.args[1]
        elif p == "at":
            occ.append((a.args[1], a.args[2], a.args[0]))
        elif p == "blocked":
            blocked.add(a.args[0])
        elif p == "available":
            avail.add(a.args[0])
        elif p == "holding":
            holding = a.args[0]
    blocks = tuple(
        sorted(Block(i, d.get("material"), d["color"], d["shape"]) for i, d in props.items())
    )
    return WorldState(blocks, tuple(occ), frozenset(blocked), frozenset(avail), holding)


def save_dataset(directory: str | Path, tasks: Sequence[Task], demos: Sequence[Demonstration], meta: Mapping[str, object] = {}) -> Path:
    """Write one facts file per demonstration plus a key=value manifest."""
    root = Path(directory)
    (root / "demos").mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}" for k, v in sorted(meta.items())]
    for t in tasks:
        lines.append(
            f"task={t.id} split={t.split} goal={','.join(map(str, t.goal.heights))} "
            f"blocked={','.join(sorted(t.initial.blocked, key=site_order))} "
            f"blocks={','.join(b.id for b in t.objects)}"
        )
        (root / f"{t.id}.pl").write_text(_state_to_text(t.initial))
    for d in demos:
        body = "".join(f"% state {k}\n" + _state_to_text(s) for k, s in enumerate(d.states))
        (root / "demos" / f"{d.id}.pl").write_text(body)
        marked = ";".join(f"{s}/{z}" for s, z in d.marked)
        lines.append(
            f"demo={d.id} task={d.task_id} label={d.label} corruption={d.corruption} "
            f"states={len(d.states)} marked={marked}"
        )
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    return root


def _kv(line: str) -> dict[str, str]:
    return dict(part.split("=", 1) for part in line.split())


def load_dataset(directory: str | Path) -> tuple[list[Task], list[Demonstration], dict[str, str]]:
    root = Path(directory)
    tasks, demos, meta = [], [], {}
    for line in (root / "manifest.txt").read_text().splitlines():
        if not line.strip():
            continue
        kv = _kv(line)
        if "task" in kv and "split" in kv:
            state = state_from_atoms(parse_program((root / f"{kv['task']}.pl").read_text()).atoms())
            heights = tuple(int(h) for h in kv["goal"].split(",") if h)
            tasks.append(Task(kv["task"], state.blocks, state, Goal(heights), kv["split"]))
        elif "demo" in kv:
            text = (root / "demos" / f"{kv['demo']}.pl").read_text()
            chunks = [c for c in text.split("% state ")[1:]]
            states = tuple(
                state_from_atoms(parse_program(c.split("\n", 1)[1]).atoms()) for c in chunks
            )
            marked = tuple(
                tuple(m.split("/")) for m in kv.get("marked", "").split(";") if m
            )
            demos.append(
                Demonstration(
                    kv["demo"], states, kv["label"] == "positive", kv["corruption"], marked, kv["task"]
                )
            )
        else:
            meta.update(kv)
    return tasks, demos, meta
