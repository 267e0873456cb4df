"""Learning an ordered list of targets, each one reusing the ones before it."""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .blockworld import LEVELS, Demonstration
from .hypothesis import BiasSpec, parse_bias
from .inference import BUILTINS
from .learner import Example, LearnResult, SearchLimits, learn_target
from .logic import Atom, Program, parse_program


class ExtractionConflict(ValueError):
    pass


class DependencyViolation(ValueError):
    pass


@dataclass(frozen=True)
class TargetSpec:
    predicate: tuple[str, int]
    bias: BiasSpec
    extractor: str

    @property
    def name(self) -> str:
        return self.predicate[0]


@dataclass
class CurriculumResult:
    per_target: dict[str, LearnResult]
    final_background: Program
    final_hypothesis: Program
    injected: Program = field(default_factory=Program)
    examples: dict[str, tuple[list[Example], list[Example]]] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(r.found for r in self.per_target.values())

    def hypothesis_for(self, target: str) -> Program:
        return self.final_hypothesis.restrict(target)


# ---------------------------------------------------------------------------
# Example extraction

Extractor = Callable[[Demonstration], tuple[list[Atom], list[Atom]]]


def _marked_blocks(demo: Demonstration) -> list[tuple[str, str]]:
    final = demo.final
    out = []
    for site, level in demo.marked:
        b = final.at(site, level)
        if b is not None:
            out.append((b, level))
    return out


def extract_target_z(demo: Demonstration, distractors: bool = True) -> tuple[list[Atom], list[Atom]]:
    """Block/level pairs: every placement in a valid demo, the corrupted ones in an invalid one."""
    if demo.positive:
        pos = []
        for state in demo.states:
            pos += [Atom("target_z", (b, z)) for _, z, b in state.occupancy]
        return pos, []
    if demo.corruption not in ("permuted_materials", "distractor_used"):
        return [], []
    if demo.corruption == "distractor_used" and not distractors:
        return [], []
    return [], [Atom("target_z", (b, z)) for b, z in _marked_blocks(demo)]


def extract_tower_from(demo: Demonstration) -> tuple[list[Atom], list[Atom]]:
    """Bottom-up block lists starting at z1, one per tower."""
    if demo.positive:
        pos = []
        for state in demo.states:
            pos += [Atom("tower_from", (t, LEVELS[0])) for t in state.towers().values()]
        return pos, []
    if demo.corruption not in ("permuted_materials", "distractor_used"):
        return [], []
    sites = {s for s, _ in demo.marked}
    towers = demo.final.towers()
    return [], [Atom("tower_from", (towers[s], LEVELS[0])) for s in towers if s in sites]


def extract_tower_site(demo: Demonstration) -> tuple[list[Atom], list[Atom]]:
    """Occupied site lists in row-major order; a misplaced demo labels its whole list negative."""
    if demo.positive:
        return [Atom("tower_site", (s.occupied_sites(),)) for s in demo.states], []
    if demo.corruption != "bad_site":
        return [], []
    return [], [Atom("tower_site", (demo.final.occupied_sites(),))]


EXTRACTORS: dict[str, Extractor] = {
    "target_z": extract_target_z,
    "target_z_materials_only": lambda d: extract_target_z(d, distractors=False),
    "tower_from": extract_tower_from,
    "tower_site": extract_tower_site,
}


def extract_examples(
    demos: Iterable[Demonstration], target: TargetSpec, background: Program | None = None
) -> tuple[list[Example], list[Example]]:
    """Labelled examples for ``target``, deduplicated, in first-seen order."""
    try:
        extractor = EXTRACTORS[target.extractor]
    except KeyError:
        raise ValueError(f"unknown extractor {target.extractor!r}") from None
    pos: dict[Atom, Example] = {}
    neg: dict[Atom, Example] = {}
    for demo in demos:
        p, n = extractor(demo)
        for a in p:
            pos.setdefault(a, Example(a, True, demo.id))
        for a in n:
            neg.setdefault(a, Example(a, False, demo.id))
    clash = set(pos) & set(neg)
    if clash:
        a = min(clash)
        raise ExtractionConflict(
            f"{a} is positive in {pos[a].provenance} and negative in {neg[a].provenance}"
        )
    return list(pos.values()), list(neg.values())


def sample_examples(
    pos: Sequence[Example], neg: Sequence[Example], n: int, seed: int, target: str
) -> tuple[list[Example], list[Example]]:
    """``n`` examples drawn at random, keeping the positive/negative ratio of the pool.

    At least one positive is kept whenever ``n > 0``. The draw depends only on
    ``(seed, target)``, and a larger ``n`` extends the sample for a smaller one.
    """
    total = len(pos) + len(neg)
    n = max(0, min(n, total))
    if n == 0:
        return [], []
    n_pos = max(1, round(n * len(pos) / total)) if pos else 0
    n_pos = min(n_pos, len(pos))
    n_neg = min(n - n_pos, len(neg))
    n_pos = min(len(pos), n - n_neg)
    rng = random.Random(f"{seed}:{zlib.crc32(target.encode())}")
    pi = list(range(len(pos)))
    ni = list(range(len(neg)))
    rng.shuffle(pi)
    rng.shuffle(ni)
    return [pos[i] for i in sorted(pi[:n_pos])], [neg[i] for i in sorted(ni[:n_neg])]


# ---------------------------------------------------------------------------
# The curriculum


def inject_knowledge(background: Program, clauses: Program) -> Program:
    return background.union(clauses)


def check_dependencies(
    background: Program, targets: Sequence[TargetSpec], injections: Mapping[str, Program] = {}
):
    later = {t.predicate: t.name for t in targets}
    known = set(background.predicates()) | set(BUILTINS)
    for t in targets:
        later.pop(t.predicate, None)
        known |= injections.get(t.name, Program()).predicates()
        for key in sorted(t.bias.body_predicates()):
            if key in later:
                raise DependencyViolation(f"{t.name} uses {key[0]}/{key[1]}, which is learned later")
            if key not in known:
                raise DependencyViolation(f"{t.name} uses {key[0]}/{key[1]}, which nothing defines")
        known.add(t.predicate)


def run_curriculum(
    initial_background: Program,
    targets: Sequence[TargetSpec],
    demos: Sequence[Demonstration] = (),
    injections: Mapping[str, Program] = {},
    limits: SearchLimits = SearchLimits(),
    examples: Mapping[str, tuple[Sequence[Example], Sequence[Example]]] | None = None,
) -> CurriculumResult:
    """Learn ``targets`` in order, adding each hypothesis to the background.

    ``injections[name]`` is added to the background just before ``name`` is
    learned. ``examples`` overrides extraction for the targets it names.
    Stops at the first target that is not learned.
    """
    check_dependencies(initial_background, targets, injections)
    background = initial_background
    hypothesis = Program()
    injected = Program()
    per_target: dict[str, LearnResult] = {}
    used: dict[str, tuple[list[Example], list[Example]]] = {}
    for t in targets:
        extra = injections.get(t.name)
        if extra:
            background = inject_knowledge(background, extra)
            injected = injected.union(extra)
        if examples is not None and t.name in examples:
            pos, neg = (list(x) for x in examples[t.name])
        else:
            pos, neg = extract_examples(demos, t, background)
        used[t.name] = (pos, neg)
        result = learn_target(background, t.bias, pos, neg, limits)
        per_target[t.name] = result
        if not result.found:
            break
        hypothesis = hypothesis.union(result.hypothesis)
        background = background.union(result.hypothesis)
    return CurriculumResult(per_target, background, hypothesis, injected, used)


# ---------------------------------------------------------------------------
# Configuration

DATA = resources.files("lfdilp") / "data"


def load_bias(name_or_path: str | Path) -> BiasSpec:
    path = Path(name_or_path)
    if not path.exists():
        path = Path(str(DATA / Path(name_or_path).name))
    return parse_bias(path.read_text())


def default_targets() -> list[TargetSpec]:
    return [
        TargetSpec(("target_z", 2), load_bias("target_z.bias"), "target_z"),
        TargetSpec(("tower_from", 2), load_bias("tower_from.bias"), "tower_from"),
        TargetSpec(("tower_site", 1), load_bias("tower_site.bias"), "tower_site"),
    ]


def default_injections() -> dict[str, Program]:
    return {"tower_from": parse_program((DATA / "wood.pl").read_text())}


def parse_curriculum(text: str, base: Path | None = None) -> tuple[list[TargetSpec], dict[str, Program]]:
    """Read ``target name/arity bias=<file> extractor=<name> [inject=<file>]`` lines."""
    targets, injections = [], {}

    def resolve(p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and base is not None and (base / path).exists():
            return base / path
        if path.exists():
            return path
        return Path(str(DATA / path.name))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "target" or len(parts) < 2 or "/" not in parts[1]:
            raise ValueError(f"line {lineno}: expected 'target name/arity key=value ...'")
        name, arity = parts[1].split("/")
        kv = dict(p.split("=", 1) for p in parts[2:])
        if "bias" not in kv:
            raise ValueError(f"line {lineno}: missing bias=")
        bias = parse_bias(resolve(kv["bias"]).read_text())
        if bias.head.key != (name, int(arity)):
            raise ValueError(f"line {lineno}: bias head {bias.head.key} does not match {parts[1]}")
        targets.append(TargetSpec((name, int(arity)), bias, kv.get("extractor", name)))
        if "inject" in kv:
            injections[name] = parse_program(resolve(kv["inject"]).read_text())
    return targets, injections
