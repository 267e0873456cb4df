"""Experiment runner: repetitions over seeds, evaluation, demo-count sweeps."""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .blockworld import (
    CORRUPTIONS,
    LEVELS,
    MATERIALS,
    SITES,
    Block,
    DemoConfig,
    Demonstration,
    Task,
    background_for,
    generate_demonstrations,
    ground_truth_program,
    sample_experiment,
    subsample,
    wood_rule,
)
from .curriculum import (
    TargetSpec,
    default_injections,
    default_targets,
    extract_examples,
    parse_curriculum,
    run_curriculum,
    sample_examples,
)
from .inference import QueryBudget, ListDomain, Universe, derivable_closure
from .learner import Example, SearchLimits, learn_target
from .logic import Program, canonical_program_key, format_program
from .planner import PlanningBudgetExceeded, check_goal, plan, replay

logger = logging.getLogger(__name__)

TARGET_NAMES = ("target_z", "tower_from", "tower_site")
OPERATING_COUNTS = {"target_z": 34, "tower_from": 129, "tower_site": 46}
CURATED_COUNTS = {"target_z": 13, "tower_from": 50, "tower_site": 14}
DEFAULT_GRID = (5, 10, 15, 20, 30, 40, 50, 60, 80, 100, 129, 160, 209)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    rates: dict[str, float] = field(default_factory=lambda: {c: 1.0 for c in CORRUPTIONS})
    demo_counts: dict[str, int] | None = field(default_factory=lambda: dict(OPERATING_COUNTS))
    curated: bool = False
    sweep_grid: list[int] = field(default_factory=lambda: list(DEFAULT_GRID))
    curriculum: str | None = None  # curriculum file; None uses the packaged one
    positives_per_task: int = 6
    max_depth: int = 100
    max_steps: int = 100_000
    timeout: float | None = 300.0
    out: str = "results"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_mapping(data)

    def validate(self):
        if any(not 0.0 <= r <= 1.0 for r in self.rates.values()):
            raise ConfigError("rates must lie in [0, 1]")
        if list(self.sweep_grid) != sorted(self.sweep_grid):
            raise ConfigError("sweep grid must be sorted ascending")
        if self.demo_counts is not None and any(v < 0 for v in self.demo_counts.values()):
            raise ConfigError("demo counts must be non-negative")

    @property
    def budget(self) -> QueryBudget:
        return QueryBudget(self.max_depth, self.max_steps)

    @property
    def limits(self) -> SearchLimits:
        return SearchLimits(timeout=self.timeout, budget=self.budget)

    def targets(self) -> tuple[list[TargetSpec], dict[str, Program]]:
        if self.curriculum is None:
            return default_targets(), default_injections()
        path = Path(self.curriculum)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read curriculum {path}: {e}") from e
        return parse_curriculum(text, path.parent)


# ---------------------------------------------------------------------------
# Evaluation


def experiment_blocks(seed: int) -> tuple[Block, ...]:
    train, test = sample_experiment(seed)
    return tuple(sorted(b for t in train + [test] for b in t.objects))


def _representatives(blocks: Sequence[Block]) -> tuple[str, ...]:
    """One block per material plus one distractor."""
    out = []
    for m in MATERIALS + (None,):
        for b in blocks:
            if b.material == m:
                out.append(b.id)
                break
    return tuple(out)


def evaluation_universe(target: str, blocks: Sequence[Block]) -> Universe:
    """Finite set of atoms over which programs are compared.

    Blocks enter ``tower_from`` only through ``target_z`` and identity, so its
    lists range over one representative per material class (with repeats).
    """
    if target == "target_z":
        return Universe((tuple(b.id for b in blocks), LEVELS))
    if target == "tower_from":
        return Universe((ListDomain(_representatives(blocks), 4, 1, repeat=True), LEVELS))
    if target == "tower_site":
        return Universe((ListDomain(SITES, 4, 0),))
    raise ValueError(f"no evaluation universe for {target}")


_closure_cache: dict = {}


def _closure(rules: Program, target: str, blocks: tuple[Block, ...], budget: QueryBudget) -> frozenset:
    # the closure depends on the rules for the target and what they call
    key = (target, canonical_program_key(rules), blocks, budget)
    hit = _closure_cache.get(key)
    if hit is None:
        arity = 1 if target == "tower_site" else 2
        layers = (background_for(blocks), rules)
        hit = derivable_closure(layers, target, arity, evaluation_universe(target, blocks), budget)
        _closure_cache[key] = hit
    return hit


def hybrid_rules(learned: Program, target: str, hgt: Program) -> Program:
    """Learned clauses for ``target`` with ground truth for every other target."""
    own = learned.restrict(target)
    if target == "target_z":
        own = own.union(wood_rule())
    return hgt.without(target).union(own)


def goal_satisfied(task: Task, rules: Program, hgt: Program, budget: QueryBudget) -> bool:
    """The planner finds a plan under ``rules`` whose outcome meets the true goal."""
    try:
        p = plan(task, rules, budget)
    except PlanningBudgetExceeded:
        return False
    if p is None:
        return False
    return check_goal(replay(task, p), task.goal, hgt, budget)


def evaluate_target(
    learned: Program,
    target: str,
    hgt: Program,
    task: Task,
    blocks: Sequence[Block],
    budget: QueryBudget = QueryBudget(),
) -> tuple[bool, bool]:
    """(goal satisfied on ``task``, extensionally equal to ground truth for ``target``)."""
    rules = hybrid_rules(learned, target, hgt)
    blocks = tuple(sorted(blocks))
    match = _closure(rules, target, blocks, budget) == _closure(hgt, target, blocks, budget)
    return goal_satisfied(task, rules, hgt, budget), match


def evaluate_all(
    learned: Program, hgt: Program, task: Task, blocks: Sequence[Block], budget: QueryBudget = QueryBudget()
) -> tuple[bool, bool]:
    """Both metrics for the union of the learned clauses of every target."""
    rules = learned.union(wood_rule())
    blocks = tuple(sorted(blocks))
    match = all(
        _closure(rules, t, blocks, budget) == _closure(hgt, t, blocks, budget) for t in TARGET_NAMES
    )
    return goal_satisfied(task, rules, hgt, budget), match


# ---------------------------------------------------------------------------
# Example sets


def task_examples(
    task: Task, demos: Sequence[Demonstration], targets: Sequence[TargetSpec], config: ExperimentConfig, seed: int
) -> dict[str, tuple[list[Example], list[Example]]]:
    """Per-target example pools after stratified subsampling of the demonstrations."""
    out = {}
    for t in targets:
        kept = subsample(demos, config.rates, seed, t.name)
        out[t.name] = extract_examples(kept, t)
    return out


def limit_examples(
    pools: Mapping[str, tuple[list[Example], list[Example]]], counts: Mapping[str, int] | int | None, seed: int, task_id: str
) -> tuple[dict[str, tuple[list[Example], list[Example]]], dict[str, bool]]:
    """Draw the requested number of examples per target; flags report capped counts."""
    out, capped = {}, {}
    for name, (pos, neg) in pools.items():
        n = counts if isinstance(counts, int) else (counts or {}).get(name)
        if n is None:
            out[name], capped[name] = (pos, neg), False
            continue
        capped[name] = n > len(pos) + len(neg)
        out[name] = sample_examples(pos, neg, n, seed, f"{task_id}:{name}")
    return out, capped


def curate_examples(
    target: TargetSpec,
    background: Program,
    own: tuple[Sequence[Example], Sequence[Example]],
    reserve: tuple[Sequence[Example], Sequence[Example]],
    size: int,
    is_correct,
    seed: int,
    limits: SearchLimits = SearchLimits(),
) -> tuple[list[Example], list[Example]] | None:
    """A small example set from which the learner recovers a correct program.

    Starting from one positive, the example the current hypothesis gets
    wrong is added until the hypothesis passes ``is_correct``; examples from
    the task's own pool are preferred, ``reserve`` is drawn on only when the
    own pool has no counterexample left. The set is then padded to ``size``
    from the own pool. Returns None when no such set of at most ``size``
    examples exists in the pools.
    """
    rng = random.Random(f"curate:{seed}:{target.name}")
    own_pos, own_neg = list(own[0]), list(own[1])
    rng.shuffle(own_pos)
    rng.shuffle(own_neg)
    res_pos, res_neg = list(reserve[0]), list(reserve[1])
    rng.shuffle(res_pos)
    rng.shuffle(res_neg)
    if not own_pos:
        return None
    pos, neg = [own_pos[0]], []
    from .learner import test_candidate

    while len(pos) + len(neg) <= size:
        result = learn_target(background, target.bias, pos, neg, limits)
        if not result.found:
            return None
        hyp = result.hypothesis
        counter = None
        for pool_pos, pool_neg in ((own_pos, own_neg), (res_pos, res_neg)):
            chosen = set(e.atom for e in pos + neg)
            for e in pool_neg:
                if e.atom not in chosen and test_candidate(background, hyp, [], [e], limits.budget).too_general:
                    counter = e
                    break
            if counter is None:
                for e in pool_pos:
                    if e.atom not in chosen and test_candidate(background, hyp, [e], [], limits.budget).too_specific:
                        counter = e
                        break
            if counter is not None or not is_correct(hyp):
                if counter is not None:
                    break
            else:
                break
        if counter is None:
            if not is_correct(hyp):
                return None
            break
        (pos if counter.positive else neg).append(counter)
    else:
        return None
    chosen = set(e.atom for e in pos + neg)
    rest = [e for pair in zip(own_pos, own_neg) for e in pair]
    longer = own_pos[len(own_neg):] if len(own_pos) > len(own_neg) else own_neg[len(own_pos):]
    for e in rest + longer:
        if len(pos) + len(neg) >= size:
            break
        if e.atom not in chosen:
            (pos if e.positive else neg).append(e)
            chosen.add(e.atom)
    return pos, neg


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ExperimentReport:
    config: dict
    cells: list[dict]
    aggregates: dict
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        """Deterministic serialisation; timings are kept out of it."""
        body = {"config": self.config, "cells": self.cells, "aggregates": self.aggregates}
        return json.dumps(body, indent=1, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = ["target       train_goal  test_goal  logical_match  demos"]
        for name in list(TARGET_NAMES) + ["all"]:
            a = self.aggregates.get(name)
            if a is None:
                continue
            lines.append(
                f"{name:<12} {a['train_goal']:>10.3f} {a['test_goal']:>10.3f} {a['logical_match']:>14.3f} {a['mean_demos']:>6.1f}"
            )
        return "\n".join(lines) + "\n"

    def rules_listing(self) -> str:
        out = []
        for c in self.cells:
            if c["target"] == "all":
                continue
            out.append(f"% seed {c['seed']} {c['task']} {c['target']} ({c['status']})\n{c['rules']}")
        return "\n".join(out)

    def save(self, directory: str | Path) -> Path:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        (root / "report.json").write_text(self.to_json())
        (root / "results_table.txt").write_text(self.table())
        (root / "rules.pl").write_text(self.rules_listing())
        (root / "timings.json").write_text(json.dumps(self.timings, indent=1, sort_keys=True) + "\n")
        return root


@dataclass
class SeedData:
    seed: int
    train: list[Task]
    test: Task
    blocks: tuple[Block, ...]
    demos: dict[str, list[Demonstration]]


def prepare_seed(seed: int, config: ExperimentConfig, hgt: Program) -> SeedData:
    train, test = sample_experiment(seed)
    demos = {
        t.id: generate_demonstrations(t, hgt, seed, DemoConfig(positives=config.positives_per_task))
        for t in train
    }
    blocks = tuple(sorted(b for t in train + [test] for b in t.objects))
    return SeedData(seed, train, test, blocks, demos)


def learning_background(task: Task, examples: Mapping[str, tuple[list[Example], list[Example]]], blocks: Sequence[Block]) -> Program:
    """Static facts plus the properties of every block the examples mention."""
    ids = {b.id for b in task.objects}
    for pos, neg in examples.values():
        for e in pos + neg:
            for a in e.atom.args:
                for x in a if isinstance(a, tuple) else (a,):
                    ids.add(x)
    return background_for([b for b in blocks if b.id in ids])


def curated_example_sets(
    data: SeedData, task: Task, targets: Sequence[TargetSpec], injections: Mapping[str, Program],
    hgt: Program, config: ExperimentConfig, sizes: Mapping[str, int] = CURATED_COUNTS,
) -> dict[str, tuple[list[Example], list[Example]]] | None:
    """Curated per-target sets, learned in curriculum order against ground truth."""
    pools = {
        t.id: task_examples(t, data.demos[t.id], targets, config, data.seed) for t in data.train
    }
    background = background_for(data.blocks)
    chosen = {}
    for spec in targets:
        extra = injections.get(spec.name)
        if extra:
            background = background.union(extra)
        own = pools[task.id][spec.name]
        res_pos, res_neg = [], []
        for t in data.train:
            if t.id != task.id:
                res_pos += pools[t.id][spec.name][0]
                res_neg += pools[t.id][spec.name][1]

        def correct(h, name=spec.name):
            return evaluate_match(h, name, hgt, data.blocks, config.budget)

        sel = curate_examples(
            spec, background, own, (res_pos, res_neg), sizes[spec.name], correct, data.seed, config.limits
        )
        if sel is None:
            return None
        chosen[spec.name] = sel
        learned = learn_target(background, spec.bias, sel[0], sel[1], config.limits).hypothesis
        background = background.union(learned)
    return chosen


def evaluate_match(learned: Program, target: str, hgt: Program, blocks: Sequence[Block], budget: QueryBudget) -> bool:
    rules = hybrid_rules(learned, target, hgt)
    blocks = tuple(sorted(blocks))
    return _closure(rules, target, blocks, budget) == _closure(hgt, target, blocks, budget)


def run_task(
    data: SeedData,
    task: Task,
    examples: Mapping[str, tuple[list[Example], list[Example]]],
    targets: Sequence[TargetSpec],
    injections: Mapping[str, Program],
    hgt: Program,
    config: ExperimentConfig,
) -> tuple[list[dict], dict]:
    """Curriculum on one training task, evaluated on it and on the held-out task."""
    background = learning_background(task, examples, data.blocks)
    t0 = time.perf_counter()
    result = run_curriculum(background, targets, (), injections, config.limits, examples)
    timing = {"curriculum": time.perf_counter() - t0}
    cells = []
    budget = config.budget
    for spec in targets:
        name = spec.name
        lr = result.per_target.get(name)
        pos, neg = examples.get(name, ([], []))
        cell = {
            "seed": data.seed,
            "task": task.id,
            "target": name,
            "demo_count": len(pos) + len(neg),
            "status": lr.status if lr else "not_run",
            "rules": format_program(lr.hypothesis) if lr else "",
        }
        if lr is not None and lr.found:
            tg, _ = evaluate_target(lr.hypothesis, name, hgt, task, data.blocks, budget)
            sg, match = evaluate_target(lr.hypothesis, name, hgt, data.test, data.blocks, budget)
        else:
            tg = sg = match = False
        cell.update(train_goal=tg, test_goal=sg, logical_match=match)
        timing[name] = lr.elapsed if lr else 0.0
        cells.append(cell)
    if result.complete:
        tg, _ = evaluate_all(result.final_hypothesis, hgt, task, data.blocks, budget)
        sg, match = evaluate_all(result.final_hypothesis, hgt, data.test, data.blocks, budget)
    else:
        tg = sg = match = False
    cells.append(
        {
            "seed": data.seed,
            "task": task.id,
            "target": "all",
            "demo_count": sum(c["demo_count"] for c in cells),
            "status": "found" if result.complete else "incomplete",
            "rules": format_program(result.final_hypothesis),
            "train_goal": tg,
            "test_goal": sg,
            "logical_match": match,
        }
    )
    return cells, timing


def aggregate(cells: Sequence[dict]) -> dict:
    out = {}
    for name in list(TARGET_NAMES) + ["all"]:
        sel = [c for c in cells if c["target"] == name]
        if not sel:
            continue
        n = len(sel)
        out[name] = {
            "evaluations": n,
            "train_goal": sum(c["train_goal"] for c in sel) / n,
            "test_goal": sum(c["test_goal"] for c in sel) / n,
            "logical_match": sum(c["logical_match"] for c in sel) / n,
            "mean_demos": sum(c["demo_count"] for c in sel) / n,
        }
    return out


def run_experiment(config: ExperimentConfig, seeds_data: Mapping[int, SeedData] | None = None) -> ExperimentReport:
    """Every seed, every training task: learn, then evaluate on train and test."""
    config.validate()
    hgt = ground_truth_program()
    targets, injections = config.targets()
    cells, timings = [], {}
    for seed in config.seeds:
        data = (seeds_data or {}).get(seed) or prepare_seed(seed, config, hgt)
        for task in data.train:
            try:
                if config.curated:
                    examples = curated_example_sets(data, task, targets, injections, hgt, config)
                    if examples is None:
                        raise RuntimeError("no curated example set within the size limits")
                else:
                    pools = task_examples(task, data.demos[task.id], targets, config, seed)
                    examples, _ = limit_examples(pools, config.demo_counts, seed, task.id)
                task_cells, timing = run_task(data, task, examples, targets, injections, hgt, config)
            except Exception as e:  # recorded, never aborts the run
                logger.exception("cell %s failed", task.id)
                task_cells = [
                    {
                        "seed": seed, "task": task.id, "target": name, "demo_count": 0,
                        "status": f"error: {e}", "rules": "", "train_goal": False,
                        "test_goal": False, "logical_match": False,
                    }
                    for name in list(TARGET_NAMES) + ["all"]
                ]
                timing = {}
            cells += task_cells
            timings[task.id] = timing
    return ExperimentReport(json.loads(config.to_json()), cells, aggregate(cells), timings)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepResult:
    grid: list[int]
    rates: dict[str, dict[int, dict[str, float]]]  # target -> count -> metric -> rate
    capped: dict[int, int]  # count -> number of (task, target) draws that hit the pool size
    minimal: dict[str, int | None]  # smallest count with 100% on both metrics
    per_cell_minimal: dict[str, float | None]  # mean over cells of the smallest count that works

    def table(self) -> str:
        head = "count " + " ".join(f"{t + ':goal':>16} {t + ':match':>17}" for t in TARGET_NAMES)
        lines = [head]
        for n in self.grid:
            row = [f"{n:>5}"]
            for t in TARGET_NAMES:
                r = self.rates[t][n]
                row.append(f"{r['goal']:>16.3f} {r['match']:>17.3f}")
            lines.append(" ".join(row))
        lines.append("minimal " + " ".join(f"{t}={self.minimal[t]}" for t in TARGET_NAMES))
        lines.append(
            "mean per-cell minimal "
            + " ".join(
                f"{t}={'-' if self.per_cell_minimal[t] is None else round(self.per_cell_minimal[t], 1)}"
                for t in TARGET_NAMES
            )
        )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


def sweep_demo_counts(
    config: ExperimentConfig, grid: Sequence[int] | None = None, seeds_data: Mapping[int, SeedData] | None = None
) -> SweepResult:
    """Success rates per target as the number of examples per target grows."""
    grid = list(config.sweep_grid if grid is None else grid)
    if grid != sorted(grid):
        raise ConfigError("sweep grid must be sorted ascending")
    hgt = ground_truth_program()
    targets, injections = config.targets()
    names = [t.name for t in targets]
    ok: dict[str, dict[int, list[tuple[bool, bool]]]] = {t: {n: [] for n in grid} for t in names}
    capped = {n: 0 for n in grid}
    cell_ok: dict[tuple[str, str], dict[int, bool]] = {}
    for seed in config.seeds:
        data = (seeds_data or {}).get(seed) or prepare_seed(seed, config, hgt)
        for task in data.train:
            pools = task_examples(task, data.demos[task.id], targets, config, seed)
            previous = None
            for n in grid:
                examples, cap = limit_examples(pools, n, seed, task.id)
                capped[n] += sum(cap.values())
                key = {t: (tuple(e.atom for e in p), tuple(e.atom for e in q)) for t, (p, q) in examples.items()}
                if n == 0:
                    results = {t: (False, False) for t in names}
                elif previous is not None and previous[0] == key:
                    results = previous[1]  # every pool exhausted: same examples, same outcome
                else:
                    try:
                        cells, _ = run_task(data, task, examples, targets, injections, hgt, config)
                        results = {c["target"]: (c["test_goal"], c["logical_match"]) for c in cells}
                    except Exception:
                        logger.exception("sweep cell %s/%d failed", task.id, n)
                        results = {t: (False, False) for t in names}
                previous = (key, results)
                for t in names:
                    ok[t][n].append(results[t])
                    cell_ok.setdefault((task.id, t), {})[n] = all(results[t])
    rates = {
        t: {
            n: {
                "goal": sum(g for g, _ in ok[t][n]) / max(1, len(ok[t][n])),
                "match": sum(m for _, m in ok[t][n]) / max(1, len(ok[t][n])),
            }
            for n in grid
        }
        for t in names
    }
    minimal = {}
    for t in names:
        minimal[t] = next((n for n in grid if rates[t][n]["goal"] == 1.0 and rates[t][n]["match"] == 1.0), None)
    per_cell = {}
    for t in names:
        firsts = []
        for (task_id, tn), by_n in cell_ok.items():
            if tn != t:
                continue
            # smallest count from which the cell stays solved
            first = None
            for n in reversed(grid):
                if by_n[n]:
                    first = n
                else:
                    break
            if first is not None:
                firsts.append(first)
        per_cell[t] = sum(firsts) / len(firsts) if firsts else None
    return SweepResult(grid, rates, capped, minimal, per_cell)
