"""End-to-end acceptance checks.

Each test records a one-line verdict that conftest prints in the terminal
summary under "acceptance criteria". Run with ``pytest tests/test_acceptance.py``;
the full set takes about fifteen minutes on one core.
"""

import itertools
import random

import pytest

from lfdilp.blockworld import (
    ANCHOR,
    TRAIN_BLOCKED,
    Goal,
    Task,
    ground_truth_program,
    violates,
    wood_rule,
)
from lfdilp.harness import ExperimentConfig, prepare_seed, run_experiment, sweep_demo_counts
from lfdilp.learner import learn_target
from lfdilp.logic import Atom, Program, Var, apply_atom, format_program, parse_program
from lfdilp.logic import programs_equal_upto_renaming, resolve_substitution, unify
from lfdilp.planner import check_goal, plan, replay

from conftest import record
from oracles import constants_of, naive_fixpoint, random_datalog_program
from test_engine import _preds, _sld_model
from test_learner import _brute_force_min_size, _meets_examples, _flat_problem, _list_problem, _size

HGT = ground_truth_program()
SEEDS = range(10)
# coarser than the CLI default to keep the run affordable; 209 is the full budget
SWEEP_GRID = (10, 20, 30, 40, 50, 62, 80, 129, 209)


@pytest.fixture(scope="session")
def seeds_data():
    cfg = ExperimentConfig()
    return {s: prepare_seed(s, cfg, HGT) for s in SEEDS}


@pytest.fixture(scope="session")
def curated_report(seeds_data):
    cfg = ExperimentConfig(seeds=list(SEEDS), curated=True)
    return run_experiment(cfg, seeds_data)


def _cells(report, target):
    return [c for c in report.cells if c["target"] == target]


# ---------------------------------------------------------------------------


def test_curated_examples_recover_golden_rules(curated_report):
    clause1 = parse_program("target_z(B,Z):- material(B,M), stone(M), z1(Z).").clauses[0]
    tower = HGT.restrict("tower_from")
    problems = []
    for c in _cells(curated_report, "target_z"):
        rules = parse_program(c["rules"])
        if c["demo_count"] != 13 or not c["logical_match"]:
            problems.append(f"{c['task']} target_z")
        elif not any(programs_equal_upto_renaming(Program([clause1]), Program([r])) for r in rules):
            problems.append(f"{c['task']} target_z lacks the stone clause")
    for c in _cells(curated_report, "tower_from"):
        if c["demo_count"] != 50 or not programs_equal_upto_renaming(parse_program(c["rules"]), tower):
            problems.append(f"{c['task']} tower_from")
    for c in _cells(curated_report, "tower_site"):
        if c["demo_count"] != 14 or not c["logical_match"]:
            problems.append(f"{c['task']} tower_site")
    whole = _cells(curated_report, "all")
    problems += [f"{c['task']} combined" for c in whole if not c["logical_match"]]
    ok = not problems and len(whole) == 40
    record(1, ok, f"{len(whole) - len({p.split()[0] for p in problems})}/{len(whole)} tasks recover the rules at 13/50/14"
           + (f"; {problems[:4]}" if problems else ""))
    assert ok, problems


def test_learned_rules_solve_held_out_tasks(curated_report, seeds_data):
    whole = _cells(curated_report, "all")
    solved = sum(c["test_goal"] for c in whole)
    sites_ok = True
    for c in whole:
        data = seeds_data[c["seed"]]
        p = plan(data.test, parse_program(c["rules"]).union(wood_rule()))
        if p is None:
            sites_ok = False
            continue
        used = set(replay(data.test, p).occupied_sites())
        heights = sorted(len(b) for _, b in p.towers)
        # the anchor belongs to both layouts; every other test site was blocked in training
        sites_ok &= heights == [2, 3, 4] and (used - {ANCHOR}) <= TRAIN_BLOCKED
    ok = solved == 40 and len(whole) == 40 and sites_ok
    record(2, ok, f"{solved}/{len(whole)} held-out goals (heights 2,3,4) solved; unseen sites used: {sites_ok}")
    assert ok


def test_base_case_alone_does_not_stack(seeds_data):
    base = parse_program("tower_from(L,Z):- head(L,H), target_z(H,Z), tail(L,R), empty(R).")
    rules = HGT.without("tower_from").union(base)
    assert programs_equal_upto_renaming(rules.restrict("target_z"), HGT.restrict("target_z"))  # wood rule present
    checked = failed = 0
    for data in seeds_data.values():
        goals = [(t, t.goal) for t in data.train + [data.test]]
        goals += [(data.test, Goal((h,))) for h in (2, 3, 4)]
        for task, goal in goals:
            checked += 1
            failed += plan(Task(task.id, task.objects, task.initial, goal), rules) is None
    flat = plan(Task("flat", data.test.objects, data.test.initial, Goal((1, 1))), rules) is not None
    ok = checked == failed and flat
    record(3, ok, f"{failed}/{checked} goals with a tower of height >= 2 unsolvable without recursion")
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="measured: the level rule misses 100% on one seed at every count, and the site rule needs more examples than the tower rule",
)
def test_random_demo_sweep_reaches_full_success(seeds_data):
    cfg = ExperimentConfig(seeds=list(SEEDS))
    res = sweep_demo_counts(cfg, SWEEP_GRID, seeds_data)
    print(res.table())
    reachable = all(res.minimal[t] is not None and res.minimal[t] <= 209 for t in res.minimal)
    per_cell = res.per_cell_minimal
    known = {t: v for t, v in per_cell.items() if v is not None}
    hardest = max(known, key=known.get) if known else None
    ok = reachable and hardest == "tower_from"
    shown = ", ".join(f"{t}={res.minimal[t]}" for t in res.minimal)
    means = ", ".join(f"{t}={'-' if v is None else round(v, 1)}" for t, v in per_cell.items())
    record(4, ok, f"minimal counts {shown}; mean per-task minimal {means}; hardest={hardest}")
    assert ok


def test_learner_suite():
    total = passed = 0
    for i in range(120):
        seed = f"acceptance-flat:{i}"
        bias, pool, background, pos, neg = _flat_problem(seed)
        expected = _brute_force_min_size(bias, pool, background, pos, neg)
        pruned = learn_target(background, bias, pos, neg)
        plain = learn_target(background, bias, pos, neg, prune=False)
        total += 1
        if expected is None:
            passed += not pruned.found and not plain.found
        else:
            passed += (
                pruned.found
                and _size(pruned.hypothesis) == expected == _size(plain.hypothesis)
                and _meets_examples(background, pruned.hypothesis, pos, neg)
            )
    for i in range(30):
        bias, background, pos, neg = _list_problem(f"acceptance-list:{i}")
        pruned = learn_target(background, bias, pos, neg)
        plain = learn_target(background, bias, pos, neg, prune=False)
        total += 1
        passed += pruned.found == plain.found and (
            not plain.found
            or (_size(pruned.hypothesis) == _size(plain.hypothesis) and _meets_examples(background, pruned.hypothesis, pos, neg))
        )
    ok = passed == total and total >= 100
    record(5, ok, f"{passed}/{total} toy problems: pruned size == exhaustive size, hypotheses re-tested")
    assert ok


def _random_term(rng, depth=0):
    r = rng.random()
    if r < 0.35:
        return Var(rng.choice("XYZW"))
    if r < 0.8 or depth > 2:
        return rng.choice(["a", "b", "c", "z1"])
    return tuple(_random_term(rng, depth + 1) for _ in range(rng.randint(0, 3)))


def test_engine_suite():
    rng = random.Random("acceptance-engine")
    sld_ok = 0
    round_trip_ok = 0
    n_programs = 550
    for i in range(n_programs):
        clauses = random_datalog_program(
            rng, n_preds=rng.randint(1, 3), n_edb=rng.randint(1, 2), n_consts=rng.randint(2, 5),
            n_clauses=rng.randint(1, 6), recursive=(i % 3 == 0),
        )
        consts = constants_of(clauses)
        sld_ok += _sld_model(clauses, _preds(clauses), consts) == naive_fixpoint(clauses, consts)
        text = format_program(clauses)
        round_trip_ok += format_program(parse_program(text)) == text and parse_program(text) == Program(clauses)
    mgu_ok = 0
    n_pairs = 2000
    for _ in range(n_pairs):
        a = Atom("p", (_random_term(rng), _random_term(rng)))
        b = Atom("p", (_random_term(rng), _random_term(rng)))
        s = unify(a, b)
        good = True
        if s is not None:
            s = resolve_substitution(s)
            good = apply_atom(a, s) == apply_atom(b, s)
        vs = sorted(set(a.vars()) | set(b.vars()))
        if good and len(vs) <= 3:
            for vals in itertools.product(["a", "b", "c", "z1", "q", ()], repeat=len(vs)):
                g = dict(zip(vs, vals))
                if apply_atom(a, g) == apply_atom(b, g) and s is None:
                    good = False
                    break
        mgu_ok += good
    ok = sld_ok == n_programs and round_trip_ok == n_programs and mgu_ok == n_pairs
    record(6, ok, f"SLD == fixpoint {sld_ok}/{n_programs}; MGU {mgu_ok}/{n_pairs}; round trip {round_trip_ok}/{n_programs}")
    assert ok


def test_dataset_contracts(seeds_data):
    problems = []
    n_demos = 0
    for seed, data in seeds_data.items():
        for t in data.train:
            c = t.counts()
            if (c["stone"], c["brick"], c["glass"], c["wood"], c["distractor"]) != (3, 3, 2, 0, 4):
                problems.append(f"{t.id} counts")
        c = data.test.counts()
        if (c["wood"], c["distractor"], len(data.test.objects)) != (1, 3, 12):
            problems.append(f"seed{seed} test counts")
        train_ids = {b.id for t in data.train for b in t.objects}
        if train_ids & {b.id for b in data.test.objects}:
            problems.append(f"seed{seed} shared ids")
        for t in data.train:
            for d in data.demos[t.id]:
                n_demos += 1
                sat = check_goal(d.final, t.goal, HGT)
                if d.positive != sat or (not d.positive and not violates(d.final, d.corruption, HGT)):
                    problems.append(f"{t.id} {d.id}")
    ok = not problems
    record(7, ok, f"10 seeds, {n_demos} demonstrations checked against the ground truth; problems: {len(problems)}")
    assert ok, problems[:10]
