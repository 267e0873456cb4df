import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfdilp.blockworld import (
    ANCHOR,
    LEVELS,
    SITES,
    TEST_BLOCKED,
    TRAIN_BLOCKED,
    DemoConfig,
    Goal,
    WorldState,
    block_pool,
    cardinal_pairs,
    diagonal_pairs,
    generate_demonstrations,
    ground_state,
    ground_truth_program,
    load_dataset,
    sample_experiment,
    save_dataset,
    state_from_atoms,
    subsample,
    violates,
)
from lfdilp.inference import QueryBudget
from lfdilp.planner import _Oracle, check_goal


def test_block_pool_covers_every_combination():
    pool = block_pool()
    assert len(pool) == 60
    assert len({(b.material, b.color, b.shape) for b in pool}) == 60
    assert len({b.id for b in pool}) == 60


def test_grid_topology_counts():
    # frozen from enumerating the 3x3 grid by hand: 12 shared edges, 8 diagonal contacts
    assert len(cardinal_pairs()) == 24
    assert len(diagonal_pairs()) == 16
    assert not set(cardinal_pairs()) & set(diagonal_pairs())
    neighbours = {b for a, b in cardinal_pairs() if a == ANCHOR}
    assert neighbours == {"s12", "s21", "s23", "s32"}


@pytest.mark.parametrize("seed", range(10))
def test_experiment_contracts(seed):
    train, test = sample_experiment(seed)
    assert len(train) == 4
    for t in train:
        c = t.counts()
        assert (c["stone"], c["brick"], c["glass"], c["wood"], c["distractor"]) == (3, 3, 2, 0, 4)
        assert t.initial.blocked == TRAIN_BLOCKED
        assert t.goal.heights == (3, 3, 2)
    c = test.counts()
    assert (c["stone"], c["brick"], c["glass"], c["wood"], c["distractor"]) == (3, 3, 2, 1, 3)
    assert test.goal.heights == (4, 3, 2)
    assert test.initial.blocked == TEST_BLOCKED
    ids = [b.id for t in train + [test] for b in t.objects]
    assert len(ids) == len(set(ids)) == 60
    for t in train + [test]:
        assert all(b.color and b.shape for b in t.objects)


def test_sampling_is_deterministic():
    assert sample_experiment(3) == sample_experiment(3)
    assert sample_experiment(3) != sample_experiment(4)


def test_world_state_rejects_bad_layouts():
    b = block_pool()[:3]
    with pytest.raises(ValueError):
        WorldState(tuple(b), (("s22", "z2", b[0].id),))
    with pytest.raises(ValueError):
        WorldState(tuple(b), (("s22", "z1", b[0].id), ("s22", "z1", b[1].id)))
    with pytest.raises(ValueError):
        WorldState(tuple(b), (("s22", "z1", b[0].id),), available=frozenset({b[0].id}))


def test_grounding_round_trip():
    train, _ = sample_experiment(0)
    task = train[0]
    demo = generate_demonstrations(task, seed=0, config=DemoConfig(positives=1))[0]
    for state in demo.states:
        assert state_from_atoms(ground_state(state)) == state


def test_goal_heights_sorted():
    assert Goal((2, 4, 3)).heights == (4, 3, 2)


@pytest.fixture(scope="module")
def seed0_demos():
    train, test = sample_experiment(0)
    return train, test, {t.id: generate_demonstrations(t, seed=0) for t in train}


def test_demos_deterministic(seed0_demos):
    train, _, demos = seed0_demos
    again = generate_demonstrations(train[1], seed=0)
    assert again == demos[train[1].id]


def test_demonstration_labels(seed0_demos):
    train, _, demos = seed0_demos
    hgt = ground_truth_program()
    for t in train:
        ds = demos[t.id]
        pos = [d for d in ds if d.positive]
        neg = [d for d in ds if not d.positive]
        assert pos and neg
        assert {d.corruption for d in neg} == {"permuted_materials", "bad_site", "distractor_used"}
        for d in pos:
            assert check_goal(d.final, t.goal, hgt)
        for d in neg:
            assert not check_goal(d.final, t.goal, hgt)
            assert violates(d.final, d.corruption, hgt)


def test_subsample_keeps_positives(seed0_demos):
    train, _, demos = seed0_demos
    ds = demos[train[0].id]
    rates = {"permuted_materials": 0.3, "bad_site": 0.5, "distractor_used": 0.0}
    kept = subsample(ds, rates, seed=1, target="tower_from")
    assert [d for d in kept if d.positive] == [d for d in ds if d.positive]
    assert not any(d.corruption == "distractor_used" for d in kept)
    assert kept == subsample(ds, rates, seed=1, target="tower_from")
    with pytest.raises(ValueError):
        subsample(ds, {"bad_site": 1.5}, 0, "x")


def test_subsample_full_rate_is_identity(seed0_demos):
    train, _, demos = seed0_demos
    ds = demos[train[0].id]
    assert subsample(ds, {}, 0, "target_z") == ds


def test_dataset_round_trip(tmp_path, seed0_demos):
    train, test, demos = seed0_demos
    ds = demos[train[0].id][:12] + [d for d in demos[train[0].id] if d.corruption == "bad_site"][:3]
    save_dataset(tmp_path, train + [test], ds, {"seed": 0})
    tasks, loaded, meta = load_dataset(tmp_path)
    assert meta["seed"] == "0"
    assert [t.id for t in tasks] == [t.id for t in train + [test]]
    for a, b in zip(tasks, train + [test]):
        assert a.objects == b.objects and a.goal == b.goal and a.initial == b.initial
    assert loaded == ds


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["stone", "brick", "glass", "wood"]), min_size=1, max_size=4))
def test_ground_truth_tower_rule_is_the_material_order(materials):
    pool = {m: [b for b in block_pool() if b.material == m] for m in ("stone", "brick", "glass", "wood")}
    used = {}
    blocks = []
    for m in materials:
        k = used.get(m, 0)
        used[m] = k + 1
        blocks.append(pool[m][k])
    state = WorldState(tuple(blocks), tuple(("s22", LEVELS[i], b.id) for i, b in enumerate(blocks)))
    ok = check_goal(state, Goal((len(blocks),)), ground_truth_program())
    assert ok == (list(materials) == ["stone", "brick", "glass", "wood"][: len(materials)])


def test_site_rule_accepts_anchor_neighbourhood_only():
    oracle = _Oracle((), ground_truth_program(), QueryBudget())
    near = {"s12", "s21", "s22", "s23", "s32"}
    for n in range(0, 4):
        for sites in itertools.permutations(SITES, n):
            assert oracle.site_ok(sites) == (set(sites) <= near)
