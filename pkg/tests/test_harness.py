import json

import pytest

from lfdilp.blockworld import ground_truth_program, sample_experiment
from lfdilp.cli import main
from lfdilp.harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    evaluate_all,
    evaluate_target,
    experiment_blocks,
    hybrid_rules,
    run_experiment,
)
from lfdilp.logic import Program, parse_program

HGT = ground_truth_program()


def test_config_json_round_trip(tmp_path):
    cfg = ExperimentConfig(seeds=[1, 2], demo_counts={"target_z": 5, "tower_from": 7, "tower_site": 3})
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.load(path) == cfg


@pytest.mark.parametrize(
    "data",
    [{"seedz": [1]}, {"rates": {"bad_site": 2.0}}, {"sweep_grid": [5, 3]}, {"demo_counts": {"target_z": -1}}],
)
def test_bad_config_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(data)


def test_ground_truth_scores_perfectly():
    train, test = sample_experiment(0)
    blocks = experiment_blocks(0)
    for name in ("target_z", "tower_from", "tower_site"):
        goal, match = evaluate_target(HGT.restrict(name), name, HGT, test, blocks)
        assert goal and match
    assert evaluate_all(HGT.without("target_z").union(HGT.restrict("target_z")), HGT, train[0], blocks) == (True, True)


def test_wrong_rules_are_caught():
    _, test = sample_experiment(0)
    blocks = experiment_blocks(0)
    # brick and glass swapped
    swapped = parse_program(
        "target_z(B,Z):- material(B,M), stone(M), z1(Z).\n"
        "target_z(B,Z):- material(B,M), glass(M), z2(Z).\n"
        "target_z(B,Z):- material(B,M), brick(M), z3(Z).\n"
    )
    goal, match = evaluate_target(swapped, "target_z", HGT, test, blocks)
    assert not match and not goal
    base_only = parse_program("tower_from(L,Z):- head(L,H), target_z(H,Z), tail(L,R), empty(R).")
    goal, match = evaluate_target(base_only, "tower_from", HGT, test, blocks)
    assert not goal and not match


def test_hybrid_adds_wood_only_for_level_rule():
    learned = HGT.restrict("target_z").without("target_z")
    rules = hybrid_rules(learned, "target_z", HGT)
    assert len(rules.restrict("target_z")) == 1
    rules = hybrid_rules(HGT.restrict("tower_site"), "tower_site", HGT)
    assert len(rules.restrict("target_z")) == 4


def test_aggregate_means():
    cells = [
        {"target": "target_z", "train_goal": True, "test_goal": False, "logical_match": True, "demo_count": 4},
        {"target": "target_z", "train_goal": True, "test_goal": True, "logical_match": False, "demo_count": 6},
    ]
    agg = aggregate(cells)["target_z"]
    assert agg == {"evaluations": 2, "train_goal": 1.0, "test_goal": 0.5, "logical_match": 0.5, "mean_demos": 5.0}


def test_report_is_byte_identical_across_runs(tmp_path):
    cfg = ExperimentConfig(seeds=[3], demo_counts={"target_z": 20, "tower_from": 60, "tower_site": 40})
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.to_json() == b.to_json()
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    for name in ("report.json", "results_table.txt", "rules.pl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    body = json.loads(a.to_json())
    assert len(body["cells"]) == 4 * 4
    assert "timings" not in body


# ---------------------------------------------------------------------------
# command line


def test_cli_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["generate", "--seed", "0", "--out", str(data)]) == 0
    assert (data / "seed0" / "manifest.txt").exists()
    rules = tmp_path / "rules"
    assert main(["learn", "--seed", "0", "--data", str(data), "--out", str(rules), "--target", "target_z", "--demos", "30"]) == 0
    learned = parse_program((rules / "seed0-train1.pl").read_text())
    assert learned.restrict("target_z")
    plans = tmp_path / "plans"
    assert main(["plan", "--seed", "0", "--data", str(data), "--out", str(plans), "--task", "seed0-test"]) == 0
    assert (plans / "seed0-test.plan").read_text().count("place(") == 9
    capsys.readouterr()
    gt = tmp_path / "gt.pl"
    gt.write_text(str(HGT))
    assert main(["evaluate", "--seed", "0", "--rules", str(gt)]) == 0
    out = capsys.readouterr().out
    assert out.count("goal_satisfied=True logical_match=True") == 5


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["plan", "--seed", "0", "--rules", str(tmp_path / "missing.pl"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad)]) == 2
    bad.write_text('{"colour": 1}')
    assert main(["reproduce-fig3", "--config", str(bad)]) == 2
    assert main(["learn", "--seed", "0", "--target", "nope", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_unknown_verb():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code != 0


def test_empty_hypothesis_scores_zero():
    _, test = sample_experiment(1)
    goal, match = evaluate_target(Program(), "tower_site", HGT, test, experiment_blocks(1))
    assert (goal, match) == (False, False)
