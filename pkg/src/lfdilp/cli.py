"""Command line entry point: ``lfdilp <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .blockworld import (
    ground_truth_program,
    load_dataset,
    save_dataset,
)
from .curriculum import run_curriculum
from .harness import (
    ConfigError,
    ExperimentConfig,
    learning_background,
    evaluate_all,
    limit_examples,
    prepare_seed,
    run_experiment,
    sweep_demo_counts,
    task_examples,
)
from .logic import ParseError, format_program, parse_program
from .planner import PlanningBudgetExceeded, plan


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "demos", None) is not None:
        cfg.demo_counts = {k: args.demos for k in (cfg.demo_counts or {"target_z": 0, "tower_from": 0, "tower_site": 0})}
    if args.out:
        cfg.out = args.out
    cfg.validate()
    return cfg


def _read_rules(path: str | None):
    if path is None:
        return ground_truth_program()
    try:
        return parse_program(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read rules {path}: {e}") from e
    except ParseError as e:
        raise ConfigError(f"{path}: {e}") from e


def cmd_generate(args, cfg: ExperimentConfig) -> None:
    hgt = ground_truth_program()
    for seed in cfg.seeds:
        data = prepare_seed(seed, cfg, hgt)
        demos = [d for t in data.train for d in data.demos[t.id]]
        root = save_dataset(Path(cfg.out) / f"seed{seed}", data.train + [data.test], demos, {"seed": seed})
        print(f"seed {seed}: {len(demos)} demonstrations -> {root}")


def _seed_data(cfg: ExperimentConfig, seed: int, data_dir: str | None):
    data = prepare_seed(seed, cfg, ground_truth_program())
    if data_dir is None:
        return data
    root = Path(data_dir) / f"seed{seed}"
    if not (root / "manifest.txt").exists():
        root = Path(data_dir)
    tasks, demos, _ = load_dataset(root)
    data.train = [t for t in tasks if t.split == "train"]
    data.test = next(t for t in tasks if t.split == "test")
    data.demos = {t.id: [d for d in demos if d.task_id == t.id] for t in data.train}
    return data


def cmd_learn(args, cfg: ExperimentConfig) -> None:
    targets, injections = cfg.targets()
    if args.target:
        names = [t.name for t in targets]
        if args.target not in names:
            raise ConfigError(f"unknown target {args.target}; curriculum has {', '.join(names)}")
        targets = targets[: names.index(args.target) + 1]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        data = _seed_data(cfg, seed, args.data)
        for task in data.train:
            pools = task_examples(task, data.demos[task.id], targets, cfg, seed)
            examples, _ = limit_examples(pools, cfg.demo_counts, seed, task.id)
            background = learning_background(task, examples, data.blocks)
            result = run_curriculum(background, targets, (), injections, cfg.limits, examples)
            status = " ".join(f"{k}={r.status}" for k, r in result.per_target.items())
            path = out / f"{task.id}.pl"
            path.write_text(format_program(result.final_hypothesis))
            print(f"{task.id}: {status} -> {path}")


def cmd_plan(args, cfg: ExperimentConfig) -> None:
    rules = _read_rules(args.rules)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        data = _seed_data(cfg, seed, args.data)
        tasks = data.train + [data.test]
        if args.task:
            tasks = [t for t in tasks if t.id == args.task]
            if not tasks:
                raise ConfigError(f"no task {args.task} in seed {seed}")
        for task in tasks:
            try:
                p = plan(task, rules, cfg.budget)
            except PlanningBudgetExceeded as e:
                print(f"{task.id}: planning budget exceeded ({e})")
                continue
            if p is None:
                print(f"{task.id}: no plan")
                continue
            path = out / f"{task.id}.plan"
            path.write_text(p.to_text())
            print(f"{task.id}: {len(p.actions)} actions -> {path}")


def cmd_evaluate(args, cfg: ExperimentConfig) -> None:
    hgt = ground_truth_program()
    learned = _read_rules(args.rules)
    for seed in cfg.seeds:
        data = _seed_data(cfg, seed, args.data)
        for task in data.train + [data.test]:
            goal, match = evaluate_all(learned, hgt, task, data.blocks, cfg.budget)
            print(f"{task.id}: goal_satisfied={goal} logical_match={match}")


def cmd_sweep(args, cfg: ExperimentConfig) -> None:
    result = sweep_demo_counts(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(result.to_json())
    (out / "sweep_table.txt").write_text(result.table())
    print(result.table(), end="")


def cmd_reproduce(args, cfg: ExperimentConfig) -> None:
    report = run_experiment(cfg)
    root = report.save(cfg.out)
    (root / "config.json").write_text(cfg.to_json())
    print(report.table(), end="")
    print(f"report written to {root}")


COMMANDS = {
    "generate": cmd_generate,
    "learn": cmd_learn,
    "plan": cmd_plan,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "reproduce-fig3": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfdilp", description="Learn block-assembly rules from demonstrations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="run a single seed")
        p.add_argument("--out", help="output directory")
        if name in ("learn", "plan", "evaluate"):
            p.add_argument("--data", help="dataset directory written by 'generate'")
        if name == "learn":
            p.add_argument("--target", help="stop the curriculum after this target")
        if name in ("learn", "sweep", "reproduce-fig3"):
            p.add_argument("--demos", type=int, help="examples per target")
        if name in ("plan", "evaluate"):
            p.add_argument("--rules", help="rules file (default: ground truth)")
        if name == "plan":
            p.add_argument("--task", help="only this task id")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "sweep" and getattr(args, "demos", None) is not None:
            cfg.sweep_grid = [args.demos]
        COMMANDS[args.command](args, cfg)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
