"""Command-line surface: search, eval-pipeline, operators, distill,
simulate-cost, and report.

Exit codes: 0 success, 2 configuration problems, 3 data problems. All
outputs are plain UTF-8 CSV / JSON lines and are byte-deterministic for a
fixed seed with the mock advisor.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import __version__
from .advisor import MockAdvisor, RemoteAdvisor, PolicyIntegrationConfig
from .data_model import Dataset, SplitSpec, load_csv, override_column_kinds, split
from .distillation import mine_rules, mine_sequences, save_rules
from .errors import (
    ConfigError,
    CorruptRecord,
    DegenerateOutput,
    DuplicateColumnName,
    EmptyDataset,
    LlaPipeError,
    MissingTargetColumn,
    SingleClassTrain,
    SplitTooSmall,
    TargetHasMissing,
)
from .evaluator import ModelConfig, train_and_eval
from .experience_pool import ExperiencePool
from .operators import BY_ID, Pipeline, REGISTRY, apply_pipeline, operator_name
from .orchestrator import (
    ADVISOR_ADAPTIVE,
    ADVISOR_FIXED,
    ADVISOR_OFF,
    CostModel,
    SearchConfig,
    SearchResult,
    run_search,
    simulate_costs,
)
from .q_agent import QLearningAgent, QLearningConfig
from .trigger import TriggerConfig
from .experience_pool import RetrievalConfig

DATA_ERRORS = (
    MissingTargetColumn,
    EmptyDataset,
    TargetHasMissing,
    DuplicateColumnName,
    SplitTooSmall,
    SingleClassTrain,
    DegenerateOutput,
    CorruptRecord,
    FileNotFoundError,
    OSError,
)

# Keys accepted in a run-configuration file, with Table-style defaults baked
# into the dataclasses; unknown keys are rejected.
CONFIG_KEYS = (
    "data",
    "target",
    "out",
    "episodes",
    "max_pipeline_len",
    "seed",
    "advisor",
    "mode",
    "fixed_interval",
    "alpha_weight",
    "advisor_temperature",
    "softmax_temperature",
    "slope_threshold",
    "cooldown",
    "buffer_min",
    "retrieval_k",
    "admission_threshold",
    "greedy_combined",
    "distill_every",
    "distill_min_support",
    "split",
    "split_seed",
    "experience_pool",
    "l2_penalty",
    "max_iterations",
    "model_learning_rate",
    "q_learning_rate",
    "discount",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay",
    "force_categorical",
    "force_numeric",
    "advisor_model",
)


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def serialize_config(values: dict) -> str:
    """Canonical JSON for a config mapping; load -> serialize -> load is
    the identity."""
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return json.dumps(values, sort_keys=True, indent=2) + "\n"


def _merged_settings(args, parser_defaults: dict) -> dict:
    """defaults < config file < explicit CLI flags."""
    settings = dict(parser_defaults)
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for key in parser_defaults:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


_SEARCH_DEFAULTS = {
    "data": None,
    "target": None,
    "out": "runs/search",
    "episodes": 100,
    "max_pipeline_len": 9,
    "seed": 0,
    "advisor": "mock",
    "mode": ADVISOR_ADAPTIVE,
    "fixed_interval": 2,
    "alpha_weight": 0.7,
    "advisor_temperature": 0.1,
    "softmax_temperature": 0.1,
    "slope_threshold": 0.01,
    "cooldown": 5,
    "buffer_min": 5,
    "retrieval_k": 3,
    "admission_threshold": None,
    "greedy_combined": False,
    "distill_every": 25,
    "distill_min_support": 2,
    "split": "0.6,0.2,0.2",
    "split_seed": 0,
    "experience_pool": None,
    "l2_penalty": 1e-4,
    "max_iterations": 300,
    "model_learning_rate": 0.1,
    "q_learning_rate": 1.0,
    "discount": 0.9,
    "epsilon_start": 1.0,
    "epsilon_end": 0.1,
    "epsilon_decay": 0.99,
    "force_categorical": "",
    "force_numeric": "",
    "advisor_model": "local",
}


def _parse_split(text) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        parts = [float(v) for v in text]
    else:
        parts = [float(v) for v in str(text).split(",")]
    if len(parts) != 3:
        raise ConfigError("--split needs exactly three comma-separated fractions")
    return parts[0], parts[1], parts[2]


def _names_list(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(v for v in str(value).split(",") if v)


def _build_search_config(settings: dict) -> SearchConfig:
    tf, vf, sf = _parse_split(settings["split"])
    advisor = settings["advisor"]
    mode = settings["mode"]
    if advisor not in ("mock", "remote", "off"):
        raise ConfigError(f"unknown advisor backend {advisor!r}")
    if mode not in (ADVISOR_FIXED, ADVISOR_ADAPTIVE):
        raise ConfigError(f"unknown advisor mode {mode!r}")
    advisor_mode = ADVISOR_OFF if advisor == "off" else mode
    try:
        return SearchConfig(
            episodes=int(settings["episodes"]),
            max_pipeline_len=int(settings["max_pipeline_len"]),
            seed=int(settings["seed"]),
            advisor_mode=advisor_mode,
            fixed_interval=int(settings["fixed_interval"]),
            admission_threshold=(
                None
                if settings["admission_threshold"] is None
                else float(settings["admission_threshold"])
            ),
            greedy_combined=bool(settings["greedy_combined"]),
            distill_every=int(settings["distill_every"]),
            distill_min_support=int(settings["distill_min_support"]),
            split=SplitSpec(tf, vf, sf, seed=int(settings["split_seed"])),
            qlearning=QLearningConfig(
                learning_rate=float(settings["q_learning_rate"]),
                discount=float(settings["discount"]),
                epsilon_start=float(settings["epsilon_start"]),
                epsilon_end=float(settings["epsilon_end"]),
                epsilon_decay=float(settings["epsilon_decay"]),
            ),
            trigger=TriggerConfig(
                slope_threshold=float(settings["slope_threshold"]),
                cooldown=int(settings["cooldown"]),
                min_buffer=int(settings["buffer_min"]),
            ),
            retrieval=RetrievalConfig(k=int(settings["retrieval_k"])),
            integration=PolicyIntegrationConfig(
                alpha_weight=float(settings["alpha_weight"]),
                temperature=float(settings["softmax_temperature"]),
            ),
            model=ModelConfig(
                l2_penalty=float(settings["l2_penalty"]),
                max_iterations=int(settings["max_iterations"]),
                learning_rate=float(settings["model_learning_rate"]),
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _load_dataset(settings: dict) -> Dataset:
    if not settings.get("data"):
        raise ConfigError("--data is required")
    if not settings.get("target"):
        raise ConfigError("--target is required")
    d = load_csv(settings["data"], settings["target"])
    cat = _names_list(settings.get("force_categorical", ""))
    num = _names_list(settings.get("force_numeric", ""))
    if cat or num:
        d = override_column_kinds(d, categorical=cat, numeric=num)
    return d


def _write_report(result: SearchResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(
        os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8"
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "episode",
                "accuracy",
                "epsilon",
                "triggered",
                "advisor_calls_cumulative",
                "evaluations",
            ]
        )
        for rec in result.history:
            writer.writerow(
                [
                    rec.episode,
                    repr(float(rec.accuracy)),
                    repr(float(rec.epsilon)),
                    int(rec.triggered),
                    rec.advisor_calls_cumulative,
                    rec.evaluations,
                ]
            )


def cmd_search(args) -> int:
    settings = _merged_settings(args, _SEARCH_DEFAULTS)
    cfg = _build_search_config(settings)
    dataset = _load_dataset(settings)
    if settings["advisor"] == "remote":
        backend = RemoteAdvisor(
            model=str(settings["advisor_model"]),
            temperature=float(settings["advisor_temperature"]),
        )
    else:
        backend = MockAdvisor()
    pool = None
    pool_path = settings.get("experience_pool")
    if pool_path:
        pool = (
            ExperiencePool.load(pool_path)
            if os.path.exists(pool_path)
            else ExperiencePool()
        )
    result = run_search(cfg, dataset, backend=backend, pool=pool)

    out_dir = settings["out"]
    _write_report(result, out_dir)
    train, _val, test = split(dataset, cfg.split)
    test_acc = train_and_eval(
        apply_pipeline(result.best_pipeline, train, cfg.seed),
        apply_pipeline(result.best_pipeline, test, cfg.seed),
        cfg.model,
    )
    summary = {
        "best_pipeline_ids": list(result.best_pipeline.ops),
        "best_pipeline_names": list(result.best_pipeline.names()),
        "best_val_accuracy": result.best_accuracy,
        "test_accuracy": test_acc,
        "episodes": len(result.history),
        "advisor_calls": result.advisor_calls,
        "pool_size": result.pool_size,
    }
    with open(
        os.path.join(out_dir, "best_pipeline.json"), "w", encoding="utf-8"
    ) as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    agent = QLearningAgent()
    agent.q = result.q_values
    agent.to_csv(os.path.join(out_dir, "qtable.csv"))
    if pool_path:
        pool.persist(pool_path)
    print(
        f"best pipeline {list(result.best_pipeline.ops)} "
        f"val accuracy {result.best_accuracy:.4f} test accuracy {test_acc:.4f}"
    )
    print(f"report written to {out_dir}")
    return 0


def cmd_eval_pipeline(args) -> int:
    settings = _merged_settings(args, _SEARCH_DEFAULTS)
    try:
        ops = tuple(int(v) for v in str(args.ops).split(","))
    except ValueError:
        raise ConfigError(f"--ops must be comma-separated integers: {args.ops!r}")
    for op in ops:
        if op not in BY_ID:
            raise ConfigError(f"unknown operator id {op}")
    pipeline = Pipeline(ops)
    dataset = _load_dataset(settings)
    cfg = _build_search_config(settings)
    train, val, _test = split(dataset, cfg.split)
    acc = train_and_eval(
        apply_pipeline(pipeline, train, cfg.seed),
        apply_pipeline(pipeline, val, cfg.seed),
        cfg.model,
    )
    for i, op in enumerate(ops):
        print(f"step {i}: {operator_name(op)}")
    print(f"accuracy: {acc!r}")
    return 0


def cmd_operators_list(args) -> int:
    writer = csv.writer(sys.stdout)
    writer.writerow(["id", "name", "type"])
    for spec in sorted(REGISTRY, key=lambda s: s.id):
        writer.writerow([spec.id, spec.name, spec.type])
    return 0


def cmd_distill(args) -> int:
    if os.path.exists(args.pool):
        pool = ExperiencePool.load(args.pool)
    else:
        pool = ExperiencePool()
    rules = mine_rules(
        pool,
        min_support=args.min_support,
        high_reward_threshold=args.high_reward,
        min_confidence=args.min_confidence,
    )
    save_rules(rules, args.out)
    sequences = mine_sequences(
        pool, min_support=args.min_support, reward_quantile=args.reward_quantile
    )
    print(f"mined {len(sequences)} frequent sequences, {len(rules)} rules")
    print(f"rules written to {args.out}")
    return 0


def cmd_simulate_cost(args) -> int:
    model = CostModel(
        c_llm=args.c_llm, c_rl=args.c_rl, p_stag=args.p_stag, episodes=args.T
    )
    sim = simulate_costs(model, args.K, trials=args.trials, seed=args.seed)
    print(f"cost_fixed: {sim.cost_fixed:g}")
    print(f"cost_adaptive_expected: {sim.cost_adaptive_expected:g}")
    print(f"delta: {sim.delta:g}")
    print(f"monte_carlo_mean: {sim.monte_carlo_mean:g} ({sim.trials} trials)")
    return 0


def cmd_report(args) -> int:
    report_path = os.path.join(args.run, "report.csv")
    if not os.path.exists(report_path):
        raise ConfigError(f"no report.csv under {args.run}")
    with open(report_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out_fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out_fh)
        writer.writerow(
            [
                "episode",
                "accuracy",
                "best_so_far",
                "epsilon",
                "triggered",
                "advisor_calls_cumulative",
            ]
        )
        best = -1.0
        for row in rows:
            best = max(best, float(row["accuracy"]))
            writer.writerow(
                [
                    row["episode"],
                    row["accuracy"],
                    repr(best),
                    row["epsilon"],
                    row["triggered"],
                    row["advisor_calls_cumulative"],
                ]
            )
    finally:
        if args.out:
            out_fh.close()
    if args.qtable:
        agent = QLearningAgent.from_csv(os.path.join(args.run, "qtable.csv"))
        agent.to_csv(args.qtable)
    return 0


def _add_data_flags(p: argparse.ArgumentParser, require_target: bool = True):
    p.add_argument("--data", required=False, help="input CSV path")
    p.add_argument("--target", required=require_target, help="label column name")
    p.add_argument("--config", help="JSON run-configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split", default=None, help="train,val,test fractions")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    p.add_argument(
        "--force-categorical",
        dest="force_categorical",
        default=None,
        help="comma-separated columns to treat as categorical",
    )
    p.add_argument(
        "--force-numeric",
        dest="force_numeric",
        default=None,
        help="comma-separated columns to treat as numeric",
    )
    p.add_argument("--l2-penalty", dest="l2_penalty", type=float, default=None)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p.add_argument(
        "--model-learning-rate",
        dest="model_learning_rate",
        type=float,
        default=None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llapipe",
        description="Search data-preparation pipelines with an advised Q-learning agent.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the pipeline search")
    _add_data_flags(p, require_target=False)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument(
        "--max-pipeline-len", dest="max_pipeline_len", type=int, default=None
    )
    p.add_argument("--advisor", choices=["mock", "remote", "off"], default=None)
    p.add_argument("--mode", choices=[ADVISOR_FIXED, ADVISOR_ADAPTIVE], default=None)
    p.add_argument("--fixed-interval", dest="fixed_interval", type=int, default=None)
    p.add_argument("--alpha-weight", dest="alpha_weight", type=float, default=None)
    p.add_argument(
        "--advisor-temperature",
        dest="advisor_temperature",
        type=float,
        default=None,
    )
    p.add_argument(
        "--softmax-temperature",
        dest="softmax_temperature",
        type=float,
        default=None,
    )
    p.add_argument(
        "--slope-threshold", dest="slope_threshold", type=float, default=None
    )
    p.add_argument("--cooldown", type=int, default=None)
    p.add_argument("--buffer-min", dest="buffer_min", type=int, default=None)
    p.add_argument("--retrieval-k", dest="retrieval_k", type=int, default=None)
    p.add_argument(
        "--admission-threshold",
        dest="admission_threshold",
        type=float,
        default=None,
    )
    p.add_argument(
        "--greedy-combined",
        dest="greedy_combined",
        action="store_const",
        const=True,
        default=None,
    )
    p.add_argument("--distill-every", dest="distill_every", type=int, default=None)
    p.add_argument(
        "--distill-min-support",
        dest="distill_min_support",
        type=int,
        default=None,
    )
    p.add_argument(
        "--experience-pool", dest="experience_pool", default=None, help="pool file"
    )
    p.add_argument("--advisor-model", dest="advisor_model", default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval-pipeline", help="evaluate one pipeline by id list")
    _add_data_flags(p)
    p.add_argument("--ops", required=True, help="comma-separated operator ids")
    p.set_defaults(func=cmd_eval_pipeline)

    p = sub.add_parser("operators", help="operator registry utilities")
    op_sub = p.add_subparsers(dest="subcommand", required=True)
    p_list = op_sub.add_parser("list", help="emit id,name,type CSV")
    p_list.set_defaults(func=cmd_operators_list)

    p = sub.add_parser("distill", help="mine rules from an experience pool")
    p.add_argument("--pool", required=True, help="pool file (JSON lines)")
    p.add_argument("--min-support", dest="min_support", type=int, default=2)
    p.add_argument(
        "--reward-quantile", dest="reward_quantile", type=float, default=0.0
    )
    p.add_argument("--high-reward", dest="high_reward", type=float, default=0.8)
    p.add_argument(
        "--min-confidence", dest="min_confidence", type=float, default=0.6
    )
    p.add_argument("--out", default="rules.jsonl")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("simulate-cost", help="trigger cost-model comparison")
    p.add_argument("--T", type=int, required=True, help="total episodes")
    p.add_argument("--p-stag", dest="p_stag", type=float, required=True)
    p.add_argument("--c-llm", dest="c_llm", type=float, required=True)
    p.add_argument("--c-rl", dest="c_rl", type=float, required=True)
    p.add_argument("--K", type=int, default=1, help="fixed-strategy interval")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate_cost)

    p = sub.add_parser("report", help="emit per-episode plot data for a run")
    p.add_argument("--run", required=True, help="search output directory")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.add_argument("--qtable", default=None, help="re-export the Q-table CSV here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LlaPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
