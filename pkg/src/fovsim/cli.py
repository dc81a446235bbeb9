"""Command-line entry points for the simulation experiments.

Exit codes: 0 on success, 2 on a configuration error, 3 when --check is
passed and the experiment's validation thresholds fail.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ConfigError,
    ExperimentSpec,
    MetricsReport,
    bench_observer_config,
    check_report,
    emit_report,
    run_experiment,
    spec_from_dict,
    spec_to_dict,
    _render_table,
)
from .observer import ObserverConfig
from .scene import SceneParams, generate_scene
from .search import StrategyConfig, run_episode
from .sensor import SensorConfig

_COMMAND_KINDS = {
    "bench": "strategy_bench",
    "sweep": "scaling_sweep",
    "cliff": "cliff_demo",
    "validate-eig": "eig_validate",
    "calibrate": "calibration",
    "decompose-failures": "failure_decomposition",
    "ablate-selector": "selector_ablation",
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with spec overrides")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="output directory for records and report")
    parser.add_argument("--episodes", type=int, help="suite size per condition")
    parser.add_argument("--replicates", type=int, default=1)
    parser.add_argument(
        "--format", choices=("table", "csv", "jsonl"), default="table", dest="fmt"
    )
    parser.add_argument(
        "--check",
        action="store_true",
        help="exit 3 unless the experiment passes its validation thresholds",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fovsim",
        description="Bandwidth-limited foveated visual search: simulation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run and print a single search episode")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--grid-size", type=int, default=32)
    run_p.add_argument("--strategy", choices=("seed_only", "greedy", "mcmc", "lookahead"),
                       default="greedy")
    run_p.add_argument("--seed-mode", choices=("single", "multi9", "grid3x3", "oracle"),
                       default="single")
    run_p.add_argument("--prior", choices=("uniform", "misleading", "informative"),
                       default="misleading")
    run_p.add_argument("--feature-scale", type=float, default=16.0)

    for command in _COMMAND_KINDS:
        _add_common(sub.add_parser(command, help=f"run the {_COMMAND_KINDS[command]} experiment"))
    return parser


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    overrides: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
    base = {
        "kind": _COMMAND_KINDS[args.command],
        "seed": args.seed,
        "replicates": args.replicates,
        "format": args.fmt,
    }
    if args.episodes is not None:
        base["episodes"] = args.episodes
    if args.out:
        base["output_dir"] = args.out
    merged = {**base, **overrides, "kind": base["kind"]}
    return spec_from_dict(merged)


def _run_single_episode(args: argparse.Namespace) -> int:
    scene = generate_scene(
        SceneParams(
            grid_size=args.grid_size,
            prior_kind=args.prior,
            target_feature_scale=args.feature_scale,
            distractor_count=3 if args.prior == "misleading" else 0,
            seed=args.seed,
        )
    )
    strategy = StrategyConfig(strategy=args.strategy, seed_mode=args.seed_mode)
    record = run_episode(scene, strategy, bench_observer_config(), SensorConfig(), args.seed)
    print(f"scene seed={scene.params.seed} target_class={scene.target_class} "
          f"target_cell={scene.target_location}")
    for i, turn in enumerate(record.turns):
        d = turn.selected.astuple()
        print(
            f"turn {i + 1}: selected=({d[0]:.3f},{d[1]:.3f},{d[2]:.3f},{d[3]:.3f}) "
            f"score={turn.j_score:.3f} symbol={turn.observation_symbol} "
            f"answer={turn.answer} probes={turn.probe_calls}"
        )
    print(
        f"result: success={record.success} answer={record.final_answer} "
        f"steps={record.steps} probe_calls={record.probe_call_count} "
        f"failure={record.failure_category}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _run_single_episode(args)
    try:
        spec = _spec_from_args(args)
        report = run_experiment(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(_render_table(report))
    if args.check:
        problems = check_report(report)
        if problems:
            for problem in problems:
                print(f"check failed: {problem}", file=sys.stderr)
            return 3
        print("all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
