"""Experiment drivers, metrics, and report emission.

Every experiment is fully determined by its spec (seeds included): re-running
an identical spec reproduces the raw episode records byte for byte. Reports
carry the raw rows they aggregate, so every published number is recomputable.

Cost columns count probe and observer calls, not tokens; the per-turn probe
cost is the strict budget axis (pool size times probes per candidate), while
total calls also reflect early stopping.
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import __version__
from ._rng import derive_rng, derive_seed
from .belief import calibration_metrics, coverage, entropy_bits, init_belief, update
from .objective import (
    coverage_resolution,
    exact_full_eig,
    exact_localization_eig,
    exact_semantic_eig,
    exact_semantic_eig_given_location,
    super_additivity_gap,
)
from .observer import ObserverConfig, answer, estimate_utility
from .scene import (
    Scene,
    SceneParams,
    SuiteParams,
    cell_of,
    generate_scene,
    scene_suite,
)
from .search import StrategyConfig, greedy_select, run_episode
from .sensor import Design, SensorConfig, clamp_design, contains, sample_observation

EXPERIMENT_KINDS = (
    "eig_validate",
    "cliff_demo",
    "strategy_bench",
    "scaling_sweep",
    "calibration",
    "failure_decomposition",
    "selector_ablation",
)
REPORT_FORMATS = ("table", "csv", "jsonl")

# Budget ladders for the scaling sweep; the paper-facing default is the
# middle rung of each family.
GREEDY_FACTOR_LADDERS: dict[int, tuple[float, ...]] = {
    3: (1.5, 1.0, 0.8),
    5: (2.0, 1.5, 1.0, 0.8, 0.64),
    9: (2.5, 2.0, 1.5, 1.2, 1.0, 0.9, 0.8, 0.7, 0.6),
}
MCMC_ITER_LADDER = (3, 6, 12)
LOOKAHEAD_BRANCH_LADDER = (1, 3, 5)

BENCH_STRATEGY_ORDER = ("seed_only", "greedy", "mcmc", "lookahead", "oracle")
ORACLE_HALLUCINATION = 0.32


class ConfigError(ValueError):
    """An experiment spec or config file is invalid."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    seed: int = 0
    episodes: int | None = None
    replicates: int = 1
    grid_size: int | None = None
    y_cardinality: int = 4
    distractor_count: int = 3
    misleading_fraction: float = 1.0
    feature_scale_range: tuple[float, float] | None = None
    strategy: StrategyConfig = StrategyConfig()
    observer: ObserverConfig | None = None
    sensor: SensorConfig = SensorConfig()
    output_dir: str | None = None
    format: str = "table"

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if self.episodes is not None and self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.format not in REPORT_FORMATS:
            raise ConfigError(f"format must be one of {REPORT_FORMATS}, got {self.format!r}")


# Per-kind defaults for suite size, grid, and feature-scale spread. The bench
# settings define the search-dominated regime: targets resolve only near cell
# scale while seed crops sit a factor above it.
KIND_DEFAULTS: dict[str, dict] = {
    "eig_validate": {"episodes": 200},
    "cliff_demo": {"episodes": 1},
    "strategy_bench": {"episodes": 200, "grid_size": 32, "feature_scale_range": (8.0, 48.0)},
    "scaling_sweep": {"episodes": 100, "grid_size": 32, "feature_scale_range": (8.0, 48.0)},
    "calibration": {"episodes": 100, "grid_size": 32, "feature_scale_range": (1.0, 16.0)},
    "failure_decomposition": {
        "episodes": 200,
        "grid_size": 32,
        "feature_scale_range": (8.0, 48.0),
    },
    "selector_ablation": {"episodes": 100, "grid_size": 32, "feature_scale_range": (1.0, 16.0)},
}


def _kind_default(spec: ExperimentSpec, name: str, fallback):
    value = getattr(spec, name)
    if value is not None:
        return value
    return KIND_DEFAULTS.get(spec.kind, {}).get(name, fallback)


def _suite_for(spec: ExperimentSpec) -> tuple:
    params = SuiteParams(
        count=_kind_default(spec, "episodes", 100),
        grid_size=_kind_default(spec, "grid_size", 32),
        y_cardinality=spec.y_cardinality,
        distractor_count=spec.distractor_count,
        misleading_fraction=spec.misleading_fraction,
        feature_scale_range=_kind_default(spec, "feature_scale_range", (1.0, 1.0)),
    )
    return scene_suite(params, derive_seed(spec.seed, "suite", spec.kind))


@dataclass
class MetricsReport:
    kind: str
    conditions: dict[str, dict]
    derived: dict
    rows: list[dict]
    config_echo: dict
    engine_version: str
    wall_clock_s: float


def spec_to_dict(spec: ExperimentSpec) -> dict:
    def encode(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: encode(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [encode(v) for v in obj]
        return obj

    return encode(spec)


def spec_from_dict(data: dict) -> ExperimentSpec:
    data = dict(data)
    try:
        if "strategy" in data and isinstance(data["strategy"], dict):
            s = dict(data["strategy"])
            if "scaling_factors" in s:
                s["scaling_factors"] = tuple(s["scaling_factors"])
            data["strategy"] = StrategyConfig(**s)
        if data.get("observer") is not None and isinstance(data["observer"], dict):
            data["observer"] = ObserverConfig(**data["observer"])
        if "sensor" in data and isinstance(data["sensor"], dict):
            data["sensor"] = SensorConfig(**data["sensor"])
        if data.get("feature_scale_range") is not None:
            data["feature_scale_range"] = tuple(data["feature_scale_range"])
        return ExperimentSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"bad experiment spec: {exc}") from exc


def bootstrap_ci(
    values, seed: int, n_resamples: int = 1000, alpha: float = 0.05
) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean, with a fixed resample stream."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return (float("nan"), float("nan"))
    rng = derive_rng(seed, "bootstrap")
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    lo, hi = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def paired_gap_ci(
    base, other, seed: int, n_resamples: int = 1000, alpha: float = 0.05
) -> dict:
    """Bootstrap CI for mean(other) - mean(base) over paired per-scene values."""
    diffs = np.asarray(other, dtype=float) - np.asarray(base, dtype=float)
    gap = float(diffs.mean())
    lo, hi = bootstrap_ci(diffs, seed, n_resamples=n_resamples, alpha=alpha)
    half = (hi - lo) / 2.0
    return {"gap": gap, "ci_low": lo, "ci_high": hi, "ci_half_width": half}


def _episode_rows(
    suite,
    conditions: dict[str, StrategyConfig],
    observer_cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    spec_seed: int,
    replicates: int,
) -> list[dict]:
    rows = []
    for name, strat in conditions.items():
        for i, scene in enumerate(suite.scenes):
            for rep in range(replicates):
                ep_seed = derive_seed(spec_seed, "episode", i, rep)
                record = run_episode(scene, strat, observer_cfg, sensor_cfg, ep_seed)
                row = record.to_record()
                row["condition"] = name
                row["scene_index"] = i
                row["replicate"] = rep
                rows.append(row)
    return rows


def _aggregate_conditions(rows: list[dict], spec_seed: int) -> dict[str, dict]:
    out: dict[str, dict] = {}
    names = sorted({r["condition"] for r in rows})
    for name in names:
        sub = [r for r in rows if r["condition"] == name]
        successes = [1.0 if r["success"] else 0.0 for r in sub]
        lo, hi = bootstrap_ci(successes, derive_seed(spec_seed, "ci", name))
        out[name] = {
            "episodes": len(sub),
            "success_rate": float(np.mean(successes)),
            "ci_low": lo,
            "ci_high": hi,
            "mean_probe_calls": float(np.mean([r["probe_calls"] for r in sub])),
            "mean_observer_calls": float(np.mean([r["observer_calls"] for r in sub])),
            "mean_steps": float(np.mean([r["steps"] for r in sub])),
        }
    return out


def _success_by_scene(rows: list[dict], name: str) -> list[float]:
    sub = sorted(
        (r for r in rows if r["condition"] == name),
        key=lambda r: (r["scene_index"], r["replicate"]),
    )
    return [1.0 if r["success"] else 0.0 for r in sub]


def _bench_conditions(spec: ExperimentSpec) -> dict[str, StrategyConfig]:
    base = spec.strategy
    return {
        "seed_only": replace(base, strategy="seed_only", seed_mode="single"),
        "greedy": replace(base, strategy="greedy", seed_mode="single"),
        "mcmc": replace(base, strategy="mcmc", seed_mode="single"),
        "lookahead": replace(base, strategy="lookahead", seed_mode="single"),
        "oracle": replace(base, strategy="seed_only", seed_mode="oracle"),
    }


def _run_strategy_bench(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    suite = _suite_for(spec)
    observer_cfg = spec.observer or bench_observer_config()
    rows = _episode_rows(
        suite, _bench_conditions(spec), observer_cfg, spec.sensor, spec.seed, spec.replicates
    )
    conditions = _aggregate_conditions(rows, spec.seed)
    gaps = {}
    for lower, upper in zip(BENCH_STRATEGY_ORDER[:-1], BENCH_STRATEGY_ORDER[1:]):
        gaps[f"{upper}_minus_{lower}"] = paired_gap_ci(
            _success_by_scene(rows, lower),
            _success_by_scene(rows, upper),
            derive_seed(spec.seed, "gap", lower, upper),
        )
    derived = {
        "strategy_order": list(BENCH_STRATEGY_ORDER),
        "gaps": gaps,
        "oracle_success": conditions["oracle"]["success_rate"],
        "oracle_hallucination": observer_cfg.hallucination,
        "suite": suite.composition,
    }
    return conditions, derived, rows


def _run_scaling_sweep(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    suite = _suite_for(spec)
    observer_cfg = spec.observer or bench_observer_config()
    base = spec.strategy
    conditions_cfg: dict[str, StrategyConfig] = {}
    budgets: dict[str, tuple[str, int]] = {}
    for n, factors in GREEDY_FACTOR_LADDERS.items():
        name = f"greedy_{n}"
        conditions_cfg[name] = replace(
            base, strategy="greedy", seed_mode="single", scaling_factors=factors
        )
        budgets[name] = ("greedy", n)
    for iters in MCMC_ITER_LADDER:
        name = f"mcmc_{iters}"
        conditions_cfg[name] = replace(
            base, strategy="mcmc", seed_mode="single", mcmc_max_iters=iters
        )
        budgets[name] = ("mcmc", iters)
    for branches in LOOKAHEAD_BRANCH_LADDER:
        name = f"lookahead_{branches}"
        conditions_cfg[name] = replace(
            base, strategy="lookahead", seed_mode="single", lookahead_branches=branches
        )
        budgets[name] = ("lookahead", branches)

    rows = _episode_rows(suite, conditions_cfg, observer_cfg, spec.sensor, spec.seed, spec.replicates)
    conditions = _aggregate_conditions(rows, spec.seed)
    for name, agg in conditions.items():
        family, budget = budgets[name]
        agg["family"] = family
        agg["budget"] = budget
        sub = [r for r in rows if r["condition"] == name]
        agg["mean_probe_calls_per_turn"] = float(
            np.mean([r["probe_calls"] / max(r["steps"], 1) for r in sub])
        )

    families = {}
    for family in ("greedy", "mcmc", "lookahead"):
        entries = sorted(
            (agg for agg in conditions.values() if agg["family"] == family),
            key=lambda a: a["budget"],
        )
        budget_axis = [a["budget"] for a in entries]
        success_axis = [a["success_rate"] for a in entries]
        cost_axis = [a["mean_probe_calls_per_turn"] for a in entries]
        rho = stats.spearmanr(budget_axis, success_axis).statistic
        families[family] = {
            "budgets": budget_axis,
            "success": success_axis,
            "cost_per_turn": cost_axis,
            "spearman_rho": float(rho) if not np.isnan(rho) else 0.0,
            "cost_strictly_increasing": bool(
                all(b > a for a, b in zip(cost_axis, cost_axis[1:]))
            ),
        }
    derived = {"families": families, "cost_axis": "probe calls per turn", "suite": suite.composition}
    return conditions, derived, rows


def _run_eig_validate(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    count = _kind_default(spec, "episodes", 200)
    rows = []
    max_semantic_gap = 0.0
    max_decomp_gap = 0.0
    agreements = []
    for i in range(count):
        rng = derive_rng(spec.seed, "eig", i)
        grid = int(rng.integers(4, 9))
        n_classes = int(rng.integers(2, 5))
        kind = ("uniform", "misleading", "informative")[int(rng.integers(0, 3))]
        scene = generate_scene(
            SceneParams(
                grid_size=grid,
                y_cardinality=n_classes,
                target_feature_scale=float(np.exp(rng.uniform(np.log(0.25), np.log(16.0)))),
                distractor_count=2,
                prior_kind=kind,
                seed=derive_seed(spec.seed, "eig-scene", i),
            )
        )
        ideal_sensor = replace(spec.sensor, confusion=0.0)
        belief = init_belief(scene)
        for step in range(int(rng.integers(0, 3))):
            d_step = _random_design(rng)
            z = sample_observation(scene, d_step, ideal_sensor, rng)
            belief = update(belief, d_step, z, ideal_sensor, scene.params.target_feature_scale)
        d = _random_design(rng)
        rho = scene.params.target_feature_scale

        report = coverage_resolution(belief, d, ideal_sensor, rho)
        eig = exact_semantic_eig(belief, d, ideal_sensor, rho)
        gap = abs(eig - report.u_value)
        full = exact_full_eig(belief, d, ideal_sensor, rho)
        loc = exact_localization_eig(belief, d, ideal_sensor, rho)
        sem_given_loc = exact_semantic_eig_given_location(belief, d, ideal_sensor, rho)
        decomp_gap = abs(full - (loc + sem_given_loc))
        max_semantic_gap = max(max_semantic_gap, gap)
        max_decomp_gap = max(max_decomp_gap, decomp_gap)

        # Noisy-observer variant: the utility should still pick the same
        # design as the exact gain over a small candidate pool.
        noisy_sensor = replace(spec.sensor, confusion=0.1)
        pool = [_random_design(rng) for _ in range(5)]
        by_j = greedy_select(
            [(c, coverage_resolution(belief, c, noisy_sensor, rho).j_value) for c in pool]
        )
        by_eig = greedy_select(
            [(c, exact_semantic_eig(belief, c, noisy_sensor, rho)) for c in pool]
        )
        agreements.append(1.0 if by_j == by_eig else 0.0)

        rows.append(
            {
                "scenario": i,
                "grid_size": grid,
                "y_cardinality": n_classes,
                "design": list(d.astuple()),
                "j_value": report.j_value,
                "u_value": report.u_value,
                "exact_semantic_eig": eig,
                "semantic_gap": gap,
                "exact_full_eig": full,
                "localization_eig": loc,
                "semantic_eig_given_location": sem_given_loc,
                "decomposition_gap": decomp_gap,
                "argmax_agreement": bool(agreements[-1]),
            }
        )
    conditions = {
        "ideal_regime": {
            "scenarios": count,
            "max_semantic_gap": max_semantic_gap,
            "max_decomposition_gap": max_decomp_gap,
        },
        "noisy_regime": {"argmax_agreement_rate": float(np.mean(agreements))},
    }
    derived = {
        "max_semantic_gap": max_semantic_gap,
        "max_decomposition_gap": max_decomp_gap,
        "argmax_agreement_rate": float(np.mean(agreements)),
    }
    return conditions, derived, rows


def _random_design(rng: np.random.Generator) -> Design:
    w = float(rng.uniform(0.05, 1.0))
    h = float(rng.uniform(0.05, 1.0))
    return clamp_design(
        float(rng.uniform(0.0, 1.0 - w)), float(rng.uniform(0.0, 1.0 - h)), w, h
    )


def cliff_scene(seed: int = 0) -> Scene:
    """Small two-class world where only near-cell crops resolve the target."""
    return generate_scene(
        SceneParams(
            grid_size=4,
            y_cardinality=2,
            target_feature_scale=1.0,
            distractor_count=0,
            prior_kind="uniform",
            seed=seed,
        )
    )


def _run_cliff_demo(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    scene = cliff_scene(derive_seed(spec.seed, "cliff"))
    belief = init_belief(scene)
    g = scene.params.grid_size
    iy, ix = cell_of(scene.target_location, g)
    d_wide = Design(0.0, 0.0, 1.0, 1.0)
    d_zoom = Design(ix / g, iy / g, 1.0 / g, 1.0 / g)
    report = super_additivity_gap(
        belief, d_wide, d_zoom, spec.sensor, scene.params.target_feature_scale, scene
    )
    h_y = entropy_bits(belief.semantic)
    row = {
        "i_wide": report.i_wide,
        "i_zoom": report.i_zoom,
        "i_joint": report.i_joint,
        "gap": report.gap,
        "semantic_entropy": h_y,
        "d_wide": list(d_wide.astuple()),
        "d_zoom": list(d_zoom.astuple()),
    }
    conditions = {"cliff": dict(row)}
    derived = {
        "singletons_sum": report.i_wide + report.i_zoom,
        "joint_fraction_of_entropy": report.i_joint / h_y,
        "gap": report.gap,
    }
    return conditions, derived, [row]


def _run_calibration(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    suite = _suite_for(spec)
    sensor_cfg = spec.sensor
    rows = []
    for i, scene in enumerate(suite.scenes):
        g = scene.params.grid_size
        belief = init_belief(scene)
        rho = scene.params.target_feature_scale

        t_iy, t_ix = cell_of(scene.target_location, g)
        d_pos = Design(t_ix / g, t_iy / g, 1.0 / g, 1.0 / g)
        rng = derive_rng(spec.seed, "calibration", i)
        z_pos = sample_observation(scene, d_pos, sensor_cfg, rng)
        pos_before = calibration_metrics(belief, scene, d_pos)
        pos_after_state = update(belief, d_pos, z_pos, sensor_cfg, rho)
        pos_after = calibration_metrics(pos_after_state, scene, d_pos)

        decoys = scene.distractor_locations
        decoy = max(decoys, key=lambda p: belief.spatial[cell_of(p, g)])
        d_iy, d_ix = cell_of(decoy, g)
        d_neg = Design(d_ix / g, d_iy / g, 1.0 / g, 1.0 / g)
        z_neg = sample_observation(scene, d_neg, sensor_cfg, rng)
        neg_before = calibration_metrics(belief, scene, d_neg)
        neg_after_state = update(belief, d_neg, z_neg, sensor_cfg, rho)
        neg_after = calibration_metrics(neg_after_state, scene, d_neg)

        rows.append(
            {
                "scene_index": i,
                "pos_p_target_before": pos_before[0],
                "pos_p_viewed_before": pos_before[1],
                "pos_p_target_after": pos_after[0],
                "pos_p_viewed_after": pos_after[1],
                "neg_p_target_before": neg_before[0],
                "neg_p_viewed_before": neg_before[1],
                "neg_p_target_after": neg_after[0],
                "neg_p_viewed_after": neg_after[1],
                "neg_target_increased": bool(neg_after[0] > neg_before[0]),
            }
        )
    conditions = {
        "positive_evidence": {
            "mean_p_target_after": float(np.mean([r["pos_p_target_after"] for r in rows])),
            "mean_p_viewed_after": float(np.mean([r["pos_p_viewed_after"] for r in rows])),
        },
        "negative_evidence": {
            "mean_p_viewed_after": float(np.mean([r["neg_p_viewed_after"] for r in rows])),
            "target_increase_rate": float(np.mean([r["neg_target_increased"] for r in rows])),
        },
    }
    derived = {
        "positive_p_target": conditions["positive_evidence"]["mean_p_target_after"],
        "positive_p_viewed": conditions["positive_evidence"]["mean_p_viewed_after"],
        "negative_p_viewed": conditions["negative_evidence"]["mean_p_viewed_after"],
        "negative_target_increase_rate": conditions["negative_evidence"]["target_increase_rate"],
        "suite": suite.composition,
    }
    return conditions, derived, rows


def bench_observer_config() -> ObserverConfig:
    """Observer defaults for episode benchmarks: recognition-limited ceiling."""
    return ObserverConfig(hallucination=ORACLE_HALLUCINATION)


def _run_failure_decomposition(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    suite = _suite_for(spec)
    observer_cfg = spec.observer or bench_observer_config()
    base = spec.strategy
    conditions_cfg = {
        "single": replace(base, strategy="greedy", seed_mode="single"),
        "multi9": replace(base, strategy="greedy", seed_mode="multi9"),
    }
    rows = _episode_rows(suite, conditions_cfg, observer_cfg, spec.sensor, spec.seed, spec.replicates)
    conditions = _aggregate_conditions(rows, spec.seed)
    counts: dict[str, dict[str, int]] = {}
    for name in conditions_cfg:
        sub = [r for r in rows if r["condition"] == name]
        failures = [r for r in sub if not r["success"]]
        by_cat = {
            cat: sum(1 for r in failures if r["failure_category"] == cat)
            for cat in ("proposal_limited", "search_limited", "reasoning_limited")
        }
        counts[name] = {"failures": len(failures), **by_cat}
        conditions[name].update(by_cat)
        conditions[name]["failures"] = len(failures)
    single_failures = max(counts["single"]["failures"], 1)
    derived = {
        "counts": counts,
        "single_proposal_share": counts["single"]["proposal_limited"] / single_failures,
        "proposal_reduction": (
            1.0
            - counts["multi9"]["proposal_limited"]
            / max(counts["single"]["proposal_limited"], 1)
        ),
        "suite": suite.composition,
    }
    return conditions, derived, rows


def _run_selector_ablation(spec: ExperimentSpec) -> tuple[dict, dict, list[dict]]:
    suite = _suite_for(spec)
    observer_cfg = spec.observer or bench_observer_config()
    sensor_cfg = spec.sensor
    rows = []
    tiles = [
        Design(i / 3.0, j / 3.0, 1.0 / 3.0, 1.0 / 3.0) for i in range(3) for j in range(3)
    ]
    for i, scene in enumerate(suite.scenes):
        belief = init_belief(scene)
        for selector in ("probe", "direct", "random"):
            rng = derive_rng(spec.seed, "selector", selector, i)
            if selector == "probe":
                scored = [
                    (t, estimate_utility(scene, t, observer_cfg, sensor_cfg, rng))
                    for t in tiles
                ]
                pick = greedy_select(scored)
            elif selector == "direct":
                pick = greedy_select([(t, coverage(belief, t)) for t in tiles])
            else:
                pick = tiles[int(rng.integers(0, len(tiles)))]
            ans = answer(scene, pick, observer_cfg, sensor_cfg, rng)
            hit = contains(pick, scene.target_location)
            g = scene.params.grid_size
            iy, ix = cell_of(scene.target_location, g)
            target_box = Design(ix / g, iy / g, 1.0 / g, 1.0 / g)
            rows.append(
                {
                    "scene_index": i,
                    "condition": selector,
                    "selected": list(pick.astuple()),
                    "qa_correct": bool(ans == scene.target_class),
                    "hit": bool(hit),
                    "iou": _iou(pick, target_box),
                }
            )
    conditions = {}
    for selector in ("probe", "direct", "random"):
        sub = [r for r in rows if r["condition"] == selector]
        conditions[selector] = {
            "qa_accuracy": float(np.mean([r["qa_correct"] for r in sub])),
            "hit_rate": float(np.mean([r["hit"] for r in sub])),
            "mean_iou": float(np.mean([r["iou"] for r in sub])),
        }
    derived = {
        "probe_beats_direct": conditions["probe"]["qa_accuracy"]
        >= conditions["direct"]["qa_accuracy"],
        "probe_beats_random": conditions["probe"]["qa_accuracy"]
        >= conditions["random"]["qa_accuracy"],
        "suite": suite.composition,
    }
    return conditions, derived, rows


def _iou(a: Design, b: Design) -> float:
    ix = max(0.0, min(a.u + a.w, b.u + b.w) - max(a.u, b.u))
    iy = max(0.0, min(a.v + a.h, b.v + b.h) - max(a.v, b.v))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0.0 else 0.0


_RUNNERS = {
    "eig_validate": _run_eig_validate,
    "cliff_demo": _run_cliff_demo,
    "strategy_bench": _run_strategy_bench,
    "scaling_sweep": _run_scaling_sweep,
    "calibration": _run_calibration,
    "failure_decomposition": _run_failure_decomposition,
    "selector_ablation": _run_selector_ablation,
}


def run_experiment(spec: ExperimentSpec) -> MetricsReport:
    """Run one experiment kind; deterministic given the spec."""
    start = time.perf_counter()
    conditions, derived, rows = _RUNNERS[spec.kind](spec)
    report = MetricsReport(
        kind=spec.kind,
        conditions=conditions,
        derived=derived,
        rows=rows,
        config_echo=spec_to_dict(spec),
        engine_version=__version__,
        wall_clock_s=time.perf_counter() - start,
    )
    if spec.output_dir:
        os.makedirs(spec.output_dir, exist_ok=True)
        emit_report(report, "jsonl", os.path.join(spec.output_dir, f"{spec.kind}_records.jsonl"))
        emit_report(report, spec.format, os.path.join(spec.output_dir, f"{spec.kind}_report.{_ext(spec.format)}"))
    return report


def _ext(fmt: str) -> str:
    return {"table": "txt", "csv": "csv", "jsonl": "jsonl"}[fmt]


def _render_jsonl(report: MetricsReport) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in report.rows)


def _flat_metrics(report: MetricsReport):
    for condition in sorted(report.conditions):
        metrics = report.conditions[condition]
        for key in sorted(metrics):
            value = metrics[key]
            if isinstance(value, (int, float, bool, np.floating, np.integer)):
                yield condition, key, value


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def _render_csv(report: MetricsReport) -> str:
    lines = ["condition,metric,value"]
    for condition, key, value in _flat_metrics(report):
        lines.append(f"{condition},{key},{_format_value(value)}")
    return "\n".join(lines) + "\n"


def _render_table(report: MetricsReport) -> str:
    buf = io.StringIO()
    buf.write(f"experiment: {report.kind} (engine {report.engine_version})\n")
    rows = list(_flat_metrics(report))
    if rows:
        width_cond = max(len(r[0]) for r in rows)
        width_key = max(len(r[1]) for r in rows)
        for condition, key, value in rows:
            buf.write(
                f"{condition:<{width_cond}}  {key:<{width_key}}  {_format_value(value)}\n"
            )
    buf.write(f"raw rows: {len(report.rows)}\n")
    return buf.getvalue()


def emit_report(report: MetricsReport, fmt: str, path: str) -> str:
    """Write a report rendering atomically; identical reports give identical bytes."""
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    renderers = {"jsonl": _render_jsonl, "csv": _render_csv, "table": _render_table}
    payload = renderers[fmt](report)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


# Acceptance-style checks used by the CLI --check flag; thresholds mirror the
# shipped validation suite.
def check_report(report: MetricsReport) -> list[str]:
    problems: list[str] = []
    d = report.derived
    if report.kind == "eig_validate":
        if d["max_semantic_gap"] > 1e-9:
            problems.append(f"semantic gap {d['max_semantic_gap']:.3g} exceeds 1e-9")
        if d["max_decomposition_gap"] > 1e-9:
            problems.append(f"decomposition gap {d['max_decomposition_gap']:.3g} exceeds 1e-9")
        if d["argmax_agreement_rate"] < 0.9:
            problems.append(f"argmax agreement {d['argmax_agreement_rate']:.3g} below 0.9")
    elif report.kind == "cliff_demo":
        if d["singletons_sum"] >= 0.1:
            problems.append(f"singleton information {d['singletons_sum']:.3g} not below 0.1 bits")
        if d["joint_fraction_of_entropy"] <= 0.9:
            problems.append(
                f"two-step information fraction {d['joint_fraction_of_entropy']:.3g} not above 0.9"
            )
        if d["gap"] <= 0.0:
            problems.append("super-additivity gap is not positive")
    elif report.kind == "strategy_bench":
        order = d["strategy_order"]
        rates = [report.conditions[name]["success_rate"] for name in order]
        for (lo_name, hi_name), (lo, hi) in zip(zip(order[:-1], order[1:]), zip(rates[:-1], rates[1:])):
            if not hi > lo:
                problems.append(f"expected {hi_name} > {lo_name}, got {hi:.3g} <= {lo:.3g}")
        for name, gap in d["gaps"].items():
            if not gap["gap"] > gap["ci_half_width"]:
                problems.append(
                    f"gap {name} = {gap['gap']:.3g} within CI half-width {gap['ci_half_width']:.3g}"
                )
        if abs(d["oracle_success"] - 0.68) > 0.03:
            problems.append(f"oracle success {d['oracle_success']:.3g} outside 0.68 +/- 0.03")
    elif report.kind == "scaling_sweep":
        for family, info in d["families"].items():
            if info["spearman_rho"] < 0.0:
                problems.append(f"{family}: Spearman rho {info['spearman_rho']:.3g} below 0")
            if not info["cost_strictly_increasing"]:
                problems.append(f"{family}: cost proxy not strictly increasing")
    elif report.kind == "calibration":
        if d["positive_p_target"] <= 0.9 or d["positive_p_viewed"] <= 0.9:
            problems.append("positive-evidence arm did not concentrate above 0.9")
        if d["negative_p_viewed"] >= 0.05:
            problems.append("negative-evidence arm did not suppress the viewed region below 0.05")
        if d["negative_target_increase_rate"] < 1.0:
            problems.append("negative evidence failed to strictly increase target mass somewhere")
    elif report.kind == "failure_decomposition":
        if d["single_proposal_share"] < 0.6:
            problems.append(
                f"single-seed proposal-limited share {d['single_proposal_share']:.3g} below 0.6"
            )
        if d["proposal_reduction"] < 0.5:
            problems.append(
                f"multi-seed proposal-limited reduction {d['proposal_reduction']:.3g} below 0.5"
            )
    elif report.kind == "selector_ablation":
        if not d["probe_beats_direct"] or not d["probe_beats_random"]:
            problems.append("probe selector did not outperform the alternatives")
    return problems
