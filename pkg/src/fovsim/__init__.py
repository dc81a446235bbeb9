"""Simulator and benchmark harness for bandwidth-limited foveated visual search.

A fixed perceptual token budget forces a trade-off between field of view and
effective resolution. This package models that trade-off end to end: synthetic
worlds with a hidden target, a gated stochastic sensor, exact grid-belief
updates, the coverage-resolution planning utility with brute-force information
oracles, a simulated probe/answer observer, crop-refinement search strategies,
and a deterministic experiment harness.
"""

__version__ = "0.1.0"

from .belief import BeliefState, calibration_metrics, coverage, entropies, init_belief, update
from .objective import (
    UtilityReport,
    coverage_resolution,
    exact_full_eig,
    exact_semantic_eig,
    super_additivity_gap,
)
from .observer import ObserverConfig, answer, estimate_utility, probe_once
from .scene import Scene, SceneParams, SuiteParams, generate_scene, scene_suite
from .search import (
    EpisodeRecord,
    StrategyConfig,
    classify_failure,
    fovea_refine,
    greedy_select,
    lookahead_select,
    mcmc_refine,
    perturb_candidates,
    run_episode,
    seed_pool,
)
from .sensor import (
    Design,
    Observation,
    SensorConfig,
    area,
    observation_likelihood,
    resolution_probability,
    sample_observation,
)

__all__ = [
    "__version__",
    "BeliefState",
    "Design",
    "EpisodeRecord",
    "Observation",
    "ObserverConfig",
    "Scene",
    "SceneParams",
    "SensorConfig",
    "StrategyConfig",
    "SuiteParams",
    "UtilityReport",
    "answer",
    "area",
    "calibration_metrics",
    "classify_failure",
    "coverage",
    "coverage_resolution",
    "entropies",
    "estimate_utility",
    "exact_full_eig",
    "exact_semantic_eig",
    "fovea_refine",
    "generate_scene",
    "greedy_select",
    "init_belief",
    "lookahead_select",
    "mcmc_refine",
    "observation_likelihood",
    "perturb_candidates",
    "probe_once",
    "resolution_probability",
    "run_episode",
    "sample_observation",
    "scene_suite",
    "seed_pool",
    "super_additivity_gap",
    "update",
]
