"""Synthetic worlds with a hidden point target.

A scene holds the latent target location and class, decoy locations, and a
suggested spatial prior standing in for what a bandwidth-starved global view
would believe. Misleading priors put most of their mass on the decoys while
keeping a faint bump around the target, mimicking a global view in which the
target is nearly (but not exactly) invisible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_rng, derive_seed

PRIOR_KINDS = ("uniform", "misleading", "informative")

# Misleading-prior mass split: decoys / faint target neighborhood / elsewhere.
_MISLEAD_DISTRACTOR_MASS = 0.75
_MISLEAD_TARGET_MASS = 0.15
_INFORMATIVE_MASS = 0.7
_NEIGHBORHOOD_RADIUS = 2  # cells, Chebyshev


@dataclass(frozen=True)
class SceneParams:
    """Knobs controlling how hard a synthetic world is to search."""

    grid_size: int = 64
    y_cardinality: int = 4
    target_feature_scale: float = 1.0
    distractor_count: int = 3
    prior_kind: str = "uniform"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.y_cardinality < 2:
            raise ValueError(f"y_cardinality must be >= 2, got {self.y_cardinality}")
        if self.target_feature_scale <= 0.0:
            raise ValueError(
                f"target_feature_scale must be positive, got {self.target_feature_scale}"
            )
        if self.distractor_count < 0:
            raise ValueError(f"distractor_count must be >= 0, got {self.distractor_count}")
        if self.prior_kind not in PRIOR_KINDS:
            raise ValueError(f"prior_kind must be one of {PRIOR_KINDS}, got {self.prior_kind!r}")
        if self.prior_kind == "misleading" and self.distractor_count < 1:
            raise ValueError("distractor_count must be >= 1 for a misleading prior_kind")


@dataclass(frozen=True)
class Scene:
    """Immutable synthetic world; safe to share across parallel episodes."""

    params: SceneParams
    target_location: tuple[float, float]
    target_class: int
    distractor_locations: tuple[tuple[float, float], ...]
    suggested_prior: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        prior = np.ascontiguousarray(self.suggested_prior, dtype=float)
        prior.setflags(write=False)
        object.__setattr__(self, "suggested_prior", prior)
        g = self.params.grid_size
        if prior.shape != (g, g):
            raise ValueError(f"suggested_prior must be ({g}, {g}), got {prior.shape}")
        if abs(float(prior.sum()) - 1.0) > 1e-12 or (prior < 0).any():
            raise ValueError("suggested_prior must be a distribution (nonnegative, sum 1)")


def cell_of(point: tuple[float, float], grid_size: int) -> tuple[int, int]:
    """Grid cell (row, col) containing a point; the 1.0 edge maps inward."""
    ix = min(int(point[0] * grid_size), grid_size - 1)
    iy = min(int(point[1] * grid_size), grid_size - 1)
    return iy, ix


def _neighborhood_mask(grid_size: int, cell: tuple[int, int], radius: int) -> np.ndarray:
    iy, ix = cell
    rows = np.abs(np.arange(grid_size) - iy)
    cols = np.abs(np.arange(grid_size) - ix)
    return (rows[:, None] <= radius) & (cols[None, :] <= radius)


def _bump_weights(grid_size: int, center: tuple[int, int], radius: int) -> np.ndarray:
    """Peaked kernel over the center's neighborhood: weight 1/(1+distance)."""
    iy, ix = center
    rows = np.abs(np.arange(grid_size) - iy)
    cols = np.abs(np.arange(grid_size) - ix)
    cheb = np.maximum(rows[:, None], cols[None, :])
    weights = np.where(cheb <= radius, 1.0 / (1.0 + cheb.astype(float)), 0.0)
    return weights


def _build_prior(
    kind: str,
    grid_size: int,
    target_cell: tuple[int, int],
    distractor_cells: list[tuple[int, int]],
    bump_center: tuple[int, int],
) -> np.ndarray:
    g = grid_size
    n_cells = g * g
    if kind == "uniform":
        return np.full((g, g), 1.0 / n_cells)

    if kind == "informative":
        near = _neighborhood_mask(g, target_cell, _NEIGHBORHOOD_RADIUS)
        prior = np.zeros((g, g))
        prior[near] = _INFORMATIVE_MASS / near.sum()
        far = ~near
        prior[far] = (1.0 - _INFORMATIVE_MASS) / far.sum()
        return prior / prior.sum()

    # Misleading: decoys dominate; the target keeps a faint, spatially
    # imprecise bump (peaked one cell off) standing in for a blurred global
    # view, so broad proposal pools can reach it; everything else is flat.
    prior = np.zeros((g, g))
    for iy, ix in distractor_cells:
        prior[iy, ix] += _MISLEAD_DISTRACTOR_MASS / len(distractor_cells)
    bump = _bump_weights(g, bump_center, _NEIGHBORHOOD_RADIUS)
    for iy, ix in distractor_cells:
        bump[iy, ix] = 0.0
    if bump.sum() > 0.0:
        prior += _MISLEAD_TARGET_MASS * bump / bump.sum()
    rest = (prior == 0.0)
    if rest.any():
        prior[rest] = (1.0 - prior.sum()) / rest.sum()
    return prior / prior.sum()


def generate_scene(params: SceneParams) -> Scene:
    """Deterministically build one scene from its parameters.

    Target placement is uniform on the unit square; decoys land in cells
    distinct from the target's neighborhood and from each other.
    """
    rng = derive_rng(params.seed, "scene")
    g = params.grid_size
    target = (float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0)))
    target_cell = cell_of(target, g)
    target_class = int(rng.integers(0, params.y_cardinality))

    distractors: list[tuple[float, float]] = []
    taken = {target_cell}
    guard = 0
    while len(distractors) < params.distractor_count:
        guard += 1
        if guard > 10_000:
            raise ValueError(
                f"distractor_count {params.distractor_count} does not fit grid_size {g}"
            )
        p = (float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0)))
        c = cell_of(p, g)
        too_close = (
            abs(c[0] - target_cell[0]) <= _NEIGHBORHOOD_RADIUS
            and abs(c[1] - target_cell[1]) <= _NEIGHBORHOOD_RADIUS
        )
        if c in taken or too_close:
            continue
        taken.add(c)
        distractors.append(p)

    # The misleading bump peaks one or two cells off the target: the global
    # view sees something faint in the right region, localized imprecisely.
    ring = [
        (dy, dx)
        for dy in range(-_NEIGHBORHOOD_RADIUS, _NEIGHBORHOOD_RADIUS + 1)
        for dx in range(-_NEIGHBORHOOD_RADIUS, _NEIGHBORHOOD_RADIUS + 1)
        if (dy, dx) != (0, 0)
    ]
    dy, dx = ring[int(rng.integers(0, len(ring)))]
    bump_center = (
        min(max(target_cell[0] + dy, 0), g - 1),
        min(max(target_cell[1] + dx, 0), g - 1),
    )
    prior = _build_prior(
        params.prior_kind, g, target_cell, [cell_of(p, g) for p in distractors], bump_center
    )
    scene = Scene(
        params=params,
        target_location=target,
        target_class=target_class,
        distractor_locations=tuple(distractors),
        suggested_prior=prior,
    )
    if params.prior_kind == "misleading":
        tgt_mass = prior[target_cell]
        max_decoy = max(prior[cell_of(p, g)] for p in distractors)
        if not tgt_mass < max_decoy:
            raise AssertionError("misleading prior failed to bury the target cell")
    return scene


@dataclass(frozen=True)
class SuiteParams:
    """Composition of a scene suite."""

    count: int
    grid_size: int = 64
    y_cardinality: int = 4
    distractor_count: int = 3
    misleading_fraction: float = 1.0
    feature_scale_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"suite count must be >= 1, got {self.count}")
        if not 0.0 <= self.misleading_fraction <= 1.0:
            raise ValueError(
                f"misleading_fraction must be in [0, 1], got {self.misleading_fraction}"
            )
        lo, hi = self.feature_scale_range
        if lo <= 0.0 or hi < lo:
            raise ValueError(f"feature_scale_range must satisfy 0 < lo <= hi, got {lo}, {hi}")


@dataclass(frozen=True)
class SceneSuite:
    scenes: tuple[Scene, ...]
    composition: dict


def scene_suite(suite_params: SuiteParams, base_seed: int) -> SceneSuite:
    """Build a suite of scenes with pairwise distinct derived seeds.

    Scene i gets a misleading prior iff i < round(count * misleading_fraction);
    feature scales are log-uniform over the configured range.
    """
    sp = suite_params
    n_misleading = round(sp.count * sp.misleading_fraction)
    scenes = []
    for i in range(sp.count):
        seed_i = derive_seed(base_seed, "suite-scene", i)
        kind = "misleading" if i < n_misleading else "uniform"
        lo, hi = sp.feature_scale_range
        if hi > lo:
            u = derive_rng(base_seed, "suite-scale", i).uniform(np.log(lo), np.log(hi))
            scale = float(np.exp(u))
        else:
            scale = lo
        scenes.append(
            generate_scene(
                SceneParams(
                    grid_size=sp.grid_size,
                    y_cardinality=sp.y_cardinality,
                    target_feature_scale=scale,
                    distractor_count=sp.distractor_count,
                    prior_kind=kind,
                    seed=seed_i,
                )
            )
        )
    composition = {
        "count": sp.count,
        "grid_size": sp.grid_size,
        "y_cardinality": sp.y_cardinality,
        "distractor_count": sp.distractor_count,
        "misleading_fraction": sp.misleading_fraction,
        "misleading_count": n_misleading,
        "feature_scale_range": list(sp.feature_scale_range),
        "base_seed": base_seed,
    }
    return SceneSuite(scenes=tuple(scenes), composition=composition)


def scene_to_record(scene: Scene) -> dict:
    """Flat JSON-able record; one scene per line in suite files."""
    p = scene.params
    return {
        "grid_size": p.grid_size,
        "y_cardinality": p.y_cardinality,
        "target_location": list(scene.target_location),
        "target_class": scene.target_class,
        "prior_kind": p.prior_kind,
        "seed": p.seed,
        "prior_cells": [float(x) for x in scene.suggested_prior.ravel()],
        "target_feature_scale": p.target_feature_scale,
        "distractor_count": p.distractor_count,
        "distractor_locations": [list(q) for q in scene.distractor_locations],
    }


def scene_from_record(record: dict) -> Scene:
    params = SceneParams(
        grid_size=record["grid_size"],
        y_cardinality=record["y_cardinality"],
        target_feature_scale=record["target_feature_scale"],
        distractor_count=record["distractor_count"],
        prior_kind=record["prior_kind"],
        seed=record["seed"],
    )
    g = params.grid_size
    prior = np.asarray(record["prior_cells"], dtype=float).reshape(g, g)
    return Scene(
        params=params,
        target_location=tuple(record["target_location"]),
        target_class=record["target_class"],
        distractor_locations=tuple(tuple(q) for q in record["distractor_locations"]),
        suggested_prior=prior,
    )


def save_scenes(scenes, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene), sort_keys=True) + "\n")
    os.replace(tmp, path)


def load_scenes(path: str) -> list[Scene]:
    with open(path, encoding="utf-8") as fh:
        return [scene_from_record(json.loads(line)) for line in fh if line.strip()]


def with_seed(params: SceneParams, seed: int) -> SceneParams:
    return replace(params, seed=seed)
