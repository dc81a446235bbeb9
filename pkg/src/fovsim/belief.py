"""Factorised belief state and its exact Bayes update.

The planner's belief factorises into a discretized spatial grid over the
unit square and a categorical class distribution. Updates use the bifurcated
likelihood: inside a crop the observed symbol mixes signal and noise through
the resolution probability, outside only background noise is possible. Grid
cells straddling a crop edge are weighted by their exact fractional overlap,
which is the exact marginalization of a uniform-within-cell location density.

A background-noise symbol seen through a sharp crop is negative evidence: it
suppresses mass inside the scanned region and pushes it to unvisited cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import Scene, cell_of
from .sensor import (
    Design,
    Observation,
    SensorConfig,
    noise_pmf,
    noise_symbol,
    resolution_probability,
    signal_pmf,
)

VIEWED_OVERLAP_MIN = 0.15  # fraction of cell area that counts as "viewed"


class DegenerateUpdateError(RuntimeError):
    """The observation has zero likelihood under the belief.

    This can only arise from a configuration inconsistency (an observation
    generated by a process the belief rules out); callers must treat it as a
    model violation rather than renormalize silently.
    """

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class HistoryEntry:
    design: Design
    score: float
    observation: Observation


@dataclass(frozen=True)
class BeliefState:
    """Immutable posterior snapshot; update() returns a new state."""

    spatial: np.ndarray
    semantic: np.ndarray
    step: int = 0
    history: tuple[HistoryEntry, ...] = ()

    def __post_init__(self) -> None:
        spatial = np.ascontiguousarray(self.spatial, dtype=float)
        semantic = np.ascontiguousarray(self.semantic, dtype=float)
        spatial.setflags(write=False)
        semantic.setflags(write=False)
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "semantic", semantic)
        if spatial.ndim != 2 or spatial.shape[0] != spatial.shape[1]:
            raise ValueError(f"spatial grid must be square, got {spatial.shape}")
        for name, arr in (("spatial", spatial), ("semantic", semantic)):
            if (arr < 0).any() or abs(float(arr.sum()) - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a distribution (nonnegative, sum 1)")
        if len(self.history) != self.step:
            raise ValueError(
                f"history length {len(self.history)} must equal step {self.step}"
            )

    @property
    def grid_size(self) -> int:
        return self.spatial.shape[0]


def init_belief(scene: Scene) -> BeliefState:
    n = scene.params.y_cardinality
    return BeliefState(
        spatial=scene.suggested_prior.copy(),
        semantic=np.full(n, 1.0 / n),
    )


def overlap_fractions(grid_size: int, d: Design) -> np.ndarray:
    """Fraction of each cell's area covered by the crop, shape (G, G)."""
    edges = np.arange(grid_size + 1) / grid_size
    ox = np.clip(np.minimum(d.u + d.w, edges[1:]) - np.maximum(d.u, edges[:-1]), 0.0, None)
    oy = np.clip(np.minimum(d.v + d.h, edges[1:]) - np.maximum(d.v, edges[:-1]), 0.0, None)
    return np.outer(oy, ox) * grid_size * grid_size


def coverage(b: BeliefState, d: Design) -> float:
    """Spatial belief mass inside the crop."""
    return float(np.vdot(b.spatial, overlap_fractions(b.grid_size, d)))


def entropy_bits(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def entropies(b: BeliefState) -> tuple[float, float]:
    """(spatial, semantic) Shannon entropies in bits, with 0*log0 = 0."""
    return entropy_bits(b.spatial), entropy_bits(b.semantic)


def update(
    b: BeliefState,
    d: Design,
    z: Observation,
    cfg: SensorConfig,
    rho_req: float,
    j_score: float = math.nan,
) -> BeliefState:
    """Exact Bayes update of both factors on one (design, symbol) pair.

    Spatial cells are reweighted by the overlap-mixed bifurcated likelihood;
    the class factor is reweighted by the coverage-weighted marginal of the
    same mixture. The j_score is recorded in the history entry unchanged.
    """
    n = b.semantic.size
    symbol = z.symbol
    phi = resolution_probability(d, cfg, rho_req)
    p0 = noise_pmf(symbol, cfg, n)
    sig = np.array([signal_pmf(symbol, y, n, cfg.confusion) for y in range(n)])

    frac = overlap_fractions(b.grid_size, d)
    cov = float(np.vdot(b.spatial, frac))
    like_in = phi * float(b.semantic @ sig) + (1.0 - phi) * p0
    spatial_like = frac * like_in + (1.0 - frac) * p0
    new_spatial = b.spatial * spatial_like
    z_spatial = float(new_spatial.sum())

    semantic_like = cov * (phi * sig + (1.0 - phi) * p0) + (1.0 - cov) * p0
    new_semantic = b.semantic * semantic_like
    z_semantic = float(new_semantic.sum())

    if z_spatial <= 0.0 or z_semantic <= 0.0:
        raise DegenerateUpdateError(
            "observation impossible under belief",
            {
                "design": d.astuple(),
                "symbol": symbol,
                "phi": phi,
                "coverage": cov,
                "spatial_mass": z_spatial,
                "semantic_mass": z_semantic,
                "step": b.step,
            },
        )

    return BeliefState(
        spatial=new_spatial / z_spatial,
        semantic=new_semantic / z_semantic,
        step=b.step + 1,
        history=b.history + (HistoryEntry(design=d, score=j_score, observation=z),),
    )


def calibration_metrics(b: BeliefState, scene: Scene, d: Design) -> tuple[float, float]:
    """(p_target, p_viewed) diagnostics.

    p_target: belief mass on the cell containing the true target.
    p_viewed: belief mass on cells the crop overlaps by more than 15% of
    their area.
    """
    g = b.grid_size
    p_target = float(b.spatial[cell_of(scene.target_location, g)])
    frac = overlap_fractions(g, d)
    p_viewed = float(b.spatial[frac >= VIEWED_OVERLAP_MIN].sum())
    return p_target, p_viewed


def belief_to_record(b: BeliefState) -> dict:
    """Snapshot for episode traces (cells row-major)."""
    return {
        "step": b.step,
        "spatial_cells": [float(x) for x in b.spatial.ravel()],
        "semantic": [float(x) for x in b.semantic],
    }
