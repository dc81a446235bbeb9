"""Coverage-resolution utility and brute-force information oracles.

The planner's tractable utility is coverage times resolution probability,
optionally scaled by the class entropy. The oracles in this module compute
the corresponding information quantities exactly, by enumerating the finite
observation alphabet against the discretized belief, so the approximation
chain behind the utility can be validated end to end at desk scale.

The oracles live here rather than in the test suite so the CLI can expose
them as a first-class validation experiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import BeliefState, coverage, entropy_bits, overlap_fractions, update
from .scene import Scene
from .sensor import (
    Design,
    Observation,
    SensorConfig,
    contains,
    noise_symbol,
    resolution_probability,
    signal_pmf,
)

ENUMERATION_BOUND = 1_000_000


class EnumerationBoundError(ValueError):
    """The instance is too large for exact enumeration."""


@dataclass
class UtilityReport:
    """One design's utility factors, with optional exact oracle values."""

    coverage: float
    phi: float
    j_value: float
    semantic_entropy: float
    u_value: float
    exact_semantic_eig: float | None = None
    exact_full_eig: float | None = None


@dataclass(frozen=True)
class SuperAdditivityReport:
    i_joint: float
    i_wide: float
    i_zoom: float
    gap: float


def coverage_resolution(
    b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float
) -> UtilityReport:
    """Coverage x resolution utility, and its entropy-scaled variant."""
    cov = coverage(b, d)
    phi = resolution_probability(d, cfg, rho_req)
    h_sem = entropy_bits(b.semantic)
    j = cov * phi
    return UtilityReport(
        coverage=cov,
        phi=phi,
        j_value=j,
        semantic_entropy=h_sem,
        u_value=h_sem * j,
    )


def _check_enumeration_bound(b: BeliefState, cfg: SensorConfig) -> None:
    n = b.semantic.size
    alphabet = n + 1
    size = b.spatial.size * n * alphabet
    if size > ENUMERATION_BOUND:
        raise EnumerationBoundError(
            f"enumeration size {size} exceeds bound {ENUMERATION_BOUND}"
        )


def _emission_tables(n: int, cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    """(sig[y, z], p0[z]) over the alphabet of n class symbols plus noise."""
    alphabet = n + 1
    noise = noise_symbol(cfg, n)
    sig = np.array(
        [[signal_pmf(z, y, n, cfg.confusion) for z in range(alphabet)] for y in range(n)]
    )
    p0 = np.array([1.0 if z == noise else 0.0 for z in range(alphabet)])
    return sig, p0


def _conditional_observation_table(
    b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float
) -> np.ndarray:
    """P(z | cell, y) of shape (cells, n, alphabet), via fractional overlap."""
    _check_enumeration_bound(b, cfg)
    phi = resolution_probability(d, cfg, rho_req)
    sig, p0 = _emission_tables(b.semantic.size, cfg)
    frac = overlap_fractions(b.grid_size, d).ravel()
    inside = phi * sig + (1.0 - phi) * p0  # (n, alphabet)
    return frac[:, None, None] * inside[None] + (1.0 - frac)[:, None, None] * p0[None, None]


def _mutual_information_bits(cond: np.ndarray, weights: np.ndarray) -> float:
    """I(latent; z) with rows P(z | latent) and latent weights, in bits."""
    weights = np.asarray(weights, dtype=float)
    marginal = weights @ cond
    joint = weights[:, None] * cond
    mask = joint > 0.0
    cond_safe = np.where(mask, cond, 1.0)
    marginal_safe = np.where(marginal > 0.0, marginal, 1.0)
    terms = joint * (np.log2(cond_safe) - np.log2(marginal_safe)[None, :])
    return float(terms[mask].sum())


def exact_semantic_eig(b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float) -> float:
    """I(class; z | design) in bits, by exact enumeration."""
    table = _conditional_observation_table(b, d, cfg, rho_req)
    p_cells = b.spatial.ravel()
    cond_y = np.einsum("c,cyz->yz", p_cells, table)
    return _mutual_information_bits(cond_y, b.semantic)


def exact_full_eig(b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float) -> float:
    """I((cell, class); z | design) in bits, by exact enumeration."""
    table = _conditional_observation_table(b, d, cfg, rho_req)
    p_cells = b.spatial.ravel()
    n = b.semantic.size
    cond = table.reshape(p_cells.size * n, n + 1)
    weights = np.outer(p_cells, b.semantic).ravel()
    return _mutual_information_bits(cond, weights)


def exact_localization_eig(b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float) -> float:
    """I(cell; z | design): the location share of the full gain."""
    table = _conditional_observation_table(b, d, cfg, rho_req)
    cond_cell = np.einsum("y,cyz->cz", b.semantic, table)
    return _mutual_information_bits(cond_cell, b.spatial.ravel())


def exact_semantic_eig_given_location(
    b: BeliefState, d: Design, cfg: SensorConfig, rho_req: float
) -> float:
    """I(class; z | cell, design): the class share conditioned on location."""
    table = _conditional_observation_table(b, d, cfg, rho_req)
    p_cells = b.spatial.ravel()
    total = 0.0
    for c in range(p_cells.size):
        if p_cells[c] > 0.0:
            total += p_cells[c] * _mutual_information_bits(table[c], b.semantic)
    return total


def _true_emission(scene: Scene, d: Design, cfg: SensorConfig) -> np.ndarray:
    """P(z | y, true target location) of shape (n, alphabet)."""
    n = scene.params.y_cardinality
    phi = resolution_probability(d, cfg, scene.params.target_feature_scale)
    gate = phi if contains(d, scene.target_location) else 0.0
    sig, p0 = _emission_tables(n, cfg)
    return gate * sig + (1.0 - gate) * p0


def super_additivity_gap(
    b: BeliefState,
    d_wide: Design,
    d_zoom: Design,
    cfg: SensorConfig,
    rho_req: float,
    scene: Scene,
) -> SuperAdditivityReport:
    """Two-step delivered information versus the single-step expected gains.

    i_wide and i_zoom are the agent's ex-ante expected gains about the class,
    computed under its own belief; each is near zero when a design is either
    too coarse to resolve or unlikely (under the belief) to cover the target.
    i_joint is the class information the executed two-step sequence actually
    delivers: observation pairs are enumerated under the true target
    location, the intermediate Bayes update is applied on every first-step
    branch, and the drop in the agent's class entropy is averaged. The gap
    i_joint - i_wide - i_zoom is large exactly when neither step looks
    worthwhile in isolation yet the sequence resolves the target.
    """
    if b.semantic.size != scene.params.y_cardinality:
        raise ValueError("belief and scene disagree on the number of classes")
    i_wide = exact_semantic_eig(b, d_wide, cfg, rho_req)
    i_zoom = exact_semantic_eig(b, d_zoom, cfg, rho_req)

    emit1 = _true_emission(scene, d_wide, cfg)  # (n, alphabet)
    emit2 = _true_emission(scene, d_zoom, cfg)
    p_y = b.semantic
    alphabet = p_y.size + 1

    h_before = entropy_bits(b.semantic)
    expected_after = 0.0
    for z1 in range(alphabet):
        p_z1_y = emit1[:, z1]
        p_z1 = float(p_y @ p_z1_y)
        if p_z1 <= 0.0:
            continue
        b1 = update(b, d_wide, Observation(z1), cfg, rho_req)
        # Class posterior under the true process, used to weight step two.
        p_y_given_z1 = p_y * p_z1_y / p_z1
        for z2 in range(alphabet):
            p_pair = p_z1 * float(p_y_given_z1 @ emit2[:, z2])
            if p_pair <= 0.0:
                continue
            b2 = update(b1, d_zoom, Observation(z2), cfg, rho_req)
            expected_after += p_pair * entropy_bits(b2.semantic)
    i_joint = h_before - expected_after
    return SuperAdditivityReport(
        i_joint=i_joint,
        i_wide=i_wide,
        i_zoom=i_zoom,
        gap=i_joint - i_wide - i_zoom,
    )
