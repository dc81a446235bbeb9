"""Bandwidth-gated stochastic sensor.

A rectangular crop spreads a fixed token budget over its area. The resulting
information density determines the probability that fine detail resolves,
and a binary visibility gate (target inside the crop AND resolved) decides
whether the emitted symbol carries class signal or background noise.

The observation alphabet is finite: symbols ``0 .. n_classes-1`` are class
symbols; the symbol ``n_classes`` (by default) is the background-noise
symbol. Background noise is emitted deterministically when the gate is
closed, which keeps every information quantity exactly enumerable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MIN_EXTENT = 1e-4
_DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class Design:
    """Foveation crop [u, v, w, h] in normalized image coordinates."""

    u: float
    v: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError(f"design extents must be positive, got w={self.w}, h={self.h}")
        if self.u < 0.0 or self.v < 0.0:
            raise ValueError(f"design origin must be nonnegative, got u={self.u}, v={self.v}")
        if self.u + self.w > 1.0 + 1e-9 or self.v + self.h > 1.0 + 1e-9:
            raise ValueError(
                f"design must fit the unit square, got u+w={self.u + self.w}, v+h={self.v + self.h}"
            )

    def astuple(self) -> tuple[float, float, float, float]:
        return (self.u, self.v, self.w, self.h)


def clamp_design(u: float, v: float, w: float, h: float) -> Design:
    """Build a valid Design, clamping to the unit square and flooring extents."""
    w = min(max(w, MIN_EXTENT), 1.0)
    h = min(max(h, MIN_EXTENT), 1.0)
    u = min(max(u, 0.0), 1.0 - w)
    v = min(max(v, 0.0), 1.0 - h)
    return Design(u, v, w, h)


def area(d: Design) -> float:
    """Normalized crop area w*h in (0, 1]."""
    return d.w * d.h


def contains(d: Design, point: tuple[float, float]) -> bool:
    """Whether a latent point location falls inside the crop (closed box)."""
    x, y = point
    return d.u <= x <= d.u + d.w and d.v <= y <= d.v + d.h


@dataclass(frozen=True)
class SensorConfig:
    """Physical sensor parameters.

    bandwidth: token budget shared across a crop (dimensionless count).
    nyquist_threshold: critical density below which features blur, in the
        same units as density; the effective per-scene threshold is
        nyquist_threshold * rho_req (reference density fixed at 1).
    slope: logistic steepness in log-density.
    noise_symbol_id: index of the background symbol; None means n_classes.
    confusion: probability a resolved observation reports a wrong class.
    """

    bandwidth: float = 1024.0
    nyquist_threshold: float = 4096.0
    slope: float = 4.0
    noise_symbol_id: int | None = None
    confusion: float = 0.0

    def __post_init__(self) -> None:
        if self.bandwidth <= 0.0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.nyquist_threshold <= 0.0:
            raise ValueError(f"nyquist_threshold must be positive, got {self.nyquist_threshold}")
        if self.slope <= 0.0:
            raise ValueError(f"slope must be positive, got {self.slope}")
        if not 0.0 <= self.confusion < 1.0:
            raise ValueError(f"confusion must be in [0, 1), got {self.confusion}")


def noise_symbol(cfg: SensorConfig, n_classes: int) -> int:
    return cfg.noise_symbol_id if cfg.noise_symbol_id is not None else n_classes


@dataclass(frozen=True)
class Observation:
    """One emitted symbol.

    visibility_drawn is retained for diagnostics only. Planners and belief
    updates must never read it; they see the symbol alone.
    """

    symbol: int
    visibility_drawn: bool = False


def density(d: Design, cfg: SensorConfig) -> float:
    """Information density: bandwidth spread over the crop area."""
    return cfg.bandwidth / area(d)


def resolution_probability(d: Design, cfg: SensorConfig, rho_req: float) -> float:
    """Probability that fine detail resolves: a logistic in log-density.

    Centered where density equals nyquist_threshold * rho_req, so scenes with
    a larger required feature density need proportionally deeper zooms.
    Degenerate areas (below 1e-12) are treated as the fully-resolved limit.
    """
    if rho_req <= 0.0:
        raise ValueError(f"rho_req must be positive, got {rho_req}")
    a = area(d)
    if a < _DEGENERATE_AREA:
        log.debug("degenerate crop area %.3g treated as fully resolved", a)
        return 1.0
    x = cfg.slope * (math.log(cfg.bandwidth / a) - math.log(cfg.nyquist_threshold * rho_req))
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def signal_pmf(symbol: int, y: int, n_classes: int, confusion: float) -> float:
    """p(z | y, resolved): true class w.p. 1-confusion, wrong class uniformly.

    The signal never emits the noise symbol, so noise is unambiguous.
    """
    if symbol == y:
        return 1.0 - confusion
    if 0 <= symbol < n_classes:
        return confusion / (n_classes - 1)
    return 0.0


def noise_pmf(symbol: int, cfg: SensorConfig, n_classes: int) -> float:
    """p(z | unresolved): the background symbol with probability one."""
    return 1.0 if symbol == noise_symbol(cfg, n_classes) else 0.0


def visibility_probability(scene, d: Design, cfg: SensorConfig) -> float:
    """P(gate open) = [target inside crop] * resolution probability."""
    if not contains(d, scene.target_location):
        return 0.0
    return resolution_probability(d, cfg, scene.params.target_feature_scale)


def sample_observation(scene, d: Design, cfg: SensorConfig, rng: np.random.Generator) -> Observation:
    """Draw one observation from the gated mixture model."""
    n = scene.params.y_cardinality
    visible = rng.random() < visibility_probability(scene, d, cfg)
    if not visible:
        return Observation(symbol=noise_symbol(cfg, n), visibility_drawn=False)
    y = scene.target_class
    if cfg.confusion > 0.0 and rng.random() < cfg.confusion:
        wrong = int(rng.integers(0, n - 1))
        symbol = wrong if wrong < y else wrong + 1
    else:
        symbol = y
    return Observation(symbol=symbol, visibility_drawn=True)


def observation_likelihood(
    z: Observation | int,
    y_hyp: int,
    inside: bool,
    d: Design,
    cfg: SensorConfig,
    rho_req: float,
    n_classes: int,
) -> float:
    """Likelihood of a symbol under a class hypothesis and a location side.

    Inside the crop the signal and noise branches mix through the resolution
    probability; outside, only background noise is possible.
    """
    symbol = z.symbol if isinstance(z, Observation) else int(z)
    p0 = noise_pmf(symbol, cfg, n_classes)
    if not inside:
        return p0
    phi = resolution_probability(d, cfg, rho_req)
    return phi * signal_pmf(symbol, y_hyp, n_classes, cfg.confusion) + (1.0 - phi) * p0
