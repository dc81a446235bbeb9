"""Simulated observer: resolvability probe and answerer.

Stands in for the model that would normally judge a crop and answer the
query. The probe exposes a binary "could this crop settle the question?"
signal with configurable miscalibration; the answerer reports a class only
when the target is actually visible, with a configurable hallucination rate
standing in for confident-but-wrong recognition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Scene
from .sensor import Design, SensorConfig, visibility_probability

ABSTAIN = None


@dataclass(frozen=True)
class ObserverConfig:
    """Probe/answerer calibration knobs.

    false_positive: chance the probe fires when the target is not visible.
    false_negative: chance it stays silent when the target is visible.
    hallucination: chance the answerer reports a wrong class on a clear view.
    probe_samples: Monte Carlo probes averaged per candidate.
    """

    false_positive: float = 0.0
    false_negative: float = 0.0
    hallucination: float = 0.0
    probe_samples: int = 3

    def __post_init__(self) -> None:
        for name in ("false_positive", "false_negative", "hallucination"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        if not 0.0 < self.false_positive + (1.0 - self.false_negative) < 2.0:
            raise ValueError("probe would be constant; adjust false_positive/false_negative")
        if self.probe_samples < 1:
            raise ValueError(f"probe_samples must be >= 1, got {self.probe_samples}")


def probe_once(
    scene: Scene,
    d: Design,
    cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    rng: np.random.Generator,
) -> int:
    """One binary resolvability draw for a candidate crop."""
    visible = rng.random() < visibility_probability(scene, d, sensor_cfg)
    hit_prob = (1.0 - cfg.false_negative) if visible else cfg.false_positive
    return int(rng.random() < hit_prob)


def estimate_utility(
    scene: Scene,
    d: Design,
    cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo crop-utility estimate: mean of independent probes."""
    k = cfg.probe_samples
    return sum(probe_once(scene, d, cfg, sensor_cfg, rng) for _ in range(k)) / k


def expected_probe_score(
    scene: Scene, d: Design, cfg: ObserverConfig, sensor_cfg: SensorConfig
) -> float:
    """Closed-form probe expectation, for rank checks and reports."""
    p = visibility_probability(scene, d, sensor_cfg)
    return (1.0 - cfg.false_negative) * p + cfg.false_positive * (1.0 - p)


def answer(
    scene: Scene,
    d: Design,
    cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    rng: np.random.Generator,
) -> int | None:
    """Attempt to answer from one crop; abstain unless the target is visible.

    A class is never reported on an invisible target, so abstention cleanly
    separates search failures from recognition failures.
    """
    visible = rng.random() < visibility_probability(scene, d, sensor_cfg)
    if not visible:
        return ABSTAIN
    n = scene.params.y_cardinality
    y = scene.target_class
    if cfg.hallucination > 0.0 and rng.random() < cfg.hallucination:
        wrong = int(rng.integers(0, n - 1))
        return wrong if wrong < y else wrong + 1
    return y
