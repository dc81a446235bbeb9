"""Candidate generation, crop-refinement strategies, and the episode loop.

A turn proposes seed crops from the current spatial belief, refines them
with the configured strategy (pass-through, greedy rescales, Metropolis
style local search, or one-step lookahead), executes the selected crop
through the sensor, updates the belief, and attempts an answer. Abstention
continues the loop until the turn budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng
from .belief import BeliefState, coverage, init_belief, update
from .observer import ABSTAIN, ObserverConfig, answer, estimate_utility
from .scene import Scene
from .sensor import (
    MIN_EXTENT,
    Design,
    Observation,
    SensorConfig,
    area,
    clamp_design,
    contains,
    noise_symbol,
    resolution_probability,
    sample_observation,
)

STRATEGIES = ("seed_only", "greedy", "mcmc", "lookahead")
SEED_MODES = ("single", "multi9", "grid3x3", "oracle")

FAILURE_NONE = "none"
FAILURE_PROPOSAL = "proposal_limited"
FAILURE_SEARCH = "search_limited"
FAILURE_REASONING = "reasoning_limited"


class PoolError(ValueError):
    """A selection was requested from an empty candidate pool."""


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "greedy"
    scaling_factors: tuple[float, ...] = (1.5, 1.0, 0.8)
    mcmc_max_iters: int = 6
    mcmc_escape_prob: float = 0.1
    mcmc_step_frac: float = 0.15
    mcmc_epsilon: float = 1e-6
    lookahead_branches: int = 3
    max_turns: int = 10
    seed_mode: str = "single"
    seed_expand: float = 2.0  # seed crop extent, in cells
    seed_jitter: float = 0.5  # uniform center jitter, in cells

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.seed_mode not in SEED_MODES:
            raise ValueError(f"seed_mode must be one of {SEED_MODES}, got {self.seed_mode!r}")
        if not self.scaling_factors or any(f <= 0.0 for f in self.scaling_factors):
            raise ValueError("scaling_factors must be nonempty and positive")
        if self.mcmc_max_iters < 1:
            raise ValueError(f"mcmc_max_iters must be >= 1, got {self.mcmc_max_iters}")
        if self.max_turns < 1:
            raise ValueError(f"max_turns must be >= 1, got {self.max_turns}")
        if self.lookahead_branches < 1:
            raise ValueError(f"lookahead_branches must be >= 1, got {self.lookahead_branches}")


def perturb_candidates(
    seed_d: Design, factors: tuple[float, ...] | list[float]
) -> list[Design]:
    """Center-preserving rescales of a seed crop, clamped to the unit square.

    Output order follows the factors; duplicates after clamping are dropped,
    keeping the first occurrence.
    """
    cx = seed_d.u + seed_d.w / 2.0
    cy = seed_d.v + seed_d.h / 2.0
    out: list[Design] = []
    seen: set[tuple[float, float, float, float]] = set()
    for f in factors:
        w = seed_d.w * f
        h = seed_d.h * f
        cand = clamp_design(cx - w / 2.0, cy - h / 2.0, w, h)
        key = cand.astuple()
        if key not in seen:
            seen.add(key)
            out.append(cand)
    return out


def _cell_crop(
    cell: tuple[int, int],
    grid_size: int,
    rng: np.random.Generator,
    expand: float,
    jitter: float,
) -> Design:
    iy, ix = cell
    cell_size = 1.0 / grid_size
    cx = (ix + 0.5) * cell_size
    cy = (iy + 0.5) * cell_size
    if jitter > 0.0:
        cx += float(rng.uniform(-jitter, jitter)) * cell_size
        cy += float(rng.uniform(-jitter, jitter)) * cell_size
    w = h = expand * cell_size
    return clamp_design(cx - w / 2.0, cy - h / 2.0, w, h)


def oracle_crop(scene: Scene, sensor_cfg: SensorConfig, target_phi: float = 0.999) -> Design:
    """Tight box around the true target, sized so it resolves almost surely."""
    if not 0.0 < target_phi < 1.0:
        raise ValueError(f"target_phi must be in (0, 1), got {target_phi}")
    logit = math.log(target_phi / (1.0 - target_phi))
    # Largest area with resolution probability >= target_phi for this scene.
    max_area = sensor_cfg.bandwidth / (
        sensor_cfg.nyquist_threshold
        * scene.params.target_feature_scale
        * math.exp(logit / sensor_cfg.slope)
    )
    extent = max(min(math.sqrt(max_area), 1.0 / scene.params.grid_size), MIN_EXTENT)
    x, y = scene.target_location
    return clamp_design(x - extent / 2.0, y - extent / 2.0, extent, extent)


def seed_pool(
    scene: Scene,
    mode: str,
    rng: np.random.Generator,
    spatial: np.ndarray | None = None,
    expand: float = 2.0,
    jitter: float = 0.5,
    sensor_cfg: SensorConfig | None = None,
) -> list[Design]:
    """Seed crop proposals for one turn.

    single: the highest-mass cell of the spatial map (the scene's suggested
    prior unless a current belief is supplied), expanded to a crop with a
    small jitter standing in for proposal noise. multi9: one crop per top-9
    cell. grid3x3: the fixed nine-tile partition. oracle: a tight box around
    the true target, for ceiling measurements.
    """
    if mode not in SEED_MODES:
        raise ValueError(f"seed mode must be one of {SEED_MODES}, got {mode!r}")
    if mode == "grid3x3":
        return [
            Design(i / 3.0, j / 3.0, 1.0 / 3.0, 1.0 / 3.0)
            for i in range(3)
            for j in range(3)
        ]
    if mode == "oracle":
        return [oracle_crop(scene, sensor_cfg or SensorConfig())]
    grid = scene.suggested_prior if spatial is None else spatial
    g = grid.shape[0]
    flat = np.argsort(-grid.ravel(), kind="stable")
    count = 1 if mode == "single" else 9
    cells = [divmod(int(i), g) for i in flat[:count]]
    return [_cell_crop(c, g, rng, expand, jitter) for c in cells]


def _selection_key(design: Design, score: float) -> tuple:
    return (-score, area(design), design.astuple())


def greedy_select(scored: list[tuple[Design, float]]) -> Design:
    """Highest score; ties go to the smallest area, then lexicographic crop."""
    if not scored:
        raise PoolError("cannot select from an empty candidate pool")
    return min(scored, key=lambda pair: _selection_key(pair[0], pair[1]))[0]


def _best_scored(scored: list[tuple[Design, float]]) -> tuple[Design, float]:
    best = greedy_select(scored)
    score = max(s for d, s in scored if d == best)
    return best, score


def acceptance_ratio(j_new: float, j_old: float, epsilon: float) -> float:
    """Metropolis acceptance for probe scores, smoothed away from 0/0."""
    return min(1.0, (j_new + epsilon) / (j_old + epsilon))


@dataclass(frozen=True)
class McmcStep:
    design: Design
    score: float
    accepted: bool


def mcmc_refine(
    scene: Scene,
    init_d: Design,
    cfg: StrategyConfig,
    observer_cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    rng: np.random.Generator,
) -> tuple[Design, list[McmcStep]]:
    """Metropolis-style local refinement of one crop proposal.

    Proposals jitter every coordinate with Gaussian noise scaled to the
    current extents. Rejected moves get a second chance with the escape
    probability so the chain cannot stall on a lucky early score. Terminates
    early once any state scores a perfect probe. Returns the best-scoring
    design probed anywhere along the way, plus the full trace.
    """
    j_init = estimate_utility(scene, init_d, observer_cfg, sensor_cfg, rng)
    trace = [McmcStep(design=init_d, score=j_init, accepted=True)]
    current, j_current = init_d, j_init
    if j_init >= 1.0:
        return init_d, trace
    for _ in range(cfg.mcmc_max_iters):
        sigma_x = cfg.mcmc_step_frac * current.w
        sigma_y = cfg.mcmc_step_frac * current.h
        proposal = clamp_design(
            current.u + float(rng.normal(0.0, sigma_x)),
            current.v + float(rng.normal(0.0, sigma_y)),
            current.w + float(rng.normal(0.0, sigma_x)),
            current.h + float(rng.normal(0.0, sigma_y)),
        )
        j_prop = estimate_utility(scene, proposal, observer_cfg, sensor_cfg, rng)
        alpha = acceptance_ratio(j_prop, j_current, cfg.mcmc_epsilon)
        accepted = bool(rng.random() < alpha)
        if not accepted:
            accepted = bool(rng.random() < cfg.mcmc_escape_prob)
        trace.append(McmcStep(design=proposal, score=j_prop, accepted=accepted))
        if accepted:
            current, j_current = proposal, j_prop
        if j_current >= 1.0:
            break
    # Earliest-visited wins ties, so a flat chain falls back to its seed.
    best = max(trace, key=lambda s: s.score)
    return best.design, trace


def propose_next_design(
    belief: BeliefState, root: Design, blocked: np.ndarray | None = None
) -> Design:
    """Next-move heuristic: best cell-aligned sub-crop at half the root's extent.

    Scans cell-aligned placements of a half-extent crop within the root's
    cell window and returns the one holding the most posterior mass (first
    hit wins on ties, row-major). Keeping the proposal inside the root makes
    a root's follow-up value reflect what that root's interior could reveal.
    Cells marked blocked contribute no mass, which lets a caller expanding
    several branches force them toward distinct futures. This substitutes
    for an external next-move predictor.
    """
    g = belief.grid_size
    cw = min(max(int(math.ceil(root.w / 2.0 * g)), 1), g)
    ch = min(max(int(math.ceil(root.h / 2.0 * g)), 1), g)
    spatial = belief.spatial
    if blocked is not None:
        spatial = np.where(blocked, 0.0, spatial)
    padded = np.zeros((g + 1, g + 1))
    padded[1:, 1:] = np.cumsum(np.cumsum(spatial, axis=0), axis=1)
    sums = padded[ch:, cw:] - padded[:-ch, cw:] - padded[ch:, :-cw] + padded[:-ch, :-cw]

    ix0 = min(max(int(math.floor(root.u * g)), 0), g - 1)
    iy0 = min(max(int(math.floor(root.v * g)), 0), g - 1)
    ix1 = min(max(int(math.ceil((root.u + root.w) * g)) - 1, 0), g - 1)
    iy1 = min(max(int(math.ceil((root.v + root.h) * g)) - 1, 0), g - 1)
    x_lo = min(ix0, g - cw)
    x_hi = min(max(ix1 - cw + 1, x_lo), g - cw)
    y_lo = min(iy0, g - ch)
    y_hi = min(max(iy1 - ch + 1, y_lo), g - ch)
    window = sums[y_lo : y_hi + 1, x_lo : x_hi + 1]
    wy, wx = np.unravel_index(int(np.argmax(window)), window.shape)
    iy, ix = y_lo + wy, x_lo + wx
    return Design(ix / g, iy / g, cw / g, ch / g)


def _mark_cells(mask: np.ndarray, d: Design) -> None:
    g = mask.shape[0]
    ix0 = min(max(int(math.floor(d.u * g)), 0), g - 1)
    iy0 = min(max(int(math.floor(d.v * g)), 0), g - 1)
    ix1 = min(max(int(math.ceil((d.u + d.w) * g)) - 1, 0), g - 1)
    iy1 = min(max(int(math.ceil((d.v + d.h) * g)) - 1, 0), g - 1)
    mask[iy0 : iy1 + 1, ix0 : ix1 + 1] = True


@dataclass(frozen=True)
class LookaheadBranch:
    root: Design
    root_score: float
    root_symbol: int
    next_design: Design | None
    leaves: tuple[tuple[Design, float], ...]
    value: float


def lookahead_select(
    scene: Scene,
    root_candidates: list[Design],
    cfg: StrategyConfig,
    observer_cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    belief: BeliefState,
    rng: np.random.Generator,
) -> tuple[Design, list[LookaheadBranch]]:
    """One-step planning: score each root by the mean probe of its leaves.

    Each root is probed, then simulated: its observation updates a scratch
    belief, the next-move heuristic proposes a follow-up crop, and the
    follow-up's rescaled pool is probed. Branches mask each other's proposed
    cells so the tree expands distinct futures. A root already at the
    minimum representable crop has no next move and scores zero.
    """
    if not root_candidates:
        raise PoolError("cannot select from an empty root pool")
    rho_req = scene.params.target_feature_scale
    g = belief.grid_size
    claimed = np.zeros((g, g), dtype=bool)
    branches: list[LookaheadBranch] = []
    for root in root_candidates:
        root_score = estimate_utility(scene, root, observer_cfg, sensor_cfg, rng)
        z_root = sample_observation(scene, root, sensor_cfg, rng)
        # Only a degenerate root (already at the minimum representable crop)
        # has no next move; a cell-scale root proposes itself.
        declined = root.w <= 2.0 * MIN_EXTENT and root.h <= 2.0 * MIN_EXTENT
        if declined:
            branches.append(
                LookaheadBranch(
                    root=root,
                    root_score=root_score,
                    root_symbol=z_root.symbol,
                    next_design=None,
                    leaves=(),
                    value=0.0,
                )
            )
            continue
        scratch = update(belief, root, z_root, sensor_cfg, rho_req, j_score=root_score)
        next_d = propose_next_design(scratch, root, blocked=claimed)
        _mark_cells(claimed, next_d)
        leaves = tuple(
            (leaf, estimate_utility(scene, leaf, observer_cfg, sensor_cfg, rng))
            for leaf in perturb_candidates(next_d, cfg.scaling_factors)
        )
        value = sum(s for _, s in leaves) / len(leaves)
        branches.append(
            LookaheadBranch(
                root=root,
                root_score=root_score,
                root_symbol=z_root.symbol,
                next_design=next_d,
                leaves=leaves,
                value=value,
            )
        )
    selected = greedy_select([(br.root, br.value) for br in branches])
    return selected, branches


@dataclass(frozen=True)
class TurnResult:
    selected: Design
    j_score: float
    observation: Observation
    belief: BeliefState
    pool: tuple[tuple[Design, float], ...]
    probe_calls: int
    lookahead_leaf_probes: int = 0
    planned_next: Design | None = None


def _extend_roots(
    seed_d: Design,
    cfg: StrategyConfig,
    rng: np.random.Generator,
) -> list[Design]:
    roots = perturb_candidates(seed_d, cfg.scaling_factors)
    while len(roots) < cfg.lookahead_branches:
        sigma_x = cfg.mcmc_step_frac * seed_d.w
        sigma_y = cfg.mcmc_step_frac * seed_d.h
        extra = clamp_design(
            seed_d.u + float(rng.normal(0.0, sigma_x)),
            seed_d.v + float(rng.normal(0.0, sigma_y)),
            seed_d.w + float(rng.normal(0.0, sigma_x)),
            seed_d.h + float(rng.normal(0.0, sigma_y)),
        )
        if all(extra != r for r in roots):
            roots.append(extra)
    return roots[: cfg.lookahead_branches]


def fovea_refine(
    scene: Scene,
    seeds: list[Design],
    cfg: StrategyConfig,
    observer_cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    belief: BeliefState,
    rng: np.random.Generator,
) -> TurnResult:
    """One refinement turn: pool, select, execute, update the history.

    seed_only executes the first seed as proposed. greedy probes the union
    of rescaled candidates from every seed. mcmc refines the first seed.
    lookahead expands rescaled roots of the first seed one step deep.
    """
    if not seeds:
        raise PoolError("refinement needs at least one seed proposal")
    rho_req = scene.params.target_feature_scale
    k = observer_cfg.probe_samples
    leaf_probes = 0
    planned: Design | None = None

    if cfg.strategy == "seed_only":
        selected = seeds[0]
        j_star = estimate_utility(scene, selected, observer_cfg, sensor_cfg, rng)
        pool = [(selected, j_star)]
        probe_calls = k
    elif cfg.strategy == "greedy":
        candidates: list[Design] = []
        seen: set[tuple] = set()
        for s in seeds:
            for cand in perturb_candidates(s, cfg.scaling_factors):
                if cand.astuple() not in seen:
                    seen.add(cand.astuple())
                    candidates.append(cand)
        pool = [
            (cand, estimate_utility(scene, cand, observer_cfg, sensor_cfg, rng))
            for cand in candidates
        ]
        selected, j_star = _best_scored(pool)
        probe_calls = len(pool) * k
    elif cfg.strategy == "mcmc":
        selected, trace = mcmc_refine(scene, seeds[0], cfg, observer_cfg, sensor_cfg, rng)
        pool = [(s.design, s.score) for s in trace]
        _, j_star = _best_scored(pool)
        probe_calls = len(trace) * k
    else:  # lookahead
        roots = _extend_roots(seeds[0], cfg, rng)
        selected, branches = lookahead_select(
            scene, roots, cfg, observer_cfg, sensor_cfg, belief, rng
        )
        pool = [(br.root, br.root_score) for br in branches]
        chosen = next(br for br in branches if br.root == selected)
        j_star = chosen.root_score
        leaf_probes = sum(len(br.leaves) for br in branches) * k
        probe_calls = len(branches) * k + leaf_probes
        # Follow the plan only when its leaves showed evidence; otherwise the
        # next turn re-proposes from the belief.
        if chosen.value > 0.0:
            planned = chosen.next_design

    z = sample_observation(scene, selected, sensor_cfg, rng)
    new_belief = update(belief, selected, z, sensor_cfg, rho_req, j_score=j_star)
    return TurnResult(
        selected=selected,
        j_score=j_star,
        observation=z,
        belief=new_belief,
        pool=tuple(pool),
        probe_calls=probe_calls,
        lookahead_leaf_probes=leaf_probes,
        planned_next=planned if cfg.strategy == "lookahead" else None,
    )


@dataclass
class TurnTrace:
    seeds: list[Design]
    pool: list[tuple[Design, float]]
    selected: Design
    j_score: float
    observation_symbol: int
    answer: int | None
    probe_calls: int


@dataclass
class EpisodeRecord:
    scene_seed: int
    strategy: str
    seed_mode: str
    episode_seed: int
    steps: int
    probe_call_count: int
    observer_call_count: int
    final_answer: int | None
    success: bool
    failure_category: str
    turns: list[TurnTrace] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "scene_seed": self.scene_seed,
            "strategy": self.strategy,
            "seed_mode": self.seed_mode,
            "episode_seed": self.episode_seed,
            "steps": self.steps,
            "probe_calls": self.probe_call_count,
            "observer_calls": self.observer_call_count,
            "final_answer": self.final_answer,
            "success": self.success,
            "failure_category": self.failure_category,
            "trace": [
                {
                    "seeds": [s.astuple() for s in t.seeds],
                    "pool": [[d.astuple(), score] for d, score in t.pool],
                    "selected": t.selected.astuple(),
                    "j_score": t.j_score,
                    "observation": t.observation_symbol,
                    "answer": t.answer,
                    "probe_calls": t.probe_calls,
                }
                for t in self.turns
            ],
        }


def run_episode(
    scene: Scene,
    strategy_cfg: StrategyConfig,
    observer_cfg: ObserverConfig,
    sensor_cfg: SensorConfig,
    episode_seed: int,
) -> EpisodeRecord:
    """Run one search episode to an answer or the turn budget.

    Seeds for every turn are proposed from the current spatial belief, so
    negative evidence steers later proposals away from falsified regions.
    All randomness derives from episode_seed; identical inputs give an
    identical record.
    """
    belief = init_belief(scene)
    turns: list[TurnTrace] = []
    probe_calls = 0
    observer_calls = 0
    final_answer: int | None = ABSTAIN
    planned_seed: Design | None = None

    for turn_index in range(strategy_cfg.max_turns):
        rng_seed = derive_rng(episode_seed, "seed", turn_index)
        rng_turn = derive_rng(episode_seed, "turn", turn_index)
        rng_answer = derive_rng(episode_seed, "answer", turn_index)

        # Follow the planner's proposed next move while its region retains
        # belief support; otherwise fall back to re-proposing from the belief.
        follow_plan = planned_seed is not None and beliefs_coverage_supports(
            belief, planned_seed
        )
        if follow_plan:
            seeds = [planned_seed]
        else:
            seeds = seed_pool(
                scene,
                strategy_cfg.seed_mode,
                rng_seed,
                spatial=belief.spatial,
                expand=strategy_cfg.seed_expand,
                jitter=strategy_cfg.seed_jitter,
                sensor_cfg=sensor_cfg,
            )
        turn = fovea_refine(
            scene, seeds, strategy_cfg, observer_cfg, sensor_cfg, belief, rng_turn
        )
        belief = turn.belief
        probe_calls += turn.probe_calls
        planned_seed = turn.planned_next

        ans = answer(scene, turn.selected, observer_cfg, sensor_cfg, rng_answer)
        observer_calls += 1
        turns.append(
            TurnTrace(
                seeds=seeds,
                pool=list(turn.pool),
                selected=turn.selected,
                j_score=turn.j_score,
                observation_symbol=turn.observation.symbol,
                answer=ans,
                probe_calls=turn.probe_calls,
            )
        )
        if ans is not ABSTAIN:
            final_answer = ans
            break

    success = final_answer is not ABSTAIN and final_answer == scene.target_class
    record = EpisodeRecord(
        scene_seed=scene.params.seed,
        strategy=strategy_cfg.strategy,
        seed_mode=strategy_cfg.seed_mode,
        episode_seed=episode_seed,
        steps=len(turns),
        probe_call_count=probe_calls,
        observer_call_count=observer_calls,
        final_answer=final_answer,
        success=success,
        failure_category=FAILURE_NONE,
        turns=turns,
    )
    if not success:
        record.failure_category = classify_failure(record, scene)
    return record


def beliefs_coverage_supports(belief: BeliefState, d: Design) -> bool:
    """Whether a crop still holds at least twice the uniform share of mass."""
    return coverage(belief, d) > 2.0 * area(d)


def classify_failure(episode: EpisodeRecord, scene: Scene) -> str:
    """Assign a failed episode to the proposal/search/reasoning taxonomy.

    proposal_limited: no pooled candidate ever contained the target.
    search_limited: some pooled candidate did, but no selected crop did.
    reasoning_limited: a selected crop contained it and the answer still
    failed (wrong class or abstention).
    """
    if episode.success:
        raise ValueError("classify_failure is only defined for failed episodes")
    loc = scene.target_location
    pooled_hit = any(
        contains(d, loc) for t in episode.turns for d, _ in t.pool
    )
    if not pooled_hit:
        return FAILURE_PROPOSAL
    selected_hit = any(contains(t.selected, loc) for t in episode.turns)
    if not selected_hit:
        return FAILURE_SEARCH
    return FAILURE_REASONING
