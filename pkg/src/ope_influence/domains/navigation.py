"""Two-dimensional navigation domain with region-controlled data density.

An agent walks diagonally across the plane with heading noise and collects
a Gaussian reward bump part way along the route. Three square regions of
the plane get their logged transitions thinned out at configurable rates:
one early on the route (kept dense), one just before the reward bump, and
one past the bump where nothing of value remains. Influence analysis
should care a lot about the sparse region that feeds the reward, and not
at all about the sparse region beyond it, which is what the region
ordering reproduction measures.

All numeric values here are calibration fixtures; the generator is
deterministic in its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..data import AnalysisConfig, ConstantPolicy, Dataset, Transition

Box = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class NavigationConfig:
    num_trajectories: int = 15
    num_steps: int = 14
    heading: float = math.pi / 4
    heading_noise: float = 0.35
    step_length: float = 1.0
    start_spread: float = 0.4
    reward_center: tuple[float, float] = (6.3, 6.3)
    reward_width: float = 1.0
    reward_amplitude: float = 1.0
    # ((xmin, xmax), (ymin, ymax)) squares along the diagonal route.
    region_boxes: dict[str, Box] = field(
        default_factory=lambda: {
            "I": ((1.0, 3.4), (1.0, 3.4)),
            "II": ((3.8, 5.8), (3.8, 5.8)),
            "III": ((7.9, 10.6), (7.9, 10.6)),
        }
    )
    keep_probability: dict[str, float] = field(
        default_factory=lambda: {"I": 1.0, "II": 0.12, "III": 0.12}
    )


def region_of(state, config: NavigationConfig) -> str | None:
    x, y = float(state[0]), float(state[1])
    for name, ((x0, x1), (y0, y1)) in config.region_boxes.items():
        if x0 <= x <= x1 and y0 <= y <= y1:
            return name
    return None


def _reward(point: np.ndarray, config: NavigationConfig) -> float:
    d2 = float(np.sum((point - np.asarray(config.reward_center)) ** 2))
    return config.reward_amplitude * math.exp(-d2 / (2.0 * config.reward_width**2))


def generate_navigation(
    seed: int, config: NavigationConfig | None = None
) -> tuple[Dataset, dict[str, str | None]]:
    """Dataset plus a sidecar mapping transition id to region label.

    Thinning drops transitions after the walk is rolled out, so a
    trajectory with a dropped interior step continues as a fragment (new
    trajectory id, re-indexed steps, no initial flag), exactly like a
    removal edit would leave it.
    """
    config = config or NavigationConfig()
    rng = np.random.default_rng(seed)
    transitions: list[Transition] = []
    regions: dict[str, str | None] = {}
    for n in range(config.num_trajectories):
        pos = rng.normal(scale=config.start_spread, size=2)
        points = [pos]
        for _ in range(config.num_steps):
            theta = config.heading + rng.normal(scale=config.heading_noise)
            pos = pos + config.step_length * np.array([math.cos(theta), math.sin(theta)])
            points.append(pos)
        base_tid = f"nav{n}"
        frag_tid = base_tid
        frag_step = 0
        fragment_open = True
        for t in range(config.num_steps):
            state, nxt = points[t], points[t + 1]
            region = region_of(state, config)
            keep = config.keep_probability.get(region, 1.0) if region else 1.0
            if rng.uniform() >= keep:
                # Dropped step: the trajectory resumes as a fragment.
                fragment_open = False
                continue
            if not fragment_open:
                frag_tid = f"{base_tid}#{t}"
                frag_step = 0
                fragment_open = True
            unit_id = f"{base_tid}s{t}"
            transitions.append(
                Transition(
                    id=unit_id,
                    trajectory_id=frag_tid,
                    step_index=frag_step,
                    state=state,
                    action=0,
                    reward=_reward(nxt, config),
                    next_state=nxt,
                    is_initial=(t == 0),
                    is_terminal=(t == config.num_steps - 1),
                )
            )
            regions[unit_id] = region
            frag_step += 1
    return Dataset(transitions), regions


def navigation_analysis_config() -> AnalysisConfig:
    """Calibrated analysis settings for generated navigation data."""
    return AnalysisConfig(
        estimator="kernel-fqe",
        gamma=1.0,
        radius=0.7,
        influence_threshold=0.05,
        v_max=None,
    )


def navigation_policy() -> ConstantPolicy:
    return ConstantPolicy(0)
