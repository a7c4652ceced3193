"""Simulated chemotherapy domain with a fixed treatment protocol.

State is [tumor burden, drug concentration, wellness, elapsed months / 30].
Tumor burden grows logistically and is damped multiplicatively by the
drug; the drug decays between doses; wellness erodes under treatment.
The evaluation policy treats for the first half of the 30-month horizon
and then stops; it reads only the time channel, so it is a pure function
of state. Behavior data follows the same protocol with epsilon-greedy
deviations, recording the behavior probability of the taken action so the
importance sampling estimators apply too.

Four named case configurations reproduce the qualitative spectrum of
analysis outcomes: plenty of clean data (reliable), far too little data
(unevaluatable via dead ends), mildly noisy data (expert review where the
flags are genuine), and clean data with injected reward corruption
(expert review where the flags are exactly the corrupted records). All
coefficients are calibration fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from ..data import AnalysisConfig, Dataset, FunctionPolicy, Transition

HORIZON = 30
TREAT_MONTHS = 15


@dataclass(frozen=True)
class TumorConfig:
    num_trajectories: int = 40
    horizon: int = HORIZON
    epsilon: float = 0.3
    dynamics_noise: float = 0.0
    growth: float = 0.35
    kill: float = 0.40
    drug_decay: float = 0.5
    wellness_recovery: float = 0.15
    wellness_toxicity: float = 0.08
    init_tumor_low: float = 0.35
    init_tumor_high: float = 0.65


def tumor_policy() -> FunctionPolicy:
    """Treat while fewer than TREAT_MONTHS months have elapsed."""

    def act(state: np.ndarray) -> int:
        return 1 if state[3] * HORIZON < TREAT_MONTHS - 0.5 + 1e-9 else 0

    return FunctionPolicy(act, name="treat-first-half")


def _step(state: np.ndarray, action: int, cfg: TumorConfig, rng) -> np.ndarray:
    tumor, drug, wellness, month_frac = state
    drug = cfg.drug_decay * drug + float(action)
    growth = cfg.growth * tumor * (1.0 - tumor)
    tumor = tumor + growth - cfg.kill * drug * tumor
    if cfg.dynamics_noise > 0:
        tumor += cfg.dynamics_noise * rng.normal() * max(tumor, 0.05)
    tumor = float(np.clip(tumor, 0.01, 1.5))
    wellness = float(
        np.clip(wellness + cfg.wellness_recovery * (1.0 - wellness) - cfg.wellness_toxicity * drug, 0.0, 1.0)
    )
    month = month_frac * HORIZON + 1.0
    return np.array([tumor, drug, wellness, month / HORIZON])


def generate_tumor(seed: int, config: TumorConfig | None = None) -> Dataset:
    config = config or TumorConfig()
    rng = np.random.default_rng(seed)
    policy = tumor_policy()
    transitions = []
    for n in range(config.num_trajectories):
        tid = f"pt{n}"
        state = np.array(
            [rng.uniform(config.init_tumor_low, config.init_tumor_high), 0.0, 1.0, 0.0]
        )
        for t in range(config.horizon):
            preferred = policy.action_for(state)
            if rng.uniform() < config.epsilon / 2.0:
                action = 1 - preferred
                prob = config.epsilon / 2.0
            else:
                action = preferred
                prob = 1.0 - config.epsilon / 2.0
            nxt = _step(state, action, config, rng)
            transitions.append(
                Transition(
                    id=f"{tid}s{t}",
                    trajectory_id=tid,
                    step_index=t,
                    state=state,
                    action=action,
                    reward=1.0 - float(nxt[0]),
                    next_state=nxt,
                    behavior_prob=prob,
                    is_initial=(t == 0),
                    is_terminal=(t == config.horizon - 1),
                )
            )
            state = nxt
    return Dataset(transitions, action_count=2)


def inject_reward_outliers(
    dataset: Dataset, count: int, magnitude: float, seed: int
) -> tuple[Dataset, list[str]]:
    """Corrupt the rewards of ``count`` non-initial transitions.

    Returns the edited dataset and the corrupted ids, deterministic in the
    seed. The corruption adds ``magnitude`` to rewards that normally live
    in [0, 1], which is the kind of artefact an expert should catch.
    """
    rng = np.random.default_rng(seed)
    candidates = [t.id for t in dataset if not t.is_initial and not t.is_terminal]
    chosen = sorted(rng.choice(np.asarray(candidates), size=count, replace=False).tolist())
    edited = {}
    for uid in chosen:
        t = dataset.get(uid)
        edited[uid] = dc_replace(t, reward=t.reward + magnitude)
    return dataset.replace_transitions(edited), chosen


def tumor_analysis_config(**overrides) -> AnalysisConfig:
    """Calibrated analysis settings for generated tumor data."""
    defaults = dict(
        estimator="kernel-fqe",
        gamma=1.0,
        radius=0.25,
        influence_threshold=0.05,
        v_max=float(HORIZON),
        metric_weights=(1.0, 0.3, 0.5, 8.0),
    )
    defaults.update(overrides)
    return AnalysisConfig(**defaults)


# Case fixtures: (generator config, seed, analysis overrides, outliers).
_CASES: dict[str, dict] = {
    "reliable": {
        "config": TumorConfig(num_trajectories=12, dynamics_noise=0.0, epsilon=0.3),
        "seed": 7,
        "analysis": {},
        "outliers": None,
    },
    "unevaluatable": {
        "config": TumorConfig(num_trajectories=5, dynamics_noise=0.08, epsilon=0.3),
        "seed": 11,
        "analysis": {},
        "outliers": None,
    },
    "needs_review_genuine": {
        "config": TumorConfig(num_trajectories=6, dynamics_noise=0.0, epsilon=0.3),
        "seed": 23,
        "analysis": {},
        "outliers": None,
    },
    "needs_review_outliers": {
        "config": TumorConfig(num_trajectories=10, dynamics_noise=0.0, epsilon=0.0),
        "seed": 7,
        "analysis": {},
        "outliers": {"count": 3, "magnitude": 25.0, "seed": 99},
    },
}


def tumor_case_names() -> tuple[str, ...]:
    return tuple(_CASES)


def tumor_case(name: str) -> tuple[Dataset, AnalysisConfig, FunctionPolicy, list[str]]:
    """Dataset, analysis config, policy, and injected outlier ids for a case."""
    try:
        spec = _CASES[name]
    except KeyError:
        raise KeyError(f"unknown tumor case {name!r}; expected one of {tuple(_CASES)}") from None
    dataset = generate_tumor(spec["seed"], spec["config"])
    injected: list[str] = []
    if spec["outliers"]:
        dataset, injected = inject_reward_outliers(
            dataset,
            spec["outliers"]["count"],
            spec["outliers"]["magnitude"],
            spec["outliers"]["seed"],
        )
    return dataset, tumor_analysis_config(**spec["analysis"]), tumor_policy(), injected
