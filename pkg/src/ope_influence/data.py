"""Core data model: transitions, datasets, policies, metrics, and analysis configuration.

A dataset is an ordered collection of one-step transitions grouped into
trajectories. Transitions are the unit of removal for fitted Q evaluation
estimators; whole trajectories are the unit for the importance sampling
family. Datasets are immutable; edits produce new instances.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree


class DatasetError(ValueError):
    """Malformed dataset file or violated dataset invariant."""


class EvaluationError(RuntimeError):
    """Estimation cannot proceed on this dataset (for example, no initial
    transition matches the evaluation policy)."""


class InfluenceUndefinedError(EvaluationError):
    """Removing the unit leaves the estimator undefined, so its influence
    has no value. Callers report this status instead of a number."""


ESTIMATORS = ("kernel-fqe", "linear-fqe", "is", "wis", "pdis", "dr", "wdr")

# Estimator families: transition-level removal vs trajectory-level removal.
FQE_ESTIMATORS = ("kernel-fqe", "linear-fqe")
IS_ESTIMATORS = ("is", "wis", "pdis", "dr", "wdr")

RECORD_FIELDS = (
    "id",
    "trajectory_id",
    "step_index",
    "state",
    "action",
    "reward",
    "next_state",
    "behavior_prob",
    "is_initial",
    "is_terminal",
)


@dataclass(frozen=True, eq=False)
class Transition:
    """One observed step (x, a, r, x') with bookkeeping flags.

    ``behavior_prob`` is the behavior policy's probability of the taken
    action, required only by the importance sampling estimators.
    ``is_initial`` marks membership in the initial-state evaluation pool;
    ``is_terminal`` marks absorbing steps whose next state has no
    continuation by definition rather than by data sparsity.
    """

    id: str
    trajectory_id: str
    step_index: int
    state: NDArray[np.float64]
    action: int
    reward: float
    next_state: NDArray[np.float64]
    behavior_prob: float | None = None
    is_initial: bool = False
    is_terminal: bool = False

    def __post_init__(self):
        state = np.asarray(self.state, dtype=np.float64)
        next_state = np.asarray(self.next_state, dtype=np.float64)
        if state.ndim != 1 or next_state.ndim != 1:
            raise DatasetError(f"transition {self.id!r}: states must be 1-d vectors")
        if state.shape != next_state.shape:
            raise DatasetError(f"transition {self.id!r}: state and next_state dimensions differ")
        if not (np.isfinite(state).all() and np.isfinite(next_state).all()):
            raise DatasetError(f"transition {self.id!r}: non-finite state values")
        state.setflags(write=False)
        next_state.setflags(write=False)
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "next_state", next_state)
        object.__setattr__(self, "step_index", int(self.step_index))
        object.__setattr__(self, "action", int(self.action))
        object.__setattr__(self, "reward", float(self.reward))
        if not np.isfinite(self.reward):
            raise DatasetError(f"transition {self.id!r}: non-finite reward")
        if self.step_index < 0:
            raise DatasetError(f"transition {self.id!r}: negative step_index")
        if self.action < 0:
            raise DatasetError(f"transition {self.id!r}: negative action")
        if self.behavior_prob is not None:
            p = float(self.behavior_prob)
            if not (0.0 < p <= 1.0):
                raise DatasetError(
                    f"transition {self.id!r}: behavior_prob must lie in (0, 1], got {p}"
                )
            object.__setattr__(self, "behavior_prob", p)

    def to_record(self) -> dict:
        """Plain-JSON record in canonical field order. behavior_prob is
        omitted when absent so round trips preserve the file's shape."""
        rec = {
            "id": self.id,
            "trajectory_id": self.trajectory_id,
            "step_index": self.step_index,
            "state": [float(v) for v in self.state],
            "action": self.action,
            "reward": self.reward,
            "next_state": [float(v) for v in self.next_state],
            "behavior_prob": self.behavior_prob,
            "is_initial": self.is_initial,
            "is_terminal": self.is_terminal,
        }
        if rec["behavior_prob"] is None:
            del rec["behavior_prob"]
        return rec

    @classmethod
    def from_record(cls, rec: Mapping, *, where: str = "record") -> "Transition":
        if not isinstance(rec, Mapping):
            raise DatasetError(f"{where}: expected a JSON object")
        unknown = set(rec) - set(RECORD_FIELDS)
        if unknown:
            raise DatasetError(f"{where}: unknown fields {sorted(unknown)}")
        missing = set(RECORD_FIELDS) - {"behavior_prob"} - set(rec)
        if missing:
            raise DatasetError(f"{where}: missing fields {sorted(missing)}")
        if not isinstance(rec["id"], str) or not isinstance(rec["trajectory_id"], str):
            raise DatasetError(f"{where}: id and trajectory_id must be strings")
        for key in ("is_initial", "is_terminal"):
            if not isinstance(rec[key], bool):
                raise DatasetError(f"{where}: {key} must be a boolean")
        for key in ("step_index", "action"):
            if isinstance(rec[key], bool) or not isinstance(rec[key], int):
                raise DatasetError(f"{where}: {key} must be an integer")
        for key in ("state", "next_state"):
            if not isinstance(rec[key], list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in rec[key]
            ):
                raise DatasetError(f"{where}: {key} must be a list of numbers")
        if isinstance(rec["reward"], bool) or not isinstance(rec["reward"], (int, float)):
            raise DatasetError(f"{where}: reward must be a number")
        prob = rec.get("behavior_prob")
        if prob is not None and (isinstance(prob, bool) or not isinstance(prob, (int, float))):
            raise DatasetError(f"{where}: behavior_prob must be a number or null")
        try:
            return cls(
                id=rec["id"],
                trajectory_id=rec["trajectory_id"],
                step_index=rec["step_index"],
                state=rec["state"],
                action=rec["action"],
                reward=rec["reward"],
                next_state=rec["next_state"],
                behavior_prob=prob,
                is_initial=rec["is_initial"],
                is_terminal=rec["is_terminal"],
            )
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None


class Dataset:
    """Immutable ordered collection of transitions with trajectory structure.

    Invariants checked at construction:

    - at least one transition, unique ids, one consistent state dimension;
    - within each trajectory, step_index values are consecutive from 0
      (transitions may appear in any file order);
    - is_initial only occurs at step 0. Freshly generated data marks every
      trajectory head initial; trajectories produced by removing a
      transition keep their surviving flags, so a continuation fragment
      legitimately starts with a non-initial step.
    """

    def __init__(self, transitions: Sequence[Transition], *, action_count: int | None = None):
        transitions = tuple(transitions)
        if not transitions:
            raise DatasetError("dataset must contain at least one transition")
        ids = [t.id for t in transitions]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise DatasetError(f"duplicate transition id {dup!r}")
        dim = transitions[0].state.shape[0]
        by_traj: dict[str, list[Transition]] = {}
        for t in transitions:
            if t.state.shape[0] != dim:
                raise DatasetError(
                    f"transition {t.id!r}: state dimension {t.state.shape[0]} differs from {dim}"
                )
            if t.is_initial and t.step_index != 0:
                raise DatasetError(f"transition {t.id!r}: is_initial set at step {t.step_index}")
            by_traj.setdefault(t.trajectory_id, []).append(t)
        for tid, steps in by_traj.items():
            steps.sort(key=lambda t: t.step_index)
            expected = list(range(len(steps)))
            got = [t.step_index for t in steps]
            if got != expected:
                raise DatasetError(
                    f"trajectory {tid!r}: step_index values {got} are not consecutive from 0"
                )

        self.transitions = transitions
        self.state_dim = dim
        self._by_id = {t.id: k for k, t in enumerate(transitions)}
        self.trajectory_index: dict[str, list[str]] = {
            tid: [t.id for t in steps] for tid, steps in by_traj.items()
        }
        max_action = max(t.action for t in transitions)
        self.action_count = int(action_count) if action_count is not None else max_action + 1
        if self.action_count <= max_action:
            raise DatasetError(
                f"action_count {self.action_count} does not cover action {max_action}"
            )
        self._arrays: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    def __contains__(self, unit_id: str) -> bool:
        return unit_id in self._by_id

    def get(self, unit_id: str) -> Transition:
        try:
            return self.transitions[self._by_id[unit_id]]
        except KeyError:
            raise KeyError(f"no transition with id {unit_id!r}") from None

    def position(self, unit_id: str) -> int:
        return self._by_id[unit_id]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.transitions)

    def trajectory(self, trajectory_id: str) -> list[Transition]:
        return [self.get(i) for i in self.trajectory_index[trajectory_id]]

    @property
    def trajectory_ids(self) -> tuple[str, ...]:
        return tuple(self.trajectory_index)

    def _array(self, key: str, build: Callable[[], np.ndarray]) -> np.ndarray:
        if key not in self._arrays:
            arr = build()
            arr.setflags(write=False)
            self._arrays[key] = arr
        return self._arrays[key]

    @property
    def states(self) -> np.ndarray:
        return self._array("states", lambda: np.stack([t.state for t in self.transitions]))

    @property
    def next_states(self) -> np.ndarray:
        return self._array("next", lambda: np.stack([t.next_state for t in self.transitions]))

    @property
    def actions(self) -> np.ndarray:
        return self._array("actions", lambda: np.array([t.action for t in self.transitions]))

    @property
    def rewards(self) -> np.ndarray:
        return self._array(
            "rewards", lambda: np.array([t.reward for t in self.transitions], dtype=np.float64)
        )

    @property
    def initial_mask(self) -> np.ndarray:
        return self._array("initial", lambda: np.array([t.is_initial for t in self.transitions]))

    @property
    def terminal_mask(self) -> np.ndarray:
        return self._array("terminal", lambda: np.array([t.is_terminal for t in self.transitions]))

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(t.to_record(), separators=(", ", ": ")) + "\n" for t in self.transitions
        )

    def fingerprint(self) -> str:
        """Content hash over the canonical serialization, independent of the
        file order the transitions arrived in."""
        canon = sorted(
            json.dumps(t.to_record(), sort_keys=True, separators=(",", ":"))
            for t in self.transitions
        )
        return hashlib.sha256("\n".join(canon).encode("utf-8")).hexdigest()

    # -- editing ---------------------------------------------------------

    def replace_transitions(self, replacements: Mapping[str, Transition]) -> "Dataset":
        """New dataset with the given transitions substituted in place."""
        for unit_id in replacements:
            if unit_id not in self._by_id:
                raise KeyError(f"no transition with id {unit_id!r}")
        new = [replacements.get(t.id, t) for t in self.transitions]
        return Dataset(new, action_count=None)

    def remove_transition(self, unit_id: str) -> "Dataset":
        """Remove one transition. The trajectory splits at the gap: the
        prefix keeps its id, the suffix becomes a continuation fragment with
        a derived id, re-indexed steps, and its surviving flags. Initial-set
        membership of the remaining transitions is never altered."""
        victim = self.get(unit_id)
        tid = victim.trajectory_id
        steps = self.trajectory(tid)
        pos = next(k for k, t in enumerate(steps) if t.id == unit_id)
        suffix = steps[pos + 1 :]
        out: list[Transition] = []
        renamed: dict[str, Transition] = {}
        if suffix:
            frag_id = f"{tid}#{victim.step_index}"
            while frag_id in self.trajectory_index:
                frag_id += "+"
            for k, t in enumerate(suffix):
                renamed[t.id] = replace(t, trajectory_id=frag_id, step_index=k)
        for t in self.transitions:
            if t.id == unit_id:
                continue
            out.append(renamed.get(t.id, t))
        if not out:
            raise InfluenceUndefinedError("removal leaves an empty dataset")
        return Dataset(out)

    def remove_trajectory(self, trajectory_id: str) -> "Dataset":
        if trajectory_id not in self.trajectory_index:
            raise KeyError(f"no trajectory with id {trajectory_id!r}")
        out = [t for t in self.transitions if t.trajectory_id != trajectory_id]
        if not out:
            raise InfluenceUndefinedError("removal leaves an empty dataset")
        return Dataset(out)


def load_dataset(path) -> Dataset:
    """Read a line-delimited JSON dataset. Parse failures and invariant
    violations raise DatasetError naming the offending line."""
    transitions = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from None
            transitions.append(Transition.from_record(rec, where=f"{path}: line {lineno}"))
    if not transitions:
        raise DatasetError(f"{path}: dataset file contains no transitions")
    return Dataset(transitions)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset.to_jsonl())


# -- evaluation policies -------------------------------------------------


class EvaluationPolicy:
    """Deterministic state-to-action mapping under evaluation.

    Only deterministic policies are supported; the importance sampling
    module relies on action-match indicators and rejects anything else at
    its boundary.
    """

    name = "policy"

    def action_for(self, state: np.ndarray) -> int:
        raise NotImplementedError

    def actions_for(self, states: np.ndarray) -> np.ndarray:
        return np.array([self.action_for(s) for s in np.asarray(states)])


class ConstantPolicy(EvaluationPolicy):
    def __init__(self, action: int):
        self.action = int(action)
        self.name = f"constant:{self.action}"

    def action_for(self, state: np.ndarray) -> int:
        return self.action

    def actions_for(self, states: np.ndarray) -> np.ndarray:
        return np.full(len(states), self.action)


class TablePolicy(EvaluationPolicy):
    """Exact lookup table from state vectors to actions."""

    def __init__(self, table: Mapping[tuple, int]):
        self.table = {tuple(float(v) for v in k): int(a) for k, a in table.items()}
        self.name = f"table[{len(self.table)}]"

    def action_for(self, state: np.ndarray) -> int:
        key = tuple(float(v) for v in np.asarray(state))
        try:
            return self.table[key]
        except KeyError:
            raise EvaluationError(f"policy table has no entry for state {list(key)}") from None


class NearestNeighborPolicy(EvaluationPolicy):
    """Majority vote over the k nearest reference state-action pairs.

    Ties break toward the smallest action id so the policy stays
    deterministic. Distances are Euclidean in raw state coordinates.
    """

    def __init__(self, states: np.ndarray, actions: np.ndarray, k: int = 1):
        self.ref_actions = np.asarray(actions, dtype=int)
        states = np.asarray(states, dtype=np.float64)
        if len(states) != len(self.ref_actions) or len(states) == 0:
            raise ValueError("states and actions must be equal-length and nonempty")
        self.k = min(int(k), len(states))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self._tree = cKDTree(states)
        self.name = f"knn:{self.k}"

    @classmethod
    def from_dataset(cls, dataset: Dataset, k: int = 1) -> "NearestNeighborPolicy":
        return cls(dataset.states, dataset.actions, k=k)

    def action_for(self, state: np.ndarray) -> int:
        return int(self.actions_for(np.asarray(state)[None, :])[0])

    def actions_for(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        _, idx = self._tree.query(states, k=self.k)
        idx = np.atleast_2d(idx)
        if idx.shape[0] != len(states):
            idx = idx.reshape(len(states), -1)
        votes = self.ref_actions[idx]
        out = np.empty(len(states), dtype=int)
        for row, v in enumerate(votes):
            counts = np.bincount(v)
            out[row] = int(np.flatnonzero(counts == counts.max())[0])
        return out


class FunctionPolicy(EvaluationPolicy):
    def __init__(self, fn: Callable[[np.ndarray], int], name: str = "function"):
        self._fn = fn
        self.name = name

    def action_for(self, state: np.ndarray) -> int:
        return int(self._fn(np.asarray(state)))


def initial_eval_set(dataset: Dataset, policy: EvaluationPolicy) -> set[str]:
    """Ids of initial transitions whose logged action matches the policy.

    This is the pool the value estimate averages over. Empty means the
    policy is not represented in the initial data; callers raise then.
    """
    mask = dataset.initial_mask
    if not mask.any():
        return set()
    pos = np.flatnonzero(mask)
    wanted = policy.actions_for(dataset.states[pos])
    match = pos[dataset.actions[pos] == wanted]
    return {dataset.transitions[k].id for k in match}


# -- distance ------------------------------------------------------------


@dataclass(frozen=True)
class StateActionMetric:
    """Weighted Euclidean distance on states; mismatched actions are
    infinitely far apart. ``weights`` scales each state dimension before
    the Euclidean norm; None means unweighted.
    """

    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 or not np.isfinite(v) for v in w):
                raise ValueError("metric weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    def scale(self, states: np.ndarray) -> np.ndarray:
        """States mapped into the space where the metric is plain Euclidean."""
        states = np.asarray(states, dtype=np.float64)
        if self.weights is None:
            return states
        w = np.asarray(self.weights)
        if states.shape[-1] != w.shape[0]:
            raise ValueError(
                f"metric has {w.shape[0]} weights but states have dimension {states.shape[-1]}"
            )
        return states * w

    def distance(self, state_a, action_a: int, state_b, action_b: int) -> float:
        if int(action_a) != int(action_b):
            return float("inf")
        a = self.scale(np.asarray(state_a, dtype=np.float64))
        b = self.scale(np.asarray(state_b, dtype=np.float64))
        return float(np.linalg.norm(a - b))


# -- configuration -------------------------------------------------------


@dataclass
class AnalysisConfig:
    """Knobs shared by the estimators, influence engine, and diagnostics.

    horizon None means the longest trajectory length in the dataset.
    v_max is the user's bound on the value scale; it enables the column
    cutoff and the zero-value normalization fallback.
    shrink_initial_set selects the removal convention for units inside the
    initial evaluation pool: True re-averages over the surviving pool
    (matches the brute-force oracle), False keeps the pool fixed and uses
    the removed unit's own leave-one-out neighborhood.
    """

    estimator: str = "kernel-fqe"
    gamma: float = 1.0
    radius: float = 0.5
    horizon: int | None = None
    influence_threshold: float = 0.05
    v_max: float | None = None
    metric_weights: tuple[float, ...] | None = None
    shrink_initial_set: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.horizon is not None and int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        if self.influence_threshold <= 0:
            raise ValueError("influence threshold must be positive")
        if self.v_max is not None and self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.metric_weights is not None:
            self.metric_weights = tuple(float(v) for v in self.metric_weights)

    @property
    def unit_kind(self) -> str:
        return "transition" if self.estimator in FQE_ESTIMATORS else "trajectory"

    def metric(self) -> StateActionMetric:
        return StateActionMetric(weights=self.metric_weights)

    def resolve_horizon(self, dataset: Dataset) -> int:
        if self.horizon is not None:
            return int(self.horizon)
        return max(len(ids) for ids in dataset.trajectory_index.values())

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "gamma": self.gamma,
            "radius": self.radius,
            "horizon": self.horizon,
            "influence_threshold": self.influence_threshold,
            "v_max": self.v_max,
            "metric_weights": list(self.metric_weights) if self.metric_weights else None,
            "shrink_initial_set": self.shrink_initial_set,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "AnalysisConfig":
        kwargs = dict(raw)
        if kwargs.get("metric_weights"):
            kwargs["metric_weights"] = tuple(kwargs["metric_weights"])
        return cls(**kwargs)
