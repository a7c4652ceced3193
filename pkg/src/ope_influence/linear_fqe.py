"""Linear least-squares fitted Q evaluation with exact leave-one-out.

The weight vector solves C w = Psi^T r with C = Psi^T Psi - gamma Psi^T
Psi_p, where Psi stacks features of logged state-action pairs and Psi_p
stacks features of next states paired with the evaluation policy's action
(zero rows for terminal transitions). Removing transition j subtracts one
row from each stack, which is two rank-one updates of C, so the refit
weights come out of two Sherman-Morrison steps instead of a new solve.
Unlike the kernel estimator's closed form, this leave-one-out is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import (
    AnalysisConfig,
    Dataset,
    EvaluationError,
    EvaluationPolicy,
    InfluenceUndefinedError,
    initial_eval_set,
)
from .report import InfluenceReport, normalize_influence, order_flags

# Denominators inside this margin of zero mean the rank-one update has no
# solution: the reduced model is not identifiable.
PIVOT_TOLERANCE = 1e-12
CONDITION_LIMIT = 1e12


class ModelUnidentifiableError(EvaluationError):
    """The feature matrix does not pin down a unique weight vector."""


class RemovalUnidentifiableError(InfluenceUndefinedError):
    """Removing the unit makes the reduced model unidentifiable."""


class FeatureMap:
    """Maps a state-action pair to a fixed-length feature vector."""

    dim: int

    def features(self, state: np.ndarray, action: int) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.stack(
            [self.features(s, int(a)) for s, a in zip(np.asarray(states), actions)]
        )


class StateActionFeatures(FeatureMap):
    """Raw state concatenated with a one-hot action encoding."""

    def __init__(self, state_dim: int, action_count: int):
        self.state_dim = int(state_dim)
        self.action_count = int(action_count)
        self.dim = self.state_dim + self.action_count

    def features(self, state, action):
        out = np.zeros(self.dim)
        out[: self.state_dim] = np.asarray(state, dtype=np.float64)
        out[self.state_dim + int(action)] = 1.0
        return out

    def matrix(self, states, actions):
        states = np.asarray(states, dtype=np.float64)
        n = len(states)
        out = np.zeros((n, self.dim))
        out[:, : self.state_dim] = states
        out[np.arange(n), self.state_dim + np.asarray(actions, dtype=int)] = 1.0
        return out


class PolynomialStateActionFeatures(FeatureMap):
    """Degree-2 state monomials (bias, linear, all pairwise products)
    concatenated with a one-hot action encoding."""

    def __init__(self, state_dim: int, action_count: int):
        self.state_dim = int(state_dim)
        self.action_count = int(action_count)
        self._pairs = [(i, k) for i in range(state_dim) for k in range(i, state_dim)]
        self.dim = 1 + state_dim + len(self._pairs) + action_count

    def features(self, state, action):
        x = np.asarray(state, dtype=np.float64)
        quad = np.array([x[i] * x[k] for i, k in self._pairs])
        one_hot = np.zeros(self.action_count)
        one_hot[int(action)] = 1.0
        return np.concatenate(([1.0], x, quad, one_hot))


class TableFeatures(FeatureMap):
    """User-supplied feature vectors keyed by (state tuple, action)."""

    def __init__(self, table: Mapping[tuple, np.ndarray]):
        self.table = {
            (tuple(float(v) for v in key[0]), int(key[1])): np.asarray(vec, dtype=np.float64)
            for key, vec in table.items()
        }
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) != 1:
            raise ValueError("all feature vectors must share one dimension")
        self.dim = dims.pop()

    def features(self, state, action):
        key = (tuple(float(v) for v in np.asarray(state)), int(action))
        try:
            return self.table[key]
        except KeyError:
            raise EvaluationError(f"feature table has no entry for {key}") from None


@dataclass
class LinearModel:
    """Fitted weights plus everything leave-one-out updates need."""

    feature_map: FeatureMap
    gamma: float
    psi: np.ndarray
    psi_next: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray
    w: np.ndarray
    psi_t_r: np.ndarray
    rewards: np.ndarray
    q: np.ndarray
    v_hat: float
    initial_ids: tuple[str, ...]
    init_pos: np.ndarray
    unit_ids: tuple[str, ...]

    def position(self, unit_id: str) -> int:
        return self.unit_ids.index(unit_id)


def _check_condition(C: np.ndarray, limit: float) -> None:
    # SVD both measures conditioning and names the deficient directions.
    _, s, vt = np.linalg.svd(C)
    if s[-1] == 0 or s[0] / s[-1] > limit:
        bad = vt[s < s[0] / limit] if s[-1] > 0 else vt[s == 0]
        directions = []
        for row in np.atleast_2d(bad):
            directions.append(int(np.argmax(np.abs(row))))
        raise ModelUnidentifiableError(
            "model unidentifiable: the data does not pin down feature "
            f"direction(s) {sorted(set(directions))} (condition number above {limit:g})"
        )


def fit_linear_fqe(
    dataset: Dataset,
    policy: EvaluationPolicy,
    feature_map: FeatureMap,
    gamma: float,
    ridge: float = 0.0,
    condition_limit: float = CONDITION_LIMIT,
) -> LinearModel:
    """Solve the fitted Q system for the dataset under the policy.

    ridge adds lambda I to C; the default is no regularization, so poorly
    spanned feature directions fail loudly instead of being smoothed over.
    """
    psi = feature_map.matrix(dataset.states, dataset.actions)
    # Terminal rows are zero by definition; their next states never touch
    # the feature map, which may not even be defined there.
    psi_next = np.zeros_like(psi)
    live = ~dataset.terminal_mask
    if live.any():
        policy_actions = policy.actions_for(dataset.next_states[live])
        psi_next[live] = feature_map.matrix(dataset.next_states[live], policy_actions)
    C = psi.T @ psi - gamma * (psi.T @ psi_next)
    if ridge:
        C = C + ridge * np.eye(C.shape[0])
    _check_condition(C, condition_limit)
    C_inv = np.linalg.inv(C)
    psi_t_r = psi.T @ dataset.rewards
    w = C_inv @ psi_t_r
    q = psi @ w

    init_ids = sorted(initial_eval_set(dataset, policy), key=dataset.position)
    if not init_ids:
        raise EvaluationError(
            "policy not represented in initial data: no initial transition's "
            "action matches the evaluation policy"
        )
    init_pos = np.array([dataset.position(i) for i in init_ids])
    return LinearModel(
        feature_map=feature_map,
        gamma=gamma,
        psi=psi,
        psi_next=psi_next,
        C=C,
        C_inv=C_inv,
        w=w,
        psi_t_r=psi_t_r,
        rewards=dataset.rewards.copy(),
        q=q,
        v_hat=float(q[init_pos].mean()),
        initial_ids=tuple(init_ids),
        init_pos=init_pos,
        unit_ids=dataset.ids,
    )


def leave_one_out_weights(model: LinearModel, j_pos: int) -> np.ndarray:
    """Weights refit without transition j, via two rank-one updates.

    Raises RemovalUnidentifiableError when either update pivot vanishes,
    meaning the reduced system has no unique solution.
    """
    psi_j = model.psi[j_pos]
    psi_pj = model.psi_next[j_pos]
    u = model.C_inv @ psi_j
    pivot1 = 1.0 - psi_j @ u
    if abs(pivot1) <= PIVOT_TOLERANCE:
        raise RemovalUnidentifiableError(
            "removal makes the model unidentifiable (first update pivot is zero)"
        )
    B = model.C_inv + np.outer(u, (model.C_inv.T @ psi_j)) / pivot1
    left = B @ psi_j
    pivot2 = 1.0 + model.gamma * (psi_pj @ left)
    if abs(pivot2) <= PIVOT_TOLERANCE:
        raise RemovalUnidentifiableError(
            "removal makes the model unidentifiable (second update pivot is zero)"
        )
    C_minus_inv = B - model.gamma * np.outer(left, B.T @ psi_pj) / pivot2
    return C_minus_inv @ (model.psi_t_r - model.rewards[j_pos] * psi_j)


def linear_individual_influence(model: LinearModel, i_pos: int, j_pos: int) -> float:
    """Change of q[i] when transition j is removed from the fit."""
    w_minus = leave_one_out_weights(model, j_pos)
    return float(model.psi[i_pos] @ (w_minus - model.w))


def linear_total_influence(
    model: LinearModel, j_pos: int, shrink_initial_set: bool = True
) -> float:
    """Change of v_hat when transition j is removed from the fit."""
    w_minus = leave_one_out_weights(model, j_pos)
    in_pool = bool((model.init_pos == j_pos).any())
    if in_pool and shrink_initial_set:
        if len(model.init_pos) == 1:
            raise InfluenceUndefinedError(
                "initial evaluation pool is empty after removing this unit"
            )
        keep = model.init_pos[model.init_pos != j_pos]
        return float((model.psi[keep] @ w_minus).mean() - model.v_hat)
    return float((model.psi[model.init_pos] @ (w_minus - model.w)).mean())


def linear_influence_report(
    dataset: Dataset, config: AnalysisConfig, model: LinearModel
) -> InfluenceReport:
    """Total influence for every transition under the linear estimator.

    The neighborhood cutoff and dead-end notions live on the kernel graph
    and do not apply here; skipped and dead-end sets are empty.
    """
    totals: dict[str, float] = {}
    undefined: set[str] = set()
    for j_pos, unit in enumerate(dataset.ids):
        try:
            totals[unit] = linear_total_influence(model, j_pos, config.shrink_initial_set)
        except InfluenceUndefinedError:
            undefined.add(unit)
    normalized, notes = normalize_influence(
        totals, model.v_hat, config.influence_threshold, config.v_max
    )

    def tiebreak(unit: str):
        t = dataset.get(unit)
        return (t.trajectory_id, t.step_index)

    flags = order_flags(normalized, config.influence_threshold, tiebreak)
    return InfluenceReport(
        unit_kind="transition",
        unit_ids=dataset.ids,
        v_hat=model.v_hat,
        total_influence=totals,
        normalized_influence=normalized,
        flags=flags,
        dead_ends=[],
        skipped_by_cutoff=set(),
        undefined=undefined,
        threshold=config.influence_threshold,
        estimator="linear-fqe",
        notes=notes,
    )
