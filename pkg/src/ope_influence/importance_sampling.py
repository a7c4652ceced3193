"""Importance sampling estimators and their exact leave-one-out influence.

Per-step ratios are indicator(a_t == pi_e(x_t)) / behavior_prob_t, since
only deterministic evaluation policies are supported. Five estimators
share the cached weight cumulative products: plain and weighted IS,
per-decision IS, and the doubly robust pair built on a user-supplied
approximate value model. Because every estimator is a ratio of sums over
trajectories, removing one trajectory has an exact closed form, which
each influence function implements; the brute-force oracle is the
independent check.

Trajectories of different lengths share one padded horizon: after a
trajectory ends, its cumulative weight stays constant and its rewards and
baseline values are zero, which is the absorbing-state convention the
weighted estimators' normalizers expect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import (
    AnalysisConfig,
    Dataset,
    EvaluationError,
    EvaluationPolicy,
    InfluenceUndefinedError,
    Transition,
)
from .report import InfluenceReport, normalize_influence, order_flags

IS_METHODS = ("is", "wis", "pdis", "dr", "wdr")


class MissingBehaviorProbError(EvaluationError):
    """A transition lacks behavior_prob, so ratios cannot be formed."""


class UndefinedAfterRemovalError(InfluenceUndefinedError):
    """Removing the trajectory zeroes a normalizer; the reduced estimator
    has no value."""


@dataclass
class TrajectoryWeights:
    """Cumulative importance weights and cached per-trajectory terms.

    step_weights[n, t] is w_{0:t} for trajectory n, held constant past the
    trajectory's end. prev_weights[n, t] is w_{0:t-1} with the t = 0 column
    equal to one. W and W_t are the weighted estimators' normalizers;
    is_terms and pdis_terms are the per-trajectory sums the unweighted
    estimators average, cached so influence queries cost O(horizon).
    """

    trajectory_ids: tuple[str, ...]
    steps: tuple[tuple[Transition, ...], ...]
    gamma: float
    horizon: int
    lengths: np.ndarray
    step_weights: np.ndarray
    prev_weights: np.ndarray
    step_rewards: np.ndarray
    discounts: np.ndarray
    returns: np.ndarray
    full_weights: np.ndarray
    W: float
    W_t: np.ndarray
    W_prev_t: np.ndarray
    is_terms: np.ndarray
    pdis_terms: np.ndarray

    def __len__(self) -> int:
        return len(self.trajectory_ids)

    def index(self, trajectory_id: str) -> int:
        try:
            return self.trajectory_ids.index(trajectory_id)
        except ValueError:
            raise KeyError(f"no trajectory with id {trajectory_id!r}") from None


def compute_weights(dataset: Dataset, policy: EvaluationPolicy, gamma: float) -> TrajectoryWeights:
    """Build the cumulative weight table for every trajectory."""
    if not isinstance(policy, EvaluationPolicy):
        raise TypeError(
            "importance sampling requires a deterministic EvaluationPolicy; "
            f"got {type(policy).__name__}"
        )
    tids = dataset.trajectory_ids
    steps = tuple(tuple(dataset.trajectory(tid)) for tid in tids)
    n = len(tids)
    horizon = max(len(s) for s in steps)
    lengths = np.array([len(s) for s in steps])
    step_weights = np.zeros((n, horizon))
    step_rewards = np.zeros((n, horizon))
    for row, traj in enumerate(steps):
        states = np.stack([t.state for t in traj])
        wanted = policy.actions_for(states)
        w = 1.0
        for t, trans in enumerate(traj):
            if trans.behavior_prob is None:
                raise MissingBehaviorProbError(
                    f"transition {trans.id!r} has no behavior_prob; importance "
                    "sampling estimators need it"
                )
            ratio = (1.0 if trans.action == wanted[t] else 0.0) / trans.behavior_prob
            w *= ratio
            step_weights[row, t] = w
            step_rewards[row, t] = trans.reward
        step_weights[row, len(traj) :] = w
    prev_weights = np.ones((n, horizon))
    prev_weights[:, 1:] = step_weights[:, :-1]
    discounts = gamma ** np.arange(horizon)
    returns = step_rewards @ discounts
    full_weights = step_weights[np.arange(n), lengths - 1]
    return TrajectoryWeights(
        trajectory_ids=tids,
        steps=steps,
        gamma=gamma,
        horizon=horizon,
        lengths=lengths,
        step_weights=step_weights,
        prev_weights=prev_weights,
        step_rewards=step_rewards,
        discounts=discounts,
        returns=returns,
        full_weights=full_weights,
        W=float(full_weights.sum()),
        W_t=step_weights.sum(axis=0),
        W_prev_t=prev_weights.sum(axis=0),
        is_terms=full_weights * returns,
        pdis_terms=(step_weights * step_rewards) @ discounts,
    )


# -- approximate value models for the doubly robust pair -----------------


class ValueBaselines:
    """Approximate q(x, a) and v(x) = q(x, pi_e(x)) used by dr and wdr.

    Baselines are fixed functions of state and action, independent of the
    dataset under analysis, so leave-one-out removal never refits them.
    """

    name = "baselines"

    def q_value(self, state: np.ndarray, action: int) -> float:
        raise NotImplementedError

    def v_value(self, state: np.ndarray) -> float:
        raise NotImplementedError


class ZeroBaselines(ValueBaselines):
    """Degenerate model; dr collapses to plain per-step IS correction."""

    name = "zero"

    def q_value(self, state, action):
        return 0.0

    def v_value(self, state):
        return 0.0


class FunctionBaselines(ValueBaselines):
    def __init__(self, q_fn: Callable, v_fn: Callable, name: str = "function"):
        self._q = q_fn
        self._v = v_fn
        self.name = name

    def q_value(self, state, action):
        return float(self._q(np.asarray(state), int(action)))

    def v_value(self, state):
        return float(self._v(np.asarray(state)))


class LinearModelBaselines(ValueBaselines):
    """Adapts a fitted linear model into a fixed baseline."""

    def __init__(self, model, policy: EvaluationPolicy):
        self.model = model
        self.policy = policy
        self.name = "linear-model"

    def q_value(self, state, action):
        return float(self.model.feature_map.features(state, action) @ self.model.w)

    def v_value(self, state):
        return self.q_value(state, self.policy.action_for(state))


@dataclass
class BaselineTables:
    """Baseline values evaluated on every logged step, zero past the end."""

    q_table: np.ndarray
    v_table: np.ndarray
    dr_terms: np.ndarray

    @classmethod
    def from_baselines(cls, weights: TrajectoryWeights, baselines: ValueBaselines):
        n, horizon = weights.step_weights.shape
        q_table = np.zeros((n, horizon))
        v_table = np.zeros((n, horizon))
        for row, traj in enumerate(weights.steps):
            for t, trans in enumerate(traj):
                q_table[row, t] = baselines.q_value(trans.state, trans.action)
                v_table[row, t] = baselines.v_value(trans.state)
        per_step = (
            weights.step_weights * (weights.step_rewards - q_table)
            + weights.prev_weights * v_table
        )
        return cls(q_table=q_table, v_table=v_table, dr_terms=per_step @ weights.discounts)


def _tables(weights: TrajectoryWeights, baselines) -> BaselineTables:
    if isinstance(baselines, BaselineTables):
        return baselines
    if isinstance(baselines, ValueBaselines):
        return BaselineTables.from_baselines(weights, baselines)
    raise TypeError("dr and wdr need ValueBaselines or precomputed BaselineTables")


def _check_method(method: str, baselines) -> None:
    if method not in IS_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {IS_METHODS}")
    if method in ("dr", "wdr") and baselines is None:
        raise ValueError(f"method {method!r} requires value baselines")


def estimate(method: str, weights: TrajectoryWeights, baselines=None) -> float:
    """Value estimate under one of the five methods."""
    _check_method(method, baselines)
    if method == "is":
        return float(weights.is_terms.mean())
    if method == "pdis":
        return float(weights.pdis_terms.mean())
    if method == "wis":
        if weights.W == 0.0:
            raise EvaluationError(
                "all trajectory weights are zero; the weighted estimator is undefined"
            )
        return float(weights.is_terms.sum() / weights.W)
    tables = _tables(weights, baselines)
    if method == "dr":
        return float(tables.dr_terms.mean())
    # wdr: every per-step normalizer must be positive.
    if (weights.W_t == 0.0).any():
        raise EvaluationError(
            "all trajectory weights are zero at some step; the weighted "
            "estimator is undefined"
        )
    r_bar = (weights.step_weights * weights.step_rewards).sum(axis=0) / weights.W_t
    q_bar = (weights.step_weights * tables.q_table).sum(axis=0) / weights.W_t
    v_bar = (weights.prev_weights * tables.v_table).sum(axis=0) / weights.W_prev_t
    return float(((r_bar - q_bar + v_bar) * weights.discounts).sum())


def trajectory_influence(
    method: str,
    weights: TrajectoryWeights,
    trajectory_id: str,
    baselines=None,
) -> float:
    """Exact change of the estimate if the trajectory were removed.

    Mean-structured methods (is, pdis, dr) shift by (v_hat - term_j)/(N-1).
    Weight-normalized methods redistribute the removed weight; they become
    undefined when the removed trajectory carried all of it.
    """
    _check_method(method, baselines)
    n = len(weights)
    if n <= 1:
        raise InfluenceUndefinedError(
            "influence is undefined for a single-trajectory dataset"
        )
    j = weights.index(trajectory_id)
    if method in ("is", "pdis", "dr"):
        if method == "is":
            terms = weights.is_terms
        elif method == "pdis":
            terms = weights.pdis_terms
        else:
            terms = _tables(weights, baselines).dr_terms
        v_hat = float(terms.mean())
        return (v_hat - float(terms[j])) / (n - 1)
    if method == "wis":
        v_hat = estimate("wis", weights)
        denom = weights.W - weights.full_weights[j]
        if denom == 0.0:
            raise UndefinedAfterRemovalError("estimator undefined after removal")
        return float(weights.full_weights[j] / denom * (v_hat - weights.returns[j]))
    # wdr
    tables = _tables(weights, baselines)
    estimate("wdr", weights, tables)  # surfaces zero-normalizer errors on the full data
    w_j = weights.step_weights[j]
    w_prev_j = weights.prev_weights[j]
    denom_t = weights.W_t - w_j
    denom_prev = weights.W_prev_t - w_prev_j
    active = w_j > 0
    active_prev = w_prev_j > 0
    if (denom_t[active] == 0.0).any() or (denom_prev[active_prev] == 0.0).any():
        raise UndefinedAfterRemovalError("estimator undefined after removal")
    r_bar = (weights.step_weights * weights.step_rewards).sum(axis=0) / weights.W_t
    q_bar = (weights.step_weights * tables.q_table).sum(axis=0) / weights.W_t
    v_bar = (weights.prev_weights * tables.v_table).sum(axis=0) / weights.W_prev_t
    delta = np.zeros(weights.horizon)
    np.divide(w_j * (r_bar - weights.step_rewards[j]), denom_t, out=delta, where=active)
    out_q = np.zeros(weights.horizon)
    np.divide(w_j * (q_bar - tables.q_table[j]), denom_t, out=out_q, where=active)
    out_v = np.zeros(weights.horizon)
    np.divide(
        w_prev_j * (v_bar - tables.v_table[j]), denom_prev, out=out_v, where=active_prev
    )
    return float(((delta - out_q + out_v) * weights.discounts).sum())


def is_influence_report(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    baselines=None,
) -> InfluenceReport:
    """Per-trajectory influence report for the configured method."""
    weights = compute_weights(dataset, policy, config.gamma)
    tables = _tables(weights, baselines) if config.estimator in ("dr", "wdr") else None
    v_hat = estimate(config.estimator, weights, tables)
    totals: dict[str, float] = {}
    undefined: set[str] = set()
    for tid in weights.trajectory_ids:
        try:
            totals[tid] = trajectory_influence(config.estimator, weights, tid, tables)
        except InfluenceUndefinedError:
            undefined.add(tid)
    normalized, notes = normalize_influence(
        totals, v_hat, config.influence_threshold, config.v_max
    )
    flags = order_flags(normalized, config.influence_threshold, lambda tid: (tid, 0))
    return InfluenceReport(
        unit_kind="trajectory",
        unit_ids=weights.trajectory_ids,
        v_hat=v_hat,
        total_influence=totals,
        normalized_influence=normalized,
        flags=flags,
        dead_ends=[],
        skipped_by_cutoff=set(),
        undefined=undefined,
        threshold=config.influence_threshold,
        estimator=config.estimator,
        notes=notes,
    )
