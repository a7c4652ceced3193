"""Kernel fitted Q evaluation on a radius neighbor graph.

The estimator averages targets over fixed-radius neighborhoods in
state-action space. Two row-normalized matrices capture everything:
M holds each transition's neighbors among logged state-action pairs,
M' holds the neighbors of each transition's next state paired with the
evaluation policy's action there. Backups are then matrix products, and
the T-step estimate has the closed form q = Phi r with
Phi' = sum_{t<=T} gamma^(t-1) M'^t and Phi = M (I + gamma Phi'_{T-1}).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .data import (
    AnalysisConfig,
    Dataset,
    EvaluationError,
    EvaluationPolicy,
    StateActionMetric,
    initial_eval_set,
)


@dataclass
class NeighborGraph:
    """Row-normalized neighborhood structure of a dataset.

    counts[i] is the neighborhood size N_i behind row i of M (always >= 1,
    every transition neighbors itself). counts_next[i] is the size behind
    row i of M_next, zero for terminal rows and for next states with no
    data nearby. column_counts_next[j] counts how many transitions have j
    in their next-state neighborhood; the influence cutoff reads it.
    """

    M: sparse.csr_array
    M_next: sparse.csr_array
    counts: np.ndarray
    counts_next: np.ndarray
    column_counts_next: np.ndarray
    ids: tuple[str, ...]
    radius: float

    def __len__(self) -> int:
        return len(self.ids)


def _radius_neighbors(tree: cKDTree, points: np.ndarray, bucket_points: np.ndarray, radius: float):
    """Indices into the bucket within strict radius of each query point."""
    hits = tree.query_ball_point(points, r=radius)
    out = []
    for k, idx in enumerate(hits):
        if not idx:
            out.append(np.empty(0, dtype=int))
            continue
        idx = np.asarray(idx, dtype=int)
        # query_ball_point uses a closed ball; the neighborhood is an open one.
        dist = np.linalg.norm(bucket_points[idx] - points[k], axis=1)
        out.append(idx[dist < radius])
    return out


def build_neighbor_graph(
    dataset: Dataset,
    metric: StateActionMetric,
    policy: EvaluationPolicy,
    radius: float,
) -> NeighborGraph:
    """Construct M and M_next for the dataset under the given metric.

    Rows of M_next for terminal transitions are zero by flag, not by
    geometry. Distances compare only same-action pairs; the metric makes
    cross-action distances infinite, so the search runs per action bucket.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = len(dataset)
    scaled = metric.scale(dataset.states)
    scaled_next = metric.scale(dataset.next_states)
    actions = dataset.actions
    policy_actions = policy.actions_for(dataset.next_states)

    buckets: dict[int, np.ndarray] = {
        int(a): np.flatnonzero(actions == a) for a in np.unique(actions)
    }
    trees = {a: cKDTree(scaled[idx]) for a, idx in buckets.items()}

    rows_m, cols_m = [], []
    counts = np.zeros(n, dtype=np.int64)
    for a, idx in buckets.items():
        neigh = _radius_neighbors(trees[a], scaled[idx], scaled[idx], radius)
        for local, found in zip(idx, neigh):
            cols = idx[found]
            counts[local] = len(cols)
            rows_m.append(np.full(len(cols), local))
            cols_m.append(cols)

    rows_p, cols_p = [], []
    counts_next = np.zeros(n, dtype=np.int64)
    live = np.flatnonzero(~dataset.terminal_mask)
    for a in buckets:
        sel = live[policy_actions[live] == a]
        if len(sel) == 0:
            continue
        neigh = _radius_neighbors(trees[a], scaled_next[sel], scaled[buckets[a]], radius)
        for local, found in zip(sel, neigh):
            cols = buckets[a][found]
            counts_next[local] = len(cols)
            rows_p.append(np.full(len(cols), local))
            cols_p.append(cols)

    def assemble(rows, cols, row_counts):
        if rows:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
        else:
            r = np.empty(0, dtype=int)
            c = np.empty(0, dtype=int)
        vals = 1.0 / row_counts[r]
        mat = sparse.csr_array((vals, (r, c)), shape=(n, n))
        mat.sort_indices()
        return mat, c

    M, _ = assemble(rows_m, cols_m, counts)
    M_next, cols_next = assemble(rows_p, cols_p, counts_next)
    column_counts_next = np.bincount(cols_next, minlength=n)
    return NeighborGraph(
        M=M,
        M_next=M_next,
        counts=counts,
        counts_next=counts_next,
        column_counts_next=column_counts_next,
        ids=dataset.ids,
        radius=float(radius),
    )


@dataclass
class PropagationMatrices:
    """Phi and Phi_next for a fixed horizon and discount.

    q = Phi r recovers the T-step estimate at logged state-action pairs;
    q_next = Phi_next r recovers it at next-state policy-action pairs.
    """

    phi: sparse.csr_array
    phi_next: sparse.csr_array
    gamma: float
    horizon: int


def compute_propagation(graph: NeighborGraph, gamma: float, horizon: int) -> PropagationMatrices:
    """Materialize Phi and Phi_next by the recurrences
    Phi'_t = M' + gamma M' Phi'_{t-1} and Phi_T = M (I + gamma Phi'_{T-1}).

    Dense-ish products are fine for the sizes this supports (a few
    thousand transitions); influence only ever needs a handful of rows and
    uses propagation_rows instead.
    """
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    M, Mn = graph.M, graph.M_next
    phi_next = Mn.copy()
    prev = None
    for _ in range(horizon - 1):
        prev = phi_next
        phi_next = (Mn + gamma * (Mn @ phi_next)).tocsr()
    if prev is None:
        phi = M.copy()
    else:
        phi = (M + gamma * (M @ prev)).tocsr()
    return PropagationMatrices(phi=phi, phi_next=phi_next, gamma=gamma, horizon=horizon)


def propagation_rows(graph: NeighborGraph, gamma: float, horizon: int, rows: np.ndarray) -> np.ndarray:
    """Selected rows of Phi as a dense block, without the full matrix.

    Phi[rows] = M[rows] (I + gamma M' + ... + (gamma M')^(T-1)), built by
    repeated sparse right-multiplication. Cost O(T |rows| nnz(M')).
    """
    rows = np.asarray(rows, dtype=int)
    base = graph.M[rows, :].toarray()
    acc = base.copy()
    cur = base
    for _ in range(horizon - 1):
        cur = gamma * (cur @ graph.M_next)
        acc += cur
    return acc


@dataclass
class FQEResult:
    """Value estimates from one kernel FQE run.

    q[i] estimates the policy's value from (x_i, a_i); q_next[i] from
    (x'_i, pi_e(x'_i)). v_hat averages q over the initial transitions whose
    action matches the policy.
    """

    q: np.ndarray
    q_next: np.ndarray
    v_hat: float
    initial_ids: tuple[str, ...]
    gamma: float
    horizon: int


def run_kernel_fqe(
    dataset: Dataset,
    graph: NeighborGraph,
    policy: EvaluationPolicy,
    gamma: float,
    horizon: int | None = None,
) -> FQEResult:
    """Run T backups of the neighborhood-average estimator.

    Uses the vector recurrence q'_t = M'(r + gamma q'_{t-1}),
    q_T = M(r + gamma q'_{T-1}), which is algebraically the matrix form
    q = Phi r. A horizon shorter than the longest trajectory truncates
    credit propagation and triggers a warning.
    """
    longest = max(len(v) for v in dataset.trajectory_index.values())
    if horizon is None:
        horizon = longest
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    if horizon < longest:
        warnings.warn(
            f"horizon {horizon} is shorter than the longest trajectory ({longest}); "
            "value backups are truncated",
            stacklevel=2,
        )
    r = dataset.rewards
    q_next_prev = np.zeros(len(dataset))
    q_next = graph.M_next @ r
    for _ in range(horizon - 1):
        q_next_prev = q_next
        q_next = graph.M_next @ (r + gamma * q_next_prev)
    q = graph.M @ (r + gamma * q_next_prev)

    init_ids = sorted(initial_eval_set(dataset, policy), key=dataset.position)
    if not init_ids:
        raise EvaluationError(
            "policy not represented in initial data: no initial transition's "
            "action matches the evaluation policy"
        )
    init_pos = np.array([dataset.position(i) for i in init_ids])
    v_hat = float(q[init_pos].mean())
    return FQEResult(
        q=q,
        q_next=q_next,
        v_hat=v_hat,
        initial_ids=tuple(init_ids),
        gamma=gamma,
        horizon=horizon,
    )


def kernel_fqe_from_config(
    dataset: Dataset, config: AnalysisConfig, policy: EvaluationPolicy
) -> tuple[NeighborGraph, FQEResult]:
    """Convenience wrapper: build the graph and run FQE per the config."""
    graph = build_neighbor_graph(dataset, config.metric(), policy, config.radius)
    result = run_kernel_fqe(dataset, graph, policy, config.gamma, config.resolve_horizon(dataset))
    return graph, result
