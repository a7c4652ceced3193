"""Neighbor graph construction and fitted Q backups."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ope_influence.data import (
    AnalysisConfig,
    ConstantPolicy,
    Dataset,
    StateActionMetric,
    Transition,
)
from ope_influence.kernel_fqe import (
    build_neighbor_graph,
    compute_propagation,
    kernel_fqe_from_config,
    propagation_rows,
    run_kernel_fqe,
)

from gen import random_is_dataset


def _graph(dataset, radius=0.5, weights=None):
    metric = StateActionMetric(weights=weights)
    return build_neighbor_graph(dataset, metric, ConstantPolicy(0), radius)


def _naive_matrices(dataset, metric, policy, radius):
    """Quadratic-loop reference for M and M_next."""
    n = len(dataset)
    M = np.zeros((n, n))
    Mn = np.zeros((n, n))
    ts = list(dataset)
    pol = policy.actions_for(dataset.next_states)
    for i, ti in enumerate(ts):
        hits = [
            j
            for j, tj in enumerate(ts)
            if metric.distance(ti.state, ti.action, tj.state, tj.action) < radius
        ]
        M[i, hits] = 1.0 / len(hits)
        if ti.is_terminal:
            continue
        nxt = [
            j
            for j, tj in enumerate(ts)
            if metric.distance(ti.next_state, pol[i], tj.state, tj.action) < radius
        ]
        if nxt:
            Mn[i, nxt] = 1.0 / len(nxt)
    return M, Mn


class TestNeighborGraph:
    def test_matches_naive_loops(self, rng):
        ds = random_is_dataset(3, n_traj=12, horizon=6)
        metric = StateActionMetric()
        pol = ConstantPolicy(0)
        graph = build_neighbor_graph(ds, metric, pol, 0.8)
        M_ref, Mn_ref = _naive_matrices(ds, metric, pol, 0.8)
        np.testing.assert_allclose(graph.M.toarray(), M_ref, atol=1e-12)
        np.testing.assert_allclose(graph.M_next.toarray(), Mn_ref, atol=1e-12)

    def test_self_always_included(self, chain3):
        ds, _, _ = chain3
        graph = _graph(ds)
        assert (graph.counts >= 1).all()
        diag = graph.M.toarray().diagonal()
        assert (diag > 0).all()

    def test_duplicate_states_share_weight(self):
        ts = [
            Transition("a", "a", 0, (0.0,), 0, 1.0, (1.0,), is_initial=True, is_terminal=True),
            Transition("b", "b", 0, (0.0,), 0, 2.0, (1.0,), is_initial=True, is_terminal=True),
        ]
        graph = _graph(Dataset(ts), radius=0.5)
        np.testing.assert_allclose(graph.M.toarray(), [[0.5, 0.5], [0.5, 0.5]])

    def test_terminal_rows_zero_by_flag(self, chain3):
        ds, _, _ = chain3
        graph = _graph(ds)
        pos = ds.position("t3")
        assert graph.counts_next[pos] == 0
        assert graph.M_next.toarray()[pos].sum() == 0.0

    def test_cross_action_never_neighbors(self):
        ts = [
            Transition("a", "a", 0, (0.0,), 0, 1.0, (1.0,), is_initial=True, is_terminal=True),
            Transition("b", "b", 0, (0.0,), 1, 2.0, (1.0,), is_initial=True, is_terminal=True),
        ]
        graph = _graph(Dataset(ts), radius=10.0)
        np.testing.assert_allclose(graph.M.toarray(), np.eye(2))

    def test_strict_radius(self):
        ts = [
            Transition("a", "a", 0, (0.0,), 0, 1.0, (1.0,), is_initial=True, is_terminal=True),
            Transition("b", "b", 0, (1.0,), 0, 2.0, (2.0,), is_initial=True, is_terminal=True),
        ]
        # distance exactly 1.0: excluded at radius 1.0, included just above
        at = _graph(Dataset(ts), radius=1.0)
        above = _graph(Dataset(ts), radius=1.0 + 1e-9)
        assert at.counts.tolist() == [1, 1]
        assert above.counts.tolist() == [2, 2]

    def test_column_counts_next_sum(self):
        ds = random_is_dataset(5, n_traj=10, horizon=5)
        graph = _graph(ds, radius=0.8)
        assert graph.column_counts_next.sum() == graph.counts_next.sum()

    def test_rejects_nonpositive_radius(self, chain3):
        ds, _, _ = chain3
        with pytest.raises(ValueError, match="radius"):
            _graph(ds, radius=0.0)


class TestPropagation:
    def test_matrix_and_vector_routes_agree(self, chain3):
        ds, config, policy = chain3
        graph = build_neighbor_graph(ds, config.metric(), policy, config.radius)
        horizon = 3
        for gamma in (0.0, 0.5, 1.0):
            prop = compute_propagation(graph, gamma, horizon)
            res = run_kernel_fqe(ds, graph, policy, gamma, horizon)
            np.testing.assert_allclose(prop.phi @ ds.rewards, res.q, atol=1e-12)
            np.testing.assert_allclose(prop.phi_next @ ds.rewards, res.q_next, atol=1e-12)

    def test_row_slice_matches_full_matrix(self):
        ds = random_is_dataset(7, n_traj=10, horizon=5)
        graph = _graph(ds, radius=0.8)
        prop = compute_propagation(graph, 0.9, 4)
        rows = np.array([0, 3, len(ds) - 1])
        block = propagation_rows(graph, 0.9, 4, rows)
        np.testing.assert_allclose(block, prop.phi.toarray()[rows], atol=1e-12)

    def test_horizon_one_is_plain_average(self, chain3):
        ds, config, policy = chain3
        graph = build_neighbor_graph(ds, config.metric(), policy, config.radius)
        prop = compute_propagation(graph, 0.9, 1)
        np.testing.assert_allclose(prop.phi.toarray(), graph.M.toarray())


class TestRunKernelFqe:
    def test_chain_hand_values(self, chain3):
        ds, config, policy = chain3
        graph = build_neighbor_graph(ds, config.metric(), policy, config.radius)
        res = run_kernel_fqe(ds, graph, policy, 1.0, 3)
        np.testing.assert_allclose(res.q, [1.0, 1.0, 1.0], atol=1e-12)
        assert res.v_hat == pytest.approx(1.0)
        assert res.initial_ids == ("t1",)

    def test_chain_discounted(self, chain3):
        ds, config, policy = chain3
        graph = build_neighbor_graph(ds, config.metric(), policy, config.radius)
        res = run_kernel_fqe(ds, graph, policy, 0.5, 3)
        np.testing.assert_allclose(res.q, [0.25, 0.5, 1.0], atol=1e-12)
        assert res.v_hat == pytest.approx(0.25)

    def test_single_transition(self):
        ts = [Transition("only", "a", 0, (0.0,), 0, 3.0, (1.0,), is_initial=True, is_terminal=True)]
        ds = Dataset(ts)
        graph = _graph(ds)
        res = run_kernel_fqe(ds, graph, ConstantPolicy(0), 0.9, 1)
        assert res.v_hat == pytest.approx(3.0)

    def test_short_horizon_warns(self, chain3):
        ds, config, policy = chain3
        graph = build_neighbor_graph(ds, config.metric(), policy, config.radius)
        with pytest.warns(UserWarning, match="truncated"):
            run_kernel_fqe(ds, graph, policy, 1.0, 2)

    def test_gamma_zero_is_immediate_reward_average(self):
        ds = random_is_dataset(9, n_traj=8, horizon=4)
        graph = _graph(ds, radius=0.8)
        res = run_kernel_fqe(ds, graph, ConstantPolicy(0), 0.0, 5)
        np.testing.assert_allclose(res.q, graph.M @ ds.rewards, atol=1e-12)

    def test_from_config_resolves_horizon(self, chain3):
        ds, config, policy = chain3
        graph, res = kernel_fqe_from_config(ds, config, policy)
        assert res.horizon == 3
        assert res.v_hat == pytest.approx(1.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), gamma=st.sampled_from([0.0, 0.5, 0.9, 1.0]))
    def test_values_bounded_by_reward_range(self, seed, gamma):
        # every backup is a convex average, so q stays inside the geometric
        # envelope of rewards
        ds = random_is_dataset(seed, n_traj=8, horizon=5)
        graph = _graph(ds, radius=0.8)
        res = run_kernel_fqe(ds, graph, ConstantPolicy(0), gamma, 6)
        r = ds.rewards
        scale = 6 if gamma == 1.0 else 1.0 / (1.0 - gamma)
        bound = max(abs(r.min()), abs(r.max())) * scale + 1e-9
        assert np.all(np.abs(res.q) <= bound)
