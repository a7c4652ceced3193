"""Importance sampling estimators and exact per-trajectory removal."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ope_influence.data import (
    AnalysisConfig,
    ConstantPolicy,
    Dataset,
    EvaluationError,
    InfluenceUndefinedError,
    Transition,
)
from ope_influence.importance_sampling import (
    IS_METHODS,
    FunctionBaselines,
    MissingBehaviorProbError,
    UndefinedAfterRemovalError,
    ZeroBaselines,
    compute_weights,
    estimate,
    is_influence_report,
    trajectory_influence,
)
from ope_influence.oracle import brute_force_influence

from gen import random_is_dataset


def _baselines():
    return FunctionBaselines(
        q_fn=lambda s, a: float(np.sum(s)) * 0.1 + a,
        v_fn=lambda s: float(np.sum(s)) * 0.1,
        name="affine",
    )


def _config(method, gamma=0.9):
    return AnalysisConfig(estimator=method, gamma=gamma, radius=1.0)


class TestWeights:
    def test_hand_computed_two_step(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 0, 1.0, (1.0,), behavior_prob=0.5, is_initial=True),
            Transition("a1", "a", 1, (1.0,), 0, 2.0, (2.0,), behavior_prob=0.25, is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 0.5)
        np.testing.assert_allclose(w.step_weights, [[2.0, 8.0]])
        assert w.returns[0] == pytest.approx(1.0 + 0.5 * 2.0)
        assert w.full_weights[0] == pytest.approx(8.0)
        assert w.is_terms[0] == pytest.approx(8.0 * 2.0)
        assert w.pdis_terms[0] == pytest.approx(2.0 * 1.0 + 0.5 * 8.0 * 2.0)

    def test_off_policy_action_zeroes_weight(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 1, 1.0, (1.0,), behavior_prob=0.5, is_initial=True),
            Transition("a1", "a", 1, (1.0,), 0, 2.0, (2.0,), behavior_prob=0.5, is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        np.testing.assert_allclose(w.step_weights, [[0.0, 0.0]])

    def test_padding_freezes_weight_after_end(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 0, 1.0, (1.0,), behavior_prob=0.5,
                       is_initial=True, is_terminal=True),
            Transition("b0", "b", 0, (0.0,), 0, 1.0, (1.0,), behavior_prob=0.5, is_initial=True),
            Transition("b1", "b", 1, (1.0,), 0, 1.0, (2.0,), behavior_prob=0.5,
                       is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        row_a = w.index("a")
        assert w.step_weights[row_a, 1] == w.step_weights[row_a, 0] == 2.0
        assert w.step_rewards[row_a, 1] == 0.0

    def test_missing_behavior_prob_names_transition(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 0, 1.0, (1.0,), is_initial=True, is_terminal=True),
        ]
        with pytest.raises(MissingBehaviorProbError, match="a0"):
            compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)


class TestEstimates:
    def test_on_policy_is_equals_mean_return(self):
        # behavior_prob 1 everywhere and matching actions: every estimator
        # reduces to the empirical mean return
        ts = []
        for k, rew in enumerate((1.0, 3.0)):
            ts.append(Transition(f"t{k}", f"t{k}", 0, (float(k),), 0, rew, (float(k) + 1,),
                                 behavior_prob=1.0, is_initial=True, is_terminal=True))
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        for method in ("is", "wis", "pdis"):
            assert estimate(method, w) == pytest.approx(2.0)
        assert estimate("dr", w, ZeroBaselines()) == pytest.approx(2.0)
        assert estimate("wdr", w, ZeroBaselines()) == pytest.approx(2.0)

    def test_dr_with_zero_baselines_is_pdis(self):
        ds = random_is_dataset(0)
        w = compute_weights(ds, ConstantPolicy(0), 0.9)
        assert estimate("dr", w, ZeroBaselines()) == pytest.approx(estimate("pdis", w))

    def test_wis_undefined_when_all_weights_vanish(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 1, 1.0, (1.0,), behavior_prob=0.5,
                       is_initial=True, is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        with pytest.raises(EvaluationError, match="zero"):
            estimate("wis", w)

    def test_dr_requires_baselines(self):
        ds = random_is_dataset(1)
        w = compute_weights(ds, ConstantPolicy(0), 0.9)
        with pytest.raises(ValueError, match="baseline"):
            estimate("dr", w)


class TestInfluence:
    @pytest.mark.parametrize("method", IS_METHODS)
    def test_matches_oracle_refit(self, method):
        ds = random_is_dataset(11, n_traj=12, horizon=5)
        baselines = _baselines() if method in ("dr", "wdr") else None
        config = _config(method)
        w = compute_weights(ds, ConstantPolicy(0), config.gamma)
        for tid in w.trajectory_ids:
            try:
                closed = trajectory_influence(method, w, tid, baselines)
            except InfluenceUndefinedError:
                oracle = brute_force_influence(ds, config, ConstantPolicy(0), tid,
                                               baselines=baselines)
                assert oracle.status == "undefined_after_removal"
                continue
            oracle = brute_force_influence(ds, config, ConstantPolicy(0), tid,
                                           baselines=baselines)
            assert oracle.influence == pytest.approx(closed, abs=1e-10)

    def test_wis_undefined_when_sole_weight_carrier_removed(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 0, 5.0, (1.0,), behavior_prob=1.0,
                       is_initial=True, is_terminal=True),
            Transition("b0", "b", 0, (0.5,), 1, 2.0, (1.5,), behavior_prob=0.5,
                       is_initial=True, is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        with pytest.raises(UndefinedAfterRemovalError):
            trajectory_influence("wis", w, "a")
        # removing the zero-weight trajectory is fine
        assert trajectory_influence("wis", w, "b") == pytest.approx(0.0)

    def test_single_trajectory_undefined(self):
        ts = [
            Transition("a0", "a", 0, (0.0,), 0, 5.0, (1.0,), behavior_prob=1.0,
                       is_initial=True, is_terminal=True),
        ]
        w = compute_weights(Dataset(ts), ConstantPolicy(0), 1.0)
        with pytest.raises(InfluenceUndefinedError):
            trajectory_influence("is", w, "a")

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000),
           method=st.sampled_from(["is", "wis", "pdis"]),
           gamma=st.sampled_from([0.5, 0.9, 1.0]))
    def test_matches_oracle_property(self, seed, method, gamma):
        ds = random_is_dataset(seed, n_traj=8, horizon=4)
        config = _config(method, gamma)
        w = compute_weights(ds, ConstantPolicy(0), gamma)
        tid = w.trajectory_ids[seed % len(w.trajectory_ids)]
        oracle = brute_force_influence(ds, config, ConstantPolicy(0), tid)
        try:
            closed = trajectory_influence(method, w, tid)
        except InfluenceUndefinedError:
            assert oracle.status == "undefined_after_removal"
            return
        assert oracle.influence == pytest.approx(closed, abs=1e-10)


class TestReport:
    def test_trajectory_unit_kind(self):
        ds = random_is_dataset(21, n_traj=10, horizon=4)
        report = is_influence_report(ds, _config("is"), ConstantPolicy(0))
        assert report.unit_kind == "trajectory"
        assert set(report.unit_ids) == set(ds.trajectory_ids)
        assert report.dead_ends == [] and report.skipped_by_cutoff == set()

    def test_flags_exceed_threshold(self):
        ds = random_is_dataset(22, n_traj=10, horizon=4)
        config = _config("wis")
        report = is_influence_report(ds, config, ConstantPolicy(0))
        for tid in report.flags:
            assert abs(report.normalized_influence[tid]) >= config.influence_threshold
