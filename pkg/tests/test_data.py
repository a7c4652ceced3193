"""Dataset container, record IO, policies, metric, and config."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ope_influence.data import (
    AnalysisConfig,
    ConstantPolicy,
    Dataset,
    DatasetError,
    EvaluationError,
    FunctionPolicy,
    NearestNeighborPolicy,
    StateActionMetric,
    TablePolicy,
    Transition,
    initial_eval_set,
    load_dataset,
    save_dataset,
)


def _chain(tid, length, start=0.0, initial=True, terminal=True):
    out = []
    for t in range(length):
        out.append(
            Transition(f"{tid}s{t}", tid, t, (start + t,), 0, 1.0, (start + t + 1,),
                       behavior_prob=0.9, is_initial=(t == 0 and initial),
                       is_terminal=(t == length - 1 and terminal))
        )
    return out


class TestTransition:
    def test_coerces_and_freezes_state(self):
        t = Transition("a", "tr", 0, [1, 2], 1, 3, [4, 5])
        assert t.state.dtype == np.float64
        assert t.reward == 3.0 and isinstance(t.reward, float)
        with pytest.raises(ValueError):
            t.state[0] = 9.0

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DatasetError, match="dimensions differ"):
            Transition("a", "tr", 0, (1.0,), 0, 0.0, (1.0, 2.0))

    def test_rejects_non_finite(self):
        with pytest.raises(DatasetError, match="non-finite"):
            Transition("a", "tr", 0, (np.nan,), 0, 0.0, (1.0,))
        with pytest.raises(DatasetError, match="non-finite"):
            Transition("a", "tr", 0, (0.0,), 0, np.inf, (1.0,))

    def test_rejects_bad_behavior_prob(self):
        with pytest.raises(DatasetError, match="behavior_prob"):
            Transition("a", "tr", 0, (0.0,), 0, 0.0, (1.0,), behavior_prob=0.0)
        with pytest.raises(DatasetError, match="behavior_prob"):
            Transition("a", "tr", 0, (0.0,), 0, 0.0, (1.0,), behavior_prob=1.5)

    def test_record_round_trip(self):
        t = Transition("a", "tr", 0, (1.0, 2.0), 1, 0.5, (3.0, 4.0),
                       behavior_prob=0.7, is_initial=True)
        back = Transition.from_record(t.to_record())
        assert back.id == t.id
        assert np.array_equal(back.state, t.state)
        assert back.behavior_prob == t.behavior_prob

    def test_record_omits_missing_behavior_prob(self):
        t = Transition("a", "tr", 0, (1.0,), 0, 0.0, (2.0,))
        assert "behavior_prob" not in t.to_record()

    def test_from_record_rejects_unknown_fields(self):
        rec = Transition("a", "tr", 0, (1.0,), 0, 0.0, (2.0,)).to_record()
        rec["extra"] = 1
        with pytest.raises(DatasetError, match="extra"):
            Transition.from_record(rec)

    def test_from_record_rejects_missing_fields(self):
        rec = Transition("a", "tr", 0, (1.0,), 0, 0.0, (2.0,)).to_record()
        del rec["reward"]
        with pytest.raises(DatasetError, match="reward"):
            Transition.from_record(rec)


class TestDataset:
    def test_rejects_empty(self):
        with pytest.raises(DatasetError):
            Dataset([])

    def test_rejects_duplicate_ids(self):
        t = _chain("a", 2)
        dup = Transition("as0", "b", 0, (9.0,), 0, 0.0, (9.5,))
        with pytest.raises(DatasetError, match="duplicate"):
            Dataset([*t, dup])

    def test_rejects_step_gaps(self):
        bad = [
            Transition("x0", "x", 0, (0.0,), 0, 0.0, (1.0,)),
            Transition("x2", "x", 2, (2.0,), 0, 0.0, (3.0,)),
        ]
        with pytest.raises(DatasetError, match="consecutive"):
            Dataset(bad)

    def test_rejects_initial_flag_off_step_zero(self):
        bad = [
            Transition("x0", "x", 0, (0.0,), 0, 0.0, (1.0,)),
            Transition("x1", "x", 1, (1.0,), 0, 0.0, (2.0,), is_initial=True),
        ]
        with pytest.raises(DatasetError, match="is_initial"):
            Dataset(bad)

    def test_trajectory_index_ordered_by_step(self):
        ts = _chain("a", 3)
        ds = Dataset([ts[2], ts[0], ts[1]])
        assert list(ds.trajectory_index["a"]) == ["as0", "as1", "as2"]

    def test_arrays_cached_and_read_only(self):
        ds = Dataset(_chain("a", 3))
        states = ds.states
        assert states is ds.states
        with pytest.raises(ValueError):
            states[0, 0] = 5.0

    def test_fingerprint_ignores_input_order(self):
        ts = _chain("a", 3) + _chain("b", 2, start=10.0)
        assert Dataset(ts).fingerprint() == Dataset(list(reversed(ts))).fingerprint()

    def test_fingerprint_sees_reward_change(self):
        ts = _chain("a", 3)
        changed = list(ts)
        changed[1] = Transition("a0s1", "a", 1, (1.0,), 0, 99.0, (2.0,), behavior_prob=0.9)
        assert Dataset(ts).fingerprint() != Dataset(changed).fingerprint()

    def test_remove_middle_transition_splits_trajectory(self):
        ds = Dataset(_chain("a", 4))
        out = ds.remove_transition("as1")
        assert "as1" not in out
        tail = [out.get(f"as{t}") for t in (2, 3)]
        assert {t.trajectory_id for t in tail} == {"a#1"}
        assert [t.step_index for t in tail] == [0, 1]
        assert not any(t.is_initial for t in tail)
        assert out.get("as0").trajectory_id == "a"

    def test_remove_trajectory(self):
        ds = Dataset(_chain("a", 2) + _chain("b", 2, start=10.0))
        out = ds.remove_trajectory("a")
        assert out.trajectory_ids == ("b",)

    def test_replace_transitions_checks_ids(self):
        ds = Dataset(_chain("a", 2))
        with pytest.raises(KeyError):
            ds.replace_transitions({"nope": ds.get("a0s0")})

    def test_jsonl_round_trip(self, tmp_path):
        ds = Dataset(_chain("a", 3) + _chain("b", 2, start=5.0))
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.fingerprint() == ds.fingerprint()

    def test_load_reports_offending_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = Dataset(_chain("a", 2)).to_jsonl().splitlines()
        path.write_text(good[0] + "\n{not json}\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path)


class TestPolicies:
    def test_constant(self):
        assert ConstantPolicy(2).action_for(np.array([1.0])) == 2

    def test_table_lookup_and_miss(self):
        p = TablePolicy({(0.0, 1.0): 3})
        assert p.action_for(np.array([0.0, 1.0])) == 3
        with pytest.raises(EvaluationError, match="no entry"):
            p.action_for(np.array([9.0, 9.0]))

    def test_nearest_neighbor_majority_and_tie(self):
        states = np.array([[0.0], [0.1], [5.0], [5.1]])
        actions = np.array([1, 1, 0, 2])
        p = NearestNeighborPolicy(states, actions, k=2)
        assert p.action_for(np.array([0.05])) == 1
        # one vote each: tie resolves to the smallest action
        assert p.action_for(np.array([5.05])) == 0

    def test_function_policy(self):
        p = FunctionPolicy(lambda s: int(s[0] > 0), name="signy")
        assert p.action_for(np.array([2.0])) == 1
        assert p.name == "signy"

    def test_initial_eval_set_matches_actions(self):
        ts = [
            Transition("m", "m", 0, (0.0,), 0, 0.0, (1.0,), is_initial=True),
            Transition("n", "n", 0, (0.0,), 1, 0.0, (1.0,), is_initial=True),
            Transition("o", "o", 0, (0.0,), 0, 0.0, (1.0,)),
        ]
        assert initial_eval_set(Dataset(ts), ConstantPolicy(0)) == {"m"}


class TestMetric:
    def test_weighted_distance(self):
        m = StateActionMetric(weights=(2.0, 1.0))
        assert m.distance((0.0, 0.0), 0, (1.0, 1.0), 0) == pytest.approx(np.sqrt(5.0))

    def test_cross_action_is_infinite(self):
        m = StateActionMetric(weights=(1.0,))
        assert m.distance((0.0,), 0, (0.0,), 1) == np.inf

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=2),
           st.lists(st.floats(-10, 10), min_size=2, max_size=2))
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, a, b):
        m = StateActionMetric(weights=(1.0, 3.0))
        assert m.distance(a, 0, b, 0) == pytest.approx(m.distance(b, 0, a, 0))


class TestAnalysisConfig:
    def test_rejects_unknown_estimator(self):
        with pytest.raises(ValueError, match="estimator"):
            AnalysisConfig(estimator="bogus")

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError, match="gamma"):
            AnalysisConfig(estimator="kernel-fqe", gamma=1.5)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError, match="radius"):
            AnalysisConfig(estimator="kernel-fqe", radius=0.0)

    def test_unit_kind_by_family(self):
        assert AnalysisConfig(estimator="kernel-fqe", radius=1.0).unit_kind == "transition"
        assert AnalysisConfig(estimator="wis").unit_kind == "trajectory"

    def test_resolve_horizon_defaults_to_longest(self):
        ds = Dataset(_chain("a", 3) + _chain("b", 5, start=10.0))
        cfg = AnalysisConfig(estimator="kernel-fqe", radius=1.0)
        assert cfg.resolve_horizon(ds) == 5
        assert AnalysisConfig(estimator="kernel-fqe", radius=1.0, horizon=2).resolve_horizon(ds) == 2

    def test_dict_round_trip(self):
        cfg = AnalysisConfig(estimator="kernel-fqe", gamma=0.9, radius=0.3,
                             v_max=10.0, metric_weights=(1.0, 2.0))
        assert AnalysisConfig.from_dict(cfg.to_dict()) == cfg
