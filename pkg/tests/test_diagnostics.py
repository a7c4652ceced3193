"""Outcome classification, flag grouping, and context windows."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ope_influence.data import Dataset, Transition
from ope_influence.diagnostics import (
    CONTEXT_SPAN,
    Outcome,
    collapse_sequences,
    context_window,
    diagnose,
)
from ope_influence.pipeline import analyze


def _chain(tid, length):
    ts = []
    for t in range(length):
        ts.append(
            Transition(
                f"{tid}s{t}", tid, t, (float(t),), 0, 0.0, (float(t) + 1,),
                behavior_prob=1.0, is_initial=t == 0, is_terminal=t == length - 1,
            )
        )
    return ts


class TestCollapse:
    def test_consecutive_run_presents_latest_step(self):
        ds = Dataset(_chain("a", 6))
        groups = collapse_sequences(["as2", "as1", "as3"], ds)
        assert groups == [("as3", ["as1", "as2"])]

    def test_gap_splits_runs(self):
        ds = Dataset(_chain("a", 6))
        groups = collapse_sequences(["as1", "as4", "as5"], ds)
        assert ("as1", []) in groups
        assert ("as5", ["as4"]) in groups

    def test_groups_keep_flag_rank_order(self):
        # as4 outranks as0 in the flag list, so its group presents first
        ds = Dataset(_chain("a", 6))
        groups = collapse_sequences(["as4", "as0", "as5"], ds)
        assert groups == [("as5", ["as4"]), ("as0", [])]

    def test_runs_never_cross_trajectories(self):
        ds = Dataset(_chain("a", 3) + _chain("b", 3))
        groups = collapse_sequences(["as2", "bs0"], ds)
        assert len(groups) == 2

    @settings(max_examples=25, deadline=None)
    @given(data=st.data())
    def test_groups_partition_flags(self, data):
        length = data.draw(st.integers(2, 10))
        ds = Dataset(_chain("a", length))
        flagged_steps = data.draw(
            st.lists(st.integers(0, length - 1), unique=True, min_size=1)
        )
        flagged = [f"as{t}" for t in flagged_steps]
        groups = collapse_sequences(flagged, ds)
        seen = [u for head, covers in groups for u in covers + [head]]
        assert sorted(seen) == sorted(flagged)
        for head, covers in groups:
            steps = sorted(ds.get(u).step_index for u in covers + [head])
            assert steps == list(range(steps[0], steps[0] + len(steps)))
            assert ds.get(head).step_index == steps[-1]


class TestContext:
    def test_interior_window(self):
        ds = Dataset(_chain("a", 7))
        assert context_window(ds, "as3") == ["as1", "as2", "as3", "as4", "as5"]

    def test_truncated_at_start(self):
        ds = Dataset(_chain("a", 7))
        assert context_window(ds, "as0") == ["as0", "as1", "as2"]

    def test_truncated_at_end(self):
        ds = Dataset(_chain("a", 7))
        assert context_window(ds, "as6") == ["as4", "as5", "as6"]

    def test_short_trajectory_is_whole_window(self):
        ds = Dataset(_chain("a", 2))
        assert context_window(ds, "as1") == ["as0", "as1"]

    def test_default_span(self):
        ds = Dataset(_chain("a", 9))
        window = context_window(ds, "as4")
        assert len(window) == 2 * CONTEXT_SPAN + 1


class TestDiagnose:
    def test_no_flags_is_reliable(self, dense_copies):
        ds, config, policy = dense_copies
        result = analyze(ds, config, policy)
        assert result.diagnosis.outcome is Outcome.RELIABLE
        assert result.diagnosis.presentation == []

    def test_flagged_dead_end_is_unevaluatable(self, chain3_dead_end):
        ds, config, policy = chain3_dead_end
        result = analyze(ds, config, policy)
        assert result.diagnosis.outcome is Outcome.UNEVALUATABLE
        assert "t3" in result.diagnosis.dead_ends

    def test_flags_without_dead_ends_need_review(self, chain3):
        ds, config, policy = chain3
        result = analyze(ds, config, policy)
        assert result.diagnosis.outcome is Outcome.NEEDS_EXPERT_REVIEW
        assert result.diagnosis.dead_ends == []
        # t2 and t3 are consecutive, so one presented unit covers both
        assert result.diagnosis.presentation == [("t3", ["t2"])]
        assert result.diagnosis.context["t3"] == ["t1", "t2", "t3"]

    def test_presentation_written_back_to_report(self, chain3):
        ds, config, policy = chain3
        result = analyze(ds, config, policy)
        assert result.report.presentation == result.diagnosis.presentation

    def test_to_dict_shape(self, chain3):
        ds, config, policy = chain3
        d = analyze(ds, config, policy).diagnosis.to_dict()
        assert d["outcome"] == "needs_expert_review"
        assert d["unit_kind"] == "transition"
        assert d["presentation"][0]["unit"] == "t3"
        assert d["presentation"][0]["covers"] == ["t2"]
        assert d["presentation"][0]["context"] == ["t1", "t2", "t3"]

    def test_trajectory_units_present_individually(self):
        from gen import random_is_dataset
        from ope_influence.data import AnalysisConfig, ConstantPolicy

        ds = random_is_dataset(3, n_traj=8, horizon=4)
        config = AnalysisConfig(estimator="wis", gamma=0.9, radius=1.0)
        result = analyze(ds, config, ConstantPolicy(0))
        diag = result.diagnosis
        assert diag.unit_kind == "trajectory"
        for unit, covers in diag.presentation:
            assert covers == []
            assert diag.context[unit] == list(ds.trajectory_index[unit])
