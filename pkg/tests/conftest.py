"""Shared fixtures: tiny hand-checkable datasets."""

import numpy as np
import pytest

from ope_influence.data import AnalysisConfig, ConstantPolicy, Dataset, Transition


def make_chain3(gamma: float = 1.0, terminal: bool = True):
    """Three-step chain whose every neighborhood is a single transition.

    Unit spacing with radius 0.5 makes the kernel backup tabular, so all
    values below are hand-derived: rewards (0, 0, 1) give q = (1, 1, 1)
    at gamma 1 and v = 1 over the single initial transition. Removing t2
    or t3 silences the sole continuation, dropping v to 0 (influence -1
    for both); removing t1 empties the initial pool (undefined).
    """
    transitions = [
        Transition("t1", "c", 0, (0.0,), 0, 0.0, (1.0,), behavior_prob=1.0, is_initial=True),
        Transition("t2", "c", 1, (1.0,), 0, 0.0, (2.0,), behavior_prob=1.0),
        Transition("t3", "c", 2, (2.0,), 0, 1.0, (3.0,), behavior_prob=1.0, is_terminal=terminal),
    ]
    config = AnalysisConfig(estimator="kernel-fqe", gamma=gamma, radius=0.5)
    return Dataset(transitions), config, ConstantPolicy(0)


def make_dense_copies(copies: int = 50):
    """Many identical two-step trajectories: every removal is negligible."""
    transitions = []
    for n in range(copies):
        tid = f"d{n}"
        transitions.append(
            Transition(f"{tid}s0", tid, 0, (0.0,), 0, 1.0, (1.0,), behavior_prob=1.0, is_initial=True)
        )
        transitions.append(
            Transition(f"{tid}s1", tid, 1, (1.0,), 0, 1.0, (2.0,), behavior_prob=1.0, is_terminal=True)
        )
    config = AnalysisConfig(estimator="kernel-fqe", gamma=1.0, radius=0.5)
    return Dataset(transitions), config, ConstantPolicy(0)


@pytest.fixture
def chain3():
    return make_chain3()


@pytest.fixture
def chain3_dead_end():
    return make_chain3(terminal=False)


@pytest.fixture
def dense_copies():
    return make_dense_copies()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
