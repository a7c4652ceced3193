"""Closed-form leave-one-out influence for the kernel FQE estimator.

Removing one logged transition j perturbs the estimate through two
channels: directly, wherever j sat inside a neighborhood average, and
indirectly, wherever the continuation estimate at some next state leaned
on j, with that perturbation propagated back to the evaluation set through
the discounted propagation operator. Both channels are first-order exact:
on disjoint neighborhoods they reproduce a full refit, and on overlapping
ones they approximate it (the validation mode quantifies the gap).
"""

from __future__ import annotations

import numpy as np

from .data import AnalysisConfig, Dataset, InfluenceUndefinedError
from .kernel_fqe import FQEResult, NeighborGraph, propagation_rows
from .report import InfluenceReport, normalize_influence, order_flags


class _Engine:
    """Precomputed pieces shared by every per-unit influence query.

    targets[j] is r_j + gamma * q_next[j], the contribution j makes to any
    neighborhood average it belongs to. For each transition k whose
    next-state neighborhood contains j, removing j shifts that
    neighborhood's estimate by delta = (q_next[k] - targets[j]) / (N'_k - 1)
    when j shared the neighborhood with others, and by -q_next[k] when j
    was the sole neighbor (the estimate there drops to zero). The shift
    reaches an evaluation transition i scaled by gamma * Phi[i, k].
    """

    def __init__(self, dataset: Dataset, graph: NeighborGraph, fqe: FQEResult):
        self.dataset = dataset
        self.graph = graph
        self.fqe = fqe
        self.init_pos = np.array([dataset.position(i) for i in fqe.initial_ids])
        self.row_of = {int(p): r for r, p in enumerate(self.init_pos)}
        self.targets = dataset.rewards + fqe.gamma * fqe.q_next
        self.phi_rows = propagation_rows(graph, fqe.gamma, fqe.horizon, self.init_pos)
        self.phi_colsum = self.phi_rows.sum(axis=0)
        self._mn_csc = graph.M_next.tocsc()
        self._m_csc = graph.M.tocsc()
        counts_next = graph.counts_next
        sole = counts_next == 1
        shared = counts_next > 1
        # Per-row pieces of delta: delta_kj = med_a[k] - med_b[k] * targets[j].
        self.med_a = np.zeros(len(dataset))
        self.med_b = np.zeros(len(dataset))
        self.med_a[shared] = fqe.q_next[shared] / (counts_next[shared] - 1)
        self.med_b[shared] = 1.0 / (counts_next[shared] - 1)
        self.med_a[sole] = -fqe.q_next[sole]

    def next_column(self, j_pos: int) -> np.ndarray:
        s, e = self._mn_csc.indptr[j_pos], self._mn_csc.indptr[j_pos + 1]
        return self._mn_csc.indices[s:e]

    def m_column(self, j_pos: int) -> np.ndarray:
        s, e = self._m_csc.indptr[j_pos], self._m_csc.indptr[j_pos + 1]
        return self._m_csc.indices[s:e]

    def direct_term(self, i_pos: int, j_pos: int) -> float:
        """Leave-one-out shift of the neighborhood average at row i."""
        counts = self.graph.counts
        if i_pos == j_pos:
            if counts[j_pos] < 2:
                raise InfluenceUndefinedError(
                    "unit is the sole member of its own neighborhood; its estimate "
                    "is undefined after removal"
                )
            return float(
                (self.fqe.q[j_pos] - self.targets[j_pos]) / (counts[j_pos] - 1)
            )
        if self.graph.M[i_pos, j_pos] == 0:
            return 0.0
        assert counts[i_pos] >= 2, "a neighborhood with an off-diagonal member has size >= 2"
        return float((self.fqe.q[i_pos] - self.targets[j_pos]) / (counts[i_pos] - 1))

    def mediated_row(self, phi_row: np.ndarray, j_pos: int) -> float:
        """Sum of propagated continuation shifts reaching one Phi row."""
        K = self.next_column(j_pos)
        if len(K) == 0:
            return 0.0
        delta = self.med_a[K] - self.med_b[K] * self.targets[j_pos]
        return float(self.fqe.gamma * (phi_row[K] @ delta))


def individual_influence(
    dataset: Dataset,
    graph: NeighborGraph,
    fqe: FQEResult,
    i_id: str,
    j_id: str,
    engine: _Engine | None = None,
) -> float:
    """Estimated change of q[i] caused by removing transition j.

    For i == j this is the leave-one-out shift of the unit's own
    neighborhood estimate, which only the fixed-pool removal convention
    uses; it is undefined when the unit has no other neighbors.
    """
    eng = engine or _Engine(dataset, graph, fqe)
    i_pos = dataset.position(i_id)
    j_pos = dataset.position(j_id)
    row = eng.row_of.get(i_pos)
    if row is not None:
        phi_row = eng.phi_rows[row]
    else:
        phi_row = propagation_rows(graph, fqe.gamma, fqe.horizon, np.array([i_pos]))[0]
    return eng.direct_term(i_pos, j_pos) + eng.mediated_row(phi_row, j_pos)


def _total_from_engine(eng: _Engine, j_pos: int, shrink: bool) -> float:
    m = len(eng.init_pos)
    direct_sum = 0.0
    counts = eng.graph.counts
    for i_pos in eng.m_column(j_pos):
        if i_pos == j_pos or eng.row_of.get(int(i_pos)) is None:
            continue
        direct_sum += (eng.fqe.q[i_pos] - eng.targets[j_pos]) / (counts[i_pos] - 1)
    mediated_all = eng.mediated_row(eng.phi_colsum, j_pos)
    own_row = eng.row_of.get(int(j_pos))
    if own_row is None:
        return (direct_sum + mediated_all) / m
    if shrink:
        if m == 1:
            raise InfluenceUndefinedError(
                "initial evaluation pool is empty after removing this unit"
            )
        mediated = mediated_all - eng.mediated_row(eng.phi_rows[own_row], j_pos)
        correction = (eng.fqe.v_hat - eng.fqe.q[j_pos]) / (m - 1)
        return (direct_sum + mediated) / (m - 1) + correction
    self_direct = eng.direct_term(j_pos, j_pos)
    return (direct_sum + self_direct + mediated_all) / m


def total_influence(
    dataset: Dataset,
    graph: NeighborGraph,
    fqe: FQEResult,
    j_id: str,
    shrink_initial_set: bool = True,
    engine: _Engine | None = None,
) -> float:
    """Estimated change of v_hat caused by removing transition j.

    Units inside the evaluation pool follow the configured removal
    convention; see AnalysisConfig.shrink_initial_set. Raises
    InfluenceUndefinedError when removal leaves the estimate undefined.
    """
    eng = engine or _Engine(dataset, graph, fqe)
    return _total_from_engine(eng, dataset.position(j_id), shrink_initial_set)


def cutoff_threshold(config: AnalysisConfig, v_hat: float) -> float | None:
    """Column-count bound above which a unit cannot be flagged.

    A unit inside a next-state neighborhood of size N* shifts that
    neighborhood's estimate by at most v_max / (N* - 1)-ish, so popular
    units are provably uninteresting once N* >= v_max / (|v_hat| * threshold).
    Requires v_max; inactive when the estimate is zero.
    """
    if config.v_max is None or v_hat == 0.0:
        return None
    return config.v_max / (abs(v_hat) * config.influence_threshold)


def kernel_influence_report(
    dataset: Dataset,
    config: AnalysisConfig,
    graph: NeighborGraph,
    fqe: FQEResult,
) -> InfluenceReport:
    """Total influence for every transition, with cutoff, flags, and
    dead-end detection."""
    eng = _Engine(dataset, graph, fqe)
    cutoff = cutoff_threshold(config, fqe.v_hat)
    totals: dict[str, float] = {}
    skipped: set[str] = set()
    undefined: set[str] = set()
    for j_pos, unit in enumerate(dataset.ids):
        if cutoff is not None and graph.column_counts_next[j_pos] >= cutoff:
            skipped.add(unit)
            continue
        try:
            totals[unit] = _total_from_engine(eng, j_pos, config.shrink_initial_set)
        except InfluenceUndefinedError:
            undefined.add(unit)

    normalized, notes = normalize_influence(
        totals, fqe.v_hat, config.influence_threshold, config.v_max
    )

    def tiebreak(unit: str):
        t = dataset.get(unit)
        return (t.trajectory_id, t.step_index)

    flags = order_flags(normalized, config.influence_threshold, tiebreak)
    dead_ends = [
        unit
        for unit in flags
        if graph.counts_next[dataset.position(unit)] == 0
        and not dataset.get(unit).is_terminal
    ]
    if cutoff is not None:
        notes["cutoff_column_count"] = cutoff
    return InfluenceReport(
        unit_kind="transition",
        unit_ids=dataset.ids,
        v_hat=fqe.v_hat,
        total_influence=totals,
        normalized_influence=normalized,
        flags=flags,
        dead_ends=dead_ends,
        skipped_by_cutoff=skipped,
        undefined=undefined,
        threshold=config.influence_threshold,
        estimator="kernel-fqe",
        notes=notes,
    )
