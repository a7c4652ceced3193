"""Turn an influence report into a categorical diagnosis.

Reliable means nothing was flagged. Unevaluatable means at least one
flagged transition is a dead end: its next state has no data to continue
from and is not terminal, so no amount of expert review of the logged
values can repair the estimate. Everything else needs expert review.
Consecutive flagged transitions within a trajectory usually share one
cause, so presentation collapses each run to its latest step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .data import Dataset
from .report import InfluenceReport

CONTEXT_SPAN = 2


class Outcome(str, enum.Enum):
    RELIABLE = "reliable"
    NEEDS_EXPERT_REVIEW = "needs_expert_review"
    UNEVALUATABLE = "unevaluatable"


@dataclass
class Diagnosis:
    outcome: Outcome
    flagged: list[str]
    dead_ends: list[str]
    # [(presented unit, [units it covers])], most influential group first.
    presentation: list[tuple[str, list[str]]]
    # presented unit -> ids of surrounding steps shown for context.
    context: dict[str, list[str]]
    v_hat: float
    threshold: float
    unit_kind: str
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "v_hat": self.v_hat,
            "threshold": self.threshold,
            "unit_kind": self.unit_kind,
            "flagged": list(self.flagged),
            "dead_ends": list(self.dead_ends),
            "presentation": [
                {
                    "unit": unit,
                    "covers": list(covers),
                    "context": list(self.context.get(unit, [])),
                }
                for unit, covers in self.presentation
            ],
            "notes": dict(sorted(self.notes.items())),
        }


def collapse_sequences(
    flagged: list[str], dataset: Dataset
) -> list[tuple[str, list[str]]]:
    """Group flagged transitions into maximal runs of consecutive steps.

    Each run is presented through its highest-step member; the earlier
    steps ride along as covered units. Groups keep the rank order of the
    incoming flag list (a group ranks by its best-ranked member).
    """
    rank = {unit: k for k, unit in enumerate(flagged)}
    by_traj: dict[str, list[str]] = {}
    for unit in flagged:
        by_traj.setdefault(dataset.get(unit).trajectory_id, []).append(unit)
    groups = []
    for tid, units in by_traj.items():
        units.sort(key=lambda u: dataset.get(u).step_index)
        run: list[str] = []
        prev_step = None
        for unit in units:
            step = dataset.get(unit).step_index
            if prev_step is not None and step != prev_step + 1:
                groups.append(run)
                run = []
            run.append(unit)
            prev_step = step
        if run:
            groups.append(run)
    groups.sort(key=lambda run: min(rank[u] for u in run))
    return [(run[-1], run[:-1]) for run in groups]


def context_window(dataset: Dataset, unit_id: str, span: int = CONTEXT_SPAN) -> list[str]:
    """Ids of the transitions within span steps of the unit, in step order."""
    t = dataset.get(unit_id)
    siblings = dataset.trajectory_index[t.trajectory_id]
    lo = max(0, t.step_index - span)
    hi = min(len(siblings), t.step_index + span + 1)
    return list(siblings[lo:hi])


def diagnose(report: InfluenceReport, dataset: Dataset) -> Diagnosis:
    """Outcome, presentation grouping, and context windows for a report.

    Also writes the presentation back onto the report so serialized
    reports carry it.
    """
    flagged = list(report.flags)
    dead_ends = list(report.dead_ends)
    if not flagged:
        outcome = Outcome.RELIABLE
    elif dead_ends:
        outcome = Outcome.UNEVALUATABLE
    else:
        outcome = Outcome.NEEDS_EXPERT_REVIEW

    if report.unit_kind == "transition":
        presentation = collapse_sequences(flagged, dataset)
        context = {unit: context_window(dataset, unit) for unit, _ in presentation}
    else:
        presentation = [(unit, []) for unit in flagged]
        context = {
            unit: list(dataset.trajectory_index.get(unit, [])) for unit, _ in presentation
        }
    report.presentation = presentation
    return Diagnosis(
        outcome=outcome,
        flagged=flagged,
        dead_ends=dead_ends,
        presentation=presentation,
        context=context,
        v_hat=report.v_hat,
        threshold=report.threshold,
        unit_kind=report.unit_kind,
        notes=dict(report.notes),
    )
