"""Influence report container shared by all estimator families.

A report carries per-unit total influence, its normalized form, and the
flag set, regardless of whether units are transitions (FQE estimators) or
whole trajectories (importance sampling). Units whose removal leaves the
estimator undefined appear in ``undefined`` instead of carrying a number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import EvaluationError


@dataclass
class InfluenceReport:
    unit_kind: str
    unit_ids: tuple[str, ...]
    v_hat: float
    total_influence: dict[str, float]
    normalized_influence: dict[str, float]
    flags: list[str]
    dead_ends: list[str]
    skipped_by_cutoff: set[str]
    undefined: set[str]
    threshold: float
    estimator: str
    # Filled by diagnostics: [(presented_id, [covered ids])] in flag order.
    presentation: list[tuple[str, list[str]]] | None = None
    notes: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        """One record per unit, in the report's unit order."""
        out = []
        flagged = set(self.flags)
        dead = set(self.dead_ends)
        for unit in self.unit_ids:
            out.append(
                {
                    "id": unit,
                    "influence": self.total_influence.get(unit),
                    "normalized_influence": self.normalized_influence.get(unit),
                    "flag": unit in flagged,
                    "dead_end": unit in dead,
                    "skipped": unit in self.skipped_by_cutoff,
                    "undefined": unit in self.undefined,
                }
            )
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, separators=(", ", ": ")) + "\n" for rec in self.to_records())


def normalize_influence(
    total_influence: dict[str, float],
    v_hat: float,
    threshold: float,
    v_max: float | None,
) -> tuple[dict[str, float], dict]:
    """Normalized influence values and bookkeeping notes.

    Normally |I_j| / |v_hat|. When the estimate is exactly zero that ratio
    is undefined, so the report falls back to the absolute scale the user
    supplied: |I_j| / v_max, which flags |I_j| > threshold * v_max.
    """
    if v_hat != 0.0:
        scale = abs(v_hat)
        notes = {"normalization": "value"}
    elif v_max is not None:
        scale = float(v_max)
        notes = {"normalization": "v_max_fallback"}
    else:
        raise EvaluationError(
            "estimated value is zero, so normalized influence is undefined; "
            "supply v_max to fall back to the absolute scale"
        )
    return {j: abs(v) / scale for j, v in total_influence.items()}, notes


def order_flags(
    normalized: dict[str, float],
    threshold: float,
    tiebreak,
) -> list[str]:
    """Units over threshold, highest normalized influence first; ties break
    by the caller's (trajectory, step) key so output order is stable."""
    over = [j for j, v in normalized.items() if v > threshold]
    return sorted(over, key=lambda j: (-normalized[j], tiebreak(j)))
