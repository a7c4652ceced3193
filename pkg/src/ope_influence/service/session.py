"""Versioned expert-review session.

A session holds an append-only list of dataset versions. Version 0 is the
dataset the session was opened on; every accepted edit verdict (removal
or correction) produces version k+1 together with a fresh analysis, and
the edit is written to an audit log that can be replayed from version 0
to reconstruct any later dataset. Representative verdicts record the
expert's sign-off without creating a version.

Edits are validated, applied, and re-analyzed before the new version is
committed, so every stored version has a working analysis; an edit whose
re-analysis fails is rejected wholesale. Writes are serialized by a lock
(recompute is the critical section); reads take it only to snapshot.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from ..data import (
    AnalysisConfig,
    Dataset,
    DatasetError,
    EvaluationError,
    EvaluationPolicy,
    Transition,
)
from ..diagnostics import context_window
from ..oracle import remove_unit
from ..pipeline import (
    Analysis,
    analyze,
    diagnosis_json as render_diagnosis_json,
    report_jsonl as render_report_jsonl,
)
from .schemas import VECTOR_FIELDS, FieldPatch, VerdictIn


class UnknownVersionError(Exception):
    """The requested version does not exist."""


class UnknownUnitError(Exception):
    """The requested transition id is not in the dataset."""


class StaleVersionError(Exception):
    """An edit targeted a version that is no longer the latest."""


class VerdictError(Exception):
    """The verdict violates a precondition; no new version was created."""


@dataclass(frozen=True)
class VerdictRecord:
    unit_id: str
    decision: str
    correction: tuple[dict, ...] | None
    note: str
    created_version: int | None

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "decision": self.decision,
            "correction": list(self.correction) if self.correction else None,
            "note": self.note,
            "created_version": self.created_version,
        }


@dataclass
class _Version:
    index: int
    dataset: Dataset
    analysis: Analysis
    parent: int | None
    edit: dict | None


class ReviewSession:
    def __init__(
        self,
        dataset: Dataset,
        config: AnalysisConfig,
        policy: EvaluationPolicy,
        feature_map=None,
        baselines=None,
    ):
        self.config = config
        self.policy = policy
        self._feature_map = feature_map
        self._baselines = baselines
        self._lock = threading.RLock()
        analysis = self._analyze(dataset)
        self._versions: list[_Version] = [_Version(0, dataset, analysis, None, None)]
        self._verdicts: list[dict[str, VerdictRecord]] = [{}]

    def _analyze(self, dataset: Dataset) -> Analysis:
        return analyze(
            dataset,
            self.config,
            self.policy,
            feature_map=self._feature_map,
            baselines=self._baselines,
        )

    @property
    def latest_version(self) -> int:
        return len(self._versions) - 1

    def _version(self, version: int) -> _Version:
        if not 0 <= version < len(self._versions):
            raise UnknownVersionError(
                f"unknown version {version}; have 0..{self.latest_version}"
            )
        return self._versions[version]

    # -- read side ---------------------------------------------------------

    def version_summaries(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "version": v.index,
                    "parent": v.parent,
                    "fingerprint": v.dataset.fingerprint(),
                    "transitions": len(v.dataset),
                    "v_hat": v.analysis.v_hat,
                    "outcome": v.analysis.diagnosis.outcome.value,
                    "edit": v.edit,
                }
                for v in self._versions
            ]

    def _transition_view(self, dataset: Dataset, report, unit_id: str) -> dict:
        flagged = unit_id in set(report.flags)
        return {
            "record": dataset.get(unit_id).to_record(),
            "flagged": flagged,
            "influence": report.total_influence.get(unit_id),
            "normalized_influence": report.normalized_influence.get(unit_id),
        }

    def flags_payload(self, version: int) -> list[dict]:
        """Collapsed presentation entries with context, in report order."""
        with self._lock:
            v = self._version(version)
            verdicts = self._verdicts[version]
        report = v.analysis.report
        diagnosis = v.analysis.diagnosis
        entries = []
        for unit, covers in diagnosis.presentation:
            record = verdicts.get(unit)
            entries.append(
                {
                    "unit_id": unit,
                    "unit_kind": report.unit_kind,
                    "influence": report.total_influence.get(unit),
                    "normalized_influence": report.normalized_influence.get(unit),
                    "dead_end": unit in set(report.dead_ends),
                    "covers": list(covers),
                    "verdict": record.decision if record else None,
                    "context": [
                        self._transition_view(v.dataset, report, uid)
                        for uid in diagnosis.context.get(unit, [])
                    ],
                }
            )
        return entries

    def transition_payload(self, unit_id: str, version: int) -> dict:
        with self._lock:
            v = self._version(version)
        if unit_id not in v.dataset:
            raise UnknownUnitError(
                f"no transition {unit_id!r} in version {version}"
            )
        report = v.analysis.report
        view = self._transition_view(v.dataset, report, unit_id)
        view["version"] = version
        view["dead_end"] = unit_id in set(report.dead_ends)
        view["context"] = [
            self._transition_view(v.dataset, report, uid)
            for uid in context_window(v.dataset, unit_id)
        ]
        return view

    def status_payload(self, version: int) -> dict:
        with self._lock:
            v = self._version(version)
            history = [
                {
                    "version": entry.index,
                    "parent": entry.parent,
                    "fingerprint": entry.dataset.fingerprint(),
                    "v_hat": entry.analysis.v_hat,
                    "outcome": entry.analysis.diagnosis.outcome.value,
                    "edit": entry.edit,
                    "verdicts": [r.to_dict() for r in self._verdicts[entry.index].values()],
                }
                for entry in self._versions
            ]
            verdicts = self._verdicts[version]
        diagnosis = v.analysis.diagnosis
        presented = [unit for unit, _ in diagnosis.presentation]
        validated = all(
            verdicts.get(unit) is not None
            and verdicts[unit].decision == "representative"
            for unit in presented
        )
        return {
            "version": version,
            "latest_version": self.latest_version,
            "estimator": self.config.estimator,
            "policy": self.policy.name,
            "v_hat": v.analysis.v_hat,
            "outcome": diagnosis.outcome.value,
            "validated": validated,
            "diagnosis": diagnosis.to_dict(),
            "history": history,
        }

    # -- write side --------------------------------------------------------

    def submit(self, verdict: VerdictIn) -> dict:
        """Record a verdict; edit decisions create and analyze a new version."""
        with self._lock:
            v = self._version(verdict.version)
            report = v.analysis.report
            if verdict.unit_id not in set(report.flags):
                raise VerdictError(
                    f"unit {verdict.unit_id!r} is not flagged in version {verdict.version}"
                )
            if verdict.decision == "representative":
                self._verdicts[verdict.version][verdict.unit_id] = VerdictRecord(
                    verdict.unit_id, verdict.decision, None, verdict.note, None
                )
                return {
                    "version": verdict.version,
                    "created_version": None,
                    "v_hat": v.analysis.v_hat,
                }
            # Edits build on the newest data; anything else lost the race.
            if verdict.version != self.latest_version:
                raise StaleVersionError(
                    f"version {verdict.version} is superseded by {self.latest_version}"
                )
            if verdict.decision == "artefact_remove":
                new_dataset = remove_unit(v.dataset, self.config, verdict.unit_id)
                correction = None
            else:
                new_dataset = self._apply_patches(
                    v.dataset, verdict.unit_id, verdict.correction
                )
                correction = tuple(
                    patch.model_dump() for patch in verdict.correction
                )
            try:
                analysis = self._analyze(new_dataset)
            except (DatasetError, EvaluationError) as exc:
                raise VerdictError(
                    f"edit leaves the dataset unanalyzable: {exc}"
                ) from exc
            new_index = len(self._versions)
            edit = {
                "unit_id": verdict.unit_id,
                "decision": verdict.decision,
                "correction": list(correction) if correction else None,
                "note": verdict.note,
            }
            self._versions.append(
                _Version(new_index, new_dataset, analysis, verdict.version, edit)
            )
            self._verdicts.append({})
            self._verdicts[verdict.version][verdict.unit_id] = VerdictRecord(
                verdict.unit_id,
                verdict.decision,
                correction,
                verdict.note,
                new_index,
            )
            return {
                "version": verdict.version,
                "created_version": new_index,
                "v_hat": analysis.v_hat,
            }

    def _apply_patches(
        self, dataset: Dataset, default_unit: str, patches: list[FieldPatch]
    ) -> Dataset:
        replacements: dict[str, Transition] = {}
        for patch in patches:
            target = patch.transition_id or default_unit
            base = replacements.get(target)
            if base is None:
                if target not in dataset:
                    raise VerdictError(
                        f"correction targets unknown transition {target!r}"
                    )
                base = dataset.get(target)
            replacements[target] = self._patched(base, patch)
        return dataset.replace_transitions(replacements)

    @staticmethod
    def _patched(base: Transition, patch: FieldPatch) -> Transition:
        name = patch.field
        if name in VECTOR_FIELDS:
            vec = np.array(getattr(base, name), dtype=float)
            if patch.index >= vec.size:
                raise VerdictError(
                    f"index {patch.index} out of range for {name} of size {vec.size}"
                )
            vec[patch.index] = patch.value
            value = tuple(float(x) for x in vec)
        elif name == "action":
            if patch.value != int(patch.value):
                raise VerdictError("action must be an integer")
            value = int(patch.value)
        elif name == "behavior_prob":
            if not 0.0 < patch.value <= 1.0:
                raise VerdictError("behavior_prob must be in (0, 1]")
            value = float(patch.value)
        else:
            value = float(patch.value)
        try:
            return dc_replace(base, **{name: value})
        except (DatasetError, ValueError) as exc:
            raise VerdictError(str(exc)) from exc

    # -- audit -------------------------------------------------------------

    def audit_log(self) -> list[dict]:
        with self._lock:
            return [
                dict(v.edit, version=v.index, parent=v.parent)
                for v in self._versions
                if v.edit is not None
            ]

    def replay_audit(self) -> Dataset:
        """Reapply every logged edit to version 0; equals the latest dataset."""
        with self._lock:
            dataset = self._versions[0].dataset
            log = self.audit_log()
        for entry in log:
            if entry["decision"] == "artefact_remove":
                dataset = remove_unit(dataset, self.config, entry["unit_id"])
            else:
                patches = [FieldPatch(**raw) for raw in entry["correction"]]
                dataset = self._apply_patches(dataset, entry["unit_id"], patches)
        return dataset

    # -- artifacts (identical to the CLI's output for the same dataset) ----

    def report_jsonl(self, version: int) -> str:
        return render_report_jsonl(self._version(version).analysis)

    def diagnosis_json(self, version: int) -> str:
        return render_diagnosis_json(self._version(version).analysis)

    def dataset_jsonl(self, version: int) -> str:
        return self._version(version).dataset.to_jsonl()
