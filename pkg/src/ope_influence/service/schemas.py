"""Request bodies for the review service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

PATCHABLE_FIELDS = ("state", "next_state", "reward", "action", "behavior_prob")
VECTOR_FIELDS = ("state", "next_state")


class FieldPatch(BaseModel):
    """One field-level correction to a transition.

    transition_id defaults to the verdict's unit, so a single-transition
    fix needs no explicit target; multi-transition corrections (moving an
    action to the previous step, say) list one patch per touched record.
    index addresses a component of a vector field and must be absent for
    scalar fields.
    """

    transition_id: Optional[str] = None
    field: Literal["state", "next_state", "reward", "action", "behavior_prob"]
    index: Optional[int] = Field(default=None, ge=0)
    value: float

    @model_validator(mode="after")
    def _index_matches_field(self):
        if self.field in VECTOR_FIELDS and self.index is None:
            raise ValueError(f"patching {self.field!r} needs an index")
        if self.field not in VECTOR_FIELDS and self.index is not None:
            raise ValueError(f"{self.field!r} is scalar; index does not apply")
        return self


class VerdictIn(BaseModel):
    """An expert's decision about one flagged unit.

    correction must be present exactly when the decision is
    artefact_correct.
    """

    version: int = Field(ge=0)
    unit_id: str
    decision: Literal["representative", "artefact_remove", "artefact_correct"]
    correction: Optional[list[FieldPatch]] = None
    note: str = ""

    @model_validator(mode="after")
    def _correction_matches_decision(self):
        if self.decision == "artefact_correct" and not self.correction:
            raise ValueError("artefact_correct requires a correction")
        if self.decision != "artefact_correct" and self.correction:
            raise ValueError("correction only applies to artefact_correct")
        return self
