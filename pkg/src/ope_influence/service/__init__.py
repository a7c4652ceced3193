"""Expert-review HTTP service: versioned datasets, verdicts, recompute."""

from .app import create_app
from .schemas import FieldPatch, VerdictIn
from .session import (
    ReviewSession,
    StaleVersionError,
    UnknownUnitError,
    UnknownVersionError,
    VerdictError,
)

__all__ = [
    "FieldPatch",
    "ReviewSession",
    "StaleVersionError",
    "UnknownUnitError",
    "UnknownVersionError",
    "VerdictError",
    "VerdictIn",
    "create_app",
]
