"""HTTP wiring for a review session.

Read endpoints default to the latest version when none is given. Error
mapping: unknown version or transition 404, stale edit target 409,
verdict precondition or patch failures 422 (pydantic handles malformed
bodies at the same status).
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from .schemas import VerdictIn
from .session import (
    ReviewSession,
    StaleVersionError,
    UnknownUnitError,
    UnknownVersionError,
    VerdictError,
)


def create_app(session: ReviewSession, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ope-influence review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def resolve(version: int | None) -> int:
        return session.latest_version if version is None else version

    @app.get("/versions")
    def versions() -> list[dict]:
        return session.version_summaries()

    @app.get("/flags")
    def flags(version: int | None = Query(default=None)) -> list[dict]:
        try:
            return session.flags_payload(resolve(version))
        except UnknownVersionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/status")
    def status(version: int | None = Query(default=None)) -> dict:
        try:
            return session.status_payload(resolve(version))
        except UnknownVersionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.get("/transition/{unit_id}")
    def transition(unit_id: str, version: int | None = Query(default=None)) -> dict:
        try:
            return session.transition_payload(unit_id, resolve(version))
        except (UnknownVersionError, UnknownUnitError) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.post("/verdict")
    def verdict(body: VerdictIn) -> dict:
        try:
            return session.submit(body)
        except UnknownVersionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except StaleVersionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except VerdictError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
