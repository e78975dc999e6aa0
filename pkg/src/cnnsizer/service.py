"""HTTP API serving the grouping-explorer UI.

Responses reuse the same structured report schema the CLI writes, so both
paths produce numerically identical output for identical inputs. All log
mutations go through the session's single-writer decision log; POST bodies
may carry ``expected_log_length`` for optimistic concurrency (409 when the
log has grown since the client last looked).

Error mapping: 400 malformed input, 409 state/concurrency conflict,
422 unknown class.
"""

from __future__ import annotations

import os
from typing import Dict, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (CnnsizerError, InputError, StateError, UnknownClassError)
from .grouping import ClassGrouping
from .selection import ConfigKey
from .session import Session


class GroupingBody(BaseModel):
    name: str
    mapping: Dict[str, Optional[str]]
    note: str = ""
    expected_log_length: Optional[int] = None


class ColorBody(BaseModel):
    per_class: bool = False
    expected_log_length: Optional[int] = None


class LadderSelectBody(BaseModel):
    expected_log_length: Optional[int] = None


def _parse_config_param(raw: Optional[str], default: ConfigKey) -> ConfigKey:
    if not raw:
        return default
    parts = raw.split(":")
    if len(parts) != 3:
        raise InputError(
            f"config must look like grouping:color_mode:resolution, got {raw!r}"
        )
    try:
        resolution = int(parts[2])
    except ValueError:
        raise InputError(f"resolution must be an integer, got {parts[2]!r}")
    return ConfigKey(grouping_name=parts[0], color_mode=parts[1], resolution=resolution)


def create_app(session: Session, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="cnnsizer", version="0.1.0")

    @app.exception_handler(CnnsizerError)
    async def handle_errors(request: Request, exc: CnnsizerError):
        if isinstance(exc, UnknownClassError):
            status = 422
        elif isinstance(exc, StateError):
            status = 409
        elif isinstance(exc, InputError):
            status = 400
        else:
            status = 500
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.get("/api/classes")
    def get_classes():
        base = session.base_set()
        counts = base.class_counts()
        return {
            "base_config": session.config.base_config.to_dict(),
            "classes": [{"class_id": c, "count": counts[c]} for c in base.classes],
        }

    @app.get("/api/report")
    def get_report(config: Optional[str] = None):
        key = _parse_config_param(config, session.config.base_config)
        return session.report_for(key).to_dict()

    @app.post("/api/grouping/evaluate")
    def evaluate_grouping(body: GroupingBody):
        grouping = ClassGrouping(name=body.name, mapping=body.mapping)
        report, entry = session.evaluate_grouping(
            grouping, note=body.note, expected_length=body.expected_log_length)
        return {"report": report.to_dict(), "entry": entry.to_dict(),
                "log_length": len(session.log)}

    @app.post("/api/color/select")
    def select_color(body: ColorBody):
        decision = session.select_color(per_class=body.per_class,
                                        expected_length=body.expected_log_length)
        return {"decision": decision.to_dict(), "log_length": len(session.log)}

    @app.get("/api/ladder")
    def get_ladder():
        return session.resolution_ladder(commit=False).to_dict()

    @app.post("/api/ladder/select")
    def select_ladder(body: LadderSelectBody):
        result = session.resolution_ladder(
            commit=True, expected_length=body.expected_log_length)
        return {"ladder": result.to_dict(), "log_length": len(session.log)}

    @app.get("/api/log")
    def get_log():
        return {"entries": [e.to_dict() for e in session.log.entries],
                "log_length": len(session.log)}

    @app.get("/api/recommendation")
    def get_recommendation():
        return session.recommendation().to_dict()

    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
