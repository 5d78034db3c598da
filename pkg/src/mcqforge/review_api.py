"""HTTP surface for the review service.

Thin FastAPI layer: validation and queue semantics live in ReviewService;
this module translates them to status codes with machine-readable error
codes so UI clients can branch without parsing prose.
"""

from __future__ import annotations

from typing import Callable

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import ConflictError, PreconditionError, ValidationError
from .review import ReviewScore, ReviewService

FigureResolver = Callable[[str], tuple[bytes, str]]


class ReviewScoreBody(BaseModel):
    scientific_accuracy: int
    logical_consistency: int
    contextual_relevance: int
    verdict: str
    note: str = ""
    reviewer: str = ""


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def _task_json(task) -> dict:
    return {
        "task_id": task.task_id,
        "item_id": task.item_id,
        "snapshot": task.snapshot,
        "status": task.status,
        "reviewer": task.reviewer,
        "order": task.order,
        "score": dict(task.score.__dict__) if task.score else None,
    }


def create_app(service: ReviewService, figure_resolver: FigureResolver | None = None) -> FastAPI:
    app = FastAPI(title="review service")

    @app.get("/api/tasks/next")
    def next_task(reviewer: str = ""):
        if not reviewer:
            return _error(400, "missing_reviewer", "reviewer query parameter required")
        task = service.next_task(reviewer)
        done, total = service.progress()
        return {"task": _task_json(task) if task else None,
                "progress": {"done": done, "total": total}}

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str):
        try:
            task = service.get_task(task_id)
        except KeyError:
            return _error(404, "task_not_found", f"no task {task_id}")
        return _task_json(task)

    @app.get("/api/figures/{content_hash}")
    def get_figure(content_hash: str):
        if figure_resolver is None:
            return _error(404, "figure_not_found", "no figure store configured")
        try:
            data, media_type = figure_resolver(content_hash)
        except KeyError:
            return _error(404, "figure_not_found", f"no figure {content_hash}")
        return Response(content=data, media_type=media_type)

    @app.post("/api/tasks/{task_id}/review")
    def submit(task_id: str, body: ReviewScoreBody):
        try:
            score = ReviewScore(
                scientific_accuracy=body.scientific_accuracy,
                logical_consistency=body.logical_consistency,
                contextual_relevance=body.contextual_relevance,
                verdict=body.verdict, note=body.note, reviewer=body.reviewer)
            task = service.submit_review(task_id, score)
        except ValidationError as e:
            return _error(400, "invalid_score", str(e))
        except ConflictError as e:
            return _error(409, "task_conflict", str(e))
        except KeyError:
            return _error(404, "task_not_found", f"no task {task_id}")
        return _task_json(task)

    @app.get("/api/report")
    def report():
        try:
            return service.audit_report()
        except PreconditionError:
            done, total = service.progress()
            return {"dataset_hash": service.dataset_hash, "completed": 0,
                    "total": total, "axis_means": None, "accept_rate": None,
                    "by_task_type": {}, "reviews_per_reviewer": {}}

    return app
