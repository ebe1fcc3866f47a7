"""HTTP surface of the engine.

JSON everywhere except multipart ingest and raw artifact bytes. Domain
errors map onto 404 (unknown ids), 409 (review/turn conflicts), 422
(malformed or unsatisfiable requests) and 503 (gateway or kernel down).
"""

from __future__ import annotations

import mimetypes
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..config import EngineConfig
from ..errors import (
    EmptyPool,
    FeedbackLensError,
    GatewayError,
    IncompleteReview,
    LabelNotInSet,
    UndecodableStream,
    UnknownDimension,
    UnknownId,
)
from ..errors import ExecutorUnavailable, PluginLoadError, SnapshotMissing
from .state import EngineState, ReviewRequired, SessionBusy


class IngestResponse(BaseModel):
    accepted: int
    rejected: int
    rejection_reasons: list[dict]


class JobRef(BaseModel):
    job_id: str


class JobView(BaseModel):
    id: str
    kind: str
    status: str
    progress: float
    result: dict | None = None
    error: str | None = None


class ClassifyRunRequest(BaseModel):
    dimension: str
    k: int | None = None


class EvalClassifyRequest(BaseModel):
    dimension: str
    k: int | None = None
    seed: int = 0
    fold_top_n: int | None = None


class EvalTopicsRequest(BaseModel):
    round: int | None = None


class ReviewRequest(BaseModel):
    decisions: dict[str, str]
    recluster: bool = True


class AskRequest(BaseModel):
    question: str = Field(min_length=1)


class SessionHandle(BaseModel):
    id: str
    created_at: str
    snapshot_ref: str
    status: str


class ArtifactView(BaseModel):
    kind: str
    path: str
    url: str
    caption: str = ""


class AgentResponseView(BaseModel):
    text: str
    status: str
    artifacts: list[ArtifactView]
    code_shown: str | None = None


class TurnView(BaseModel):
    user: str
    response: AgentResponseView


_STATUS_BY_ERROR: list[tuple[type, int]] = [
    (UnknownId, 404),
    (SessionBusy, 409),
    (IncompleteReview, 409),
    (ReviewRequired, 409),
    (UnknownDimension, 422),
    (EmptyPool, 422),
    (LabelNotInSet, 422),
    (UndecodableStream, 422),
    (SnapshotMissing, 503),
    (PluginLoadError, 503),
    (ExecutorUnavailable, 503),
    (GatewayError, 503),
]


def _status_for(exc: FeedbackLensError) -> int:
    for err_type, status in _STATUS_BY_ERROR:
        if isinstance(exc, err_type):
            return status
    return 422


def create_app(
    config: EngineConfig | None = None,
    state: EngineState | None = None,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    if state is None:
        state = EngineState(config or EngineConfig())
    app = FastAPI(title="feedbacklens", version="0.1.0")
    app.state.engine = state

    @app.exception_handler(FeedbackLensError)
    async def domain_error_handler(request: Request, exc: FeedbackLensError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"detail": f"{type(exc).__name__}: {exc}"},
        )

    def engine() -> EngineState:
        return app.state.engine

    async def check_token(request: Request) -> None:
        token = engine().config.server.token
        if not token:
            return
        if request.url.path.startswith("/artifacts/"):
            return  # artifact tokens are unguessable and session-scoped
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise UnknownId("invalid or missing API token")

    guarded = [Depends(check_token)]

    # --- ingest ----------------------------------------------------------------

    @app.post("/ingest", response_model=IngestResponse, dependencies=guarded)
    async def ingest(file: UploadFile = File(...), format: str = Form("jsonl")):
        data = await file.read()
        report = engine().ingest(data, format)
        return report.to_dict()

    # --- jobs -------------------------------------------------------------------

    @app.get("/jobs/{job_id}", response_model=JobView, dependencies=guarded)
    def job_status(job_id: str):
        return engine().jobs.get(job_id).to_dict()

    @app.post("/jobs/{job_id}/cancel", response_model=JobView, dependencies=guarded)
    def job_cancel(job_id: str):
        return engine().jobs.cancel(job_id).to_dict()

    # --- classification -----------------------------------------------------------

    @app.post("/classify/run", response_model=JobRef, dependencies=guarded)
    def classify_run(body: ClassifyRunRequest):
        k = body.k if body.k is not None else engine().config.classify.shots
        job = engine().classify_run_job(body.dimension, k)
        return {"job_id": job.id}

    @app.post("/eval/classify", response_model=JobRef, dependencies=guarded)
    def eval_classify(body: EvalClassifyRequest):
        k = body.k if body.k is not None else engine().config.classify.shots
        job = engine().eval_classify_job(
            body.dimension, k, body.seed, body.fold_top_n
        )
        return {"job_id": job.id}

    # --- topics --------------------------------------------------------------------

    @app.post("/topics/round1", response_model=JobRef, dependencies=guarded)
    def topics_round1():
        return {"job_id": engine().topics_round_one_job().id}

    @app.get("/topics/candidates", dependencies=guarded)
    def topics_candidates():
        return {"candidates": engine().topic_candidates()}

    @app.post("/topics/review", dependencies=guarded)
    def topics_review(body: ReviewRequest):
        return engine().apply_topic_review(body.decisions, recluster=body.recluster)

    @app.post("/topics/round2", response_model=JobRef, dependencies=guarded)
    def topics_round2():
        return {"job_id": engine().topics_round_two_job().id}

    @app.post("/eval/topics", response_model=JobRef, dependencies=guarded)
    def eval_topics(body: EvalTopicsRequest | None = None):
        round_ = body.round if body else None
        return {"job_id": engine().eval_topics_job(round_).id}

    # --- sessions ---------------------------------------------------------------------

    @app.post("/sessions", response_model=SessionHandle, dependencies=guarded)
    def create_session():
        return engine().create_session().handle()

    @app.post(
        "/sessions/{session_id}/ask",
        response_model=AgentResponseView,
        dependencies=guarded,
    )
    def ask(session_id: str, body: AskRequest):
        return engine().ask(session_id, body.question)

    @app.get(
        "/sessions/{session_id}/history",
        response_model=list[TurnView],
        dependencies=guarded,
    )
    def history(session_id: str):
        return engine().history(session_id)

    @app.delete(
        "/sessions/{session_id}", response_model=SessionHandle, dependencies=guarded
    )
    def close_session(session_id: str):
        return engine().close_session(session_id).handle()

    # --- artifacts ----------------------------------------------------------------------

    @app.get("/artifacts/{token}")
    def artifact(token: str):
        path = engine().artifact_path(token)
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type, filename=path.name)

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
