"""HTTP service exposing the toolkit.

Two groups of endpoints share one app: the annotation backend (blinded task
queue, label submission, progress, export) and single-pair evaluation
utilities (evaluate, ground, metrics) so thin clients can drive the pipeline
remotely. If a built UI bundle exists it is served at the root path.

The service holds no in-memory truth: sessions live on disk and are reloaded
on demand, so a restart loses nothing that was acknowledged.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ._version import __version__
from .annotation import AnnotationSession
from .config import ToolkitConfig, build_gateway
from .errors import AttrScoreError, DatasetError, TransportError
from .gateway import Gateway, ModelRef
from .grounding import ground
from .metrics import HashEmbedder, PrfScore, as_mode, embed_match, rouge_l, rouge_n
from .ontology import Ontology, default_ontology
from .scoring import holistic_score, score_summary
from .structuring import structure

_METRICS = {
    "rouge1": lambda r, c, e: rouge_n(r, c, n=1),
    "rouge2": lambda r, c, e: rouge_n(r, c, n=2),
    "rougeL": lambda r, c, e: rouge_l(r, c),
    "embed_match": embed_match,
}


class EvaluateRequest(BaseModel):
    reference: str = Field(min_length=1)
    candidate: str = Field(min_length=1)
    structurer: str = "mock"
    scorers: list[str] = Field(default_factory=lambda: ["llm@mock"])


class GroundRequest(BaseModel):
    document: str = Field(min_length=1)
    attribute_key: str
    value: str = Field(min_length=1)
    provider: str = "mock"


class MetricsRequest(BaseModel):
    reference: str = Field(min_length=1)
    candidate: str = Field(min_length=1)
    metric: str = "rougeL"


class LabelSubmission(BaseModel):
    task_id: str
    annotator_id: str = Field(min_length=1)
    label: int = Field(ge=1, le=4)


class _Sessions:
    """Disk-backed session registry; one shared handle per session id."""

    def __init__(self, root: Path):
        self.root = root
        self._cache: dict[str, AnnotationSession] = {}
        self._lock = threading.Lock()

    def get(self, session_id: str) -> AnnotationSession:
        with self._lock:
            if session_id not in self._cache:
                try:
                    self._cache[session_id] = AnnotationSession.open(self.root, session_id)
                except DatasetError as exc:
                    raise HTTPException(status_code=404, detail=str(exc)) from exc
            return self._cache[session_id]


def _prf_payload(score: PrfScore) -> dict:
    return {"precision": score.precision, "recall": score.recall, "f1": score.f1}


def create_app(
    sessions_root: str | Path = "sessions",
    gateway: Gateway | None = None,
    ontology: Ontology | None = None,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    gateway = gateway or build_gateway(ToolkitConfig(), mock_only=True)
    ontology = ontology or default_ontology()
    sessions = _Sessions(Path(sessions_root))
    embedder = HashEmbedder()
    app = FastAPI(title="attrscore", version=__version__)

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    # -- annotation ----------------------------------------------------------

    @app.get("/api/session/{session_id}/next")
    def next_task(session_id: str, annotator: str = Query(min_length=1)) -> dict:
        session = sessions.get(session_id)
        task = session.next_task(annotator)
        done = session.progress()["annotators"].get(annotator, 0)
        return {
            "task": None if task is None else task.client_payload(),
            "done": done,
            "total": len(session.tasks),
        }

    @app.post("/api/session/{session_id}/labels")
    def submit_label(session_id: str, submission: LabelSubmission) -> dict:
        session = sessions.get(session_id)
        try:
            event = session.submit_label(submission.task_id, submission.annotator_id, submission.label)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"ok": True, "task_id": submission.task_id, "label": event["label"]}

    @app.get("/api/session/{session_id}/progress")
    def progress(session_id: str) -> dict:
        return sessions.get(session_id).progress()

    @app.get("/api/session/{session_id}/export")
    def export(session_id: str, blinded: bool = False) -> dict:
        return sessions.get(session_id).export(blinded=blinded)

    # -- single-pair evaluation ----------------------------------------------

    @app.post("/api/evaluate")
    def evaluate(request: EvaluateRequest) -> dict:
        structurer = ModelRef.parse(request.structurer)
        try:
            ref = structure(request.reference, ontology, gateway, structurer, source_id="reference")
            cand = structure(request.candidate, ontology, gateway, structurer, source_id="candidate")
            scores: dict[str, dict] = {}
            for name in request.scorers:
                kind, _, provider_spec = name.partition("@")
                if kind == "llm":
                    provider = ModelRef.parse(provider_spec or "mock")
                    summary = score_summary(ontology, ref, cand, gateway, provider)
                    scores[name] = {
                        "normalized": summary.normalized,
                        "mean_raw": summary.mean_raw,
                        "n_scored": summary.n_scored,
                        "n_skipped": summary.n_skipped,
                        "per_attribute": [
                            {"attribute_key": s.attribute_key, "score": s.score, "skip_reason": s.skip_reason}
                            for s in summary.per_attribute
                        ],
                    }
                elif kind == "holistic":
                    provider = ModelRef.parse(provider_spec or "mock")
                    score = holistic_score(request.reference, request.candidate, gateway, provider)
                    scores[name] = {"score": score, "normalized": (score - 1) / 9 * 100}
                elif kind in _METRICS:
                    fn = _METRICS[kind]
                    default = fn(request.reference, request.candidate, embedder)
                    result = as_mode(lambda r, c: fn(r, c, embedder), ref, cand)
                    scores[name] = {
                        "default": _prf_payload(default),
                        "as_mode": {"per_attribute": result.per_attribute, "mean": result.mean},
                    }
                else:
                    raise HTTPException(status_code=422, detail=f"unknown scorer {name!r}")
        except TransportError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        except AttrScoreError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "structured": {"reference": ref.values, "candidate": cand.values},
            "warnings": {"reference": ref.warnings, "candidate": cand.warnings},
            "scores": scores,
        }

    @app.post("/api/ground")
    def ground_value(request: GroundRequest) -> dict:
        try:
            attribute = ontology.get(request.attribute_key)
        except KeyError:
            raise HTTPException(
                status_code=422,
                detail=f"unknown attribute {request.attribute_key!r}; valid keys: {', '.join(ontology.keys)}",
            ) from None
        try:
            grounded = ground(request.document, attribute, request.value, gateway, ModelRef.parse(request.provider))
        except TransportError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        except AttrScoreError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "attribute_key": grounded.attribute_key,
            "extracted": grounded.extracted,
            "span": grounded.span,
            "char_start": grounded.char_start,
            "char_end": grounded.char_end,
            "status": grounded.status,
        }

    @app.post("/api/metrics")
    def metrics(request: MetricsRequest) -> dict:
        fn = _METRICS.get(request.metric)
        if fn is None:
            raise HTTPException(
                status_code=422,
                detail=f"unknown metric {request.metric!r}; valid: {', '.join(sorted(_METRICS))}",
            )
        return {"metric": request.metric, **_prf_payload(fn(request.reference, request.candidate, embedder))}

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
