"""HTTP API over the engine service (JSON bodies, bearer-token auth).

Responses are rendered through the canonical JSON writer so decimal
measurement values survive the wire byte-exactly; error bodies carry
``{code, message, target}``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from radstruct.errors import (
    ApprovalBlocked,
    EngineError,
    EvidenceConflict,
    ExportBlocked,
    Forbidden,
    InvalidTransition,
    NotAcknowledgeable,
    SessionConflict,
    SessionNotFound,
    Unauthorized,
    UnknownEvidence,
    UnknownModule,
)
from radstruct.model.jsonio import dumps_canonical, loads_decimal
from radstruct.workflow.auth import TokenAuth
from radstruct.workflow.service import EngineService
from radstruct.workflow.session import Actor

_STATUS = {
    Unauthorized: 401,
    Forbidden: 403,
    SessionNotFound: 404,
    UnknownEvidence: 404,
    UnknownModule: 404,
    ApprovalBlocked: 409,
    ExportBlocked: 409,
    InvalidTransition: 409,
    SessionConflict: 409,
    EvidenceConflict: 409,
    NotAcknowledgeable: 409,
}


def _json(doc, status_code: int = 200) -> Response:
    return Response(
        content=dumps_canonical(doc) + "\n", media_type="application/json", status_code=status_code
    )


def create_app(service: EngineService, auth: TokenAuth, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="radstruct reporting engine", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(EngineError)
    async def engine_error_handler(_request: Request, exc: EngineError):
        status = 400
        for cls, code in _STATUS.items():
            if isinstance(exc, cls):
                status = code
                break
        else:
            if exc.code in ("validation_error", "parse_error", "no_template", "unknown_unit",
                            "dimension_mismatch", "measurement_error", "import_error"):
                status = 422
        payload = exc.to_payload()
        if isinstance(exc, ApprovalBlocked):
            payload["issues"] = exc.issues
        return _json(payload, status_code=status)

    def actor(request: Request) -> Actor:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip() if header.startswith("Bearer ") else None
        return auth.authenticate(token)

    async def body_of(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        return loads_decimal(raw.decode("utf-8"))

    @app.get("/health")
    async def health():
        return _json({"status": "ok"})

    @app.get("/sessions")
    async def list_sessions(actor: Actor = Depends(actor)):
        return _json({"sessions": service.store.session_ids()})

    @app.post("/sessions")
    async def create_session(request: Request, actor: Actor = Depends(actor)):
        body = await body_of(request)
        snapshot = service.create_session(
            body["study"],
            actor,
            evidence_objects=body.get("evidence_objects"),
            registry_doc=body.get("lesion_registry"),
            allow_generic=bool(body.get("allow_generic", False)),
        )
        return _json(snapshot, status_code=201)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str, actor: Actor = Depends(actor)):
        return _json(service.snapshot(session_id))

    @app.post("/sessions/{session_id}/transcript")
    async def submit_transcript(session_id: str, request: Request, actor: Actor = Depends(actor)):
        body = await body_of(request)
        return _json(service.submit_transcript(session_id, body.get("text", ""), actor))

    @app.post("/sessions/{session_id}/evidence")
    async def add_evidence(session_id: str, request: Request, actor: Actor = Depends(actor)):
        body = await body_of(request)
        return _json(service.add_evidence(session_id, body["object"], actor))

    @app.post("/sessions/{session_id}/evidence-links")
    async def link_evidence(session_id: str, request: Request, actor: Actor = Depends(actor)):
        body = await body_of(request)
        return _json(
            service.link_evidence(
                session_id,
                body["finding_id"],
                body["ref"],
                actor,
                role=body.get("role", "supports_current"),
            )
        )

    @app.patch("/sessions/{session_id}/findings/{finding_id}")
    async def patch_finding(
        session_id: str, finding_id: str, request: Request, actor: Actor = Depends(actor)
    ):
        body = await body_of(request)
        if "review" in body:
            accept = body["review"] == "accept"
            return _json(service.review_finding(session_id, finding_id, accept, actor))
        return _json(service.apply_edit(session_id, finding_id, body["path"], body.get("value"), actor))

    @app.post("/sessions/{session_id}/comparison-confirmations")
    async def confirm_comparison(session_id: str, actor: Actor = Depends(actor)):
        return _json(service.confirm_comparison(session_id, actor))

    @app.post("/sessions/{session_id}/draft")
    async def draft(session_id: str, actor: Actor = Depends(actor)):
        return _json(service.draft(session_id, actor))

    @app.post("/sessions/{session_id}/acknowledgments")
    async def acknowledge(session_id: str, request: Request, actor: Actor = Depends(actor)):
        body = await body_of(request)
        return _json(service.acknowledge_issue(session_id, body["issue_id"], actor))

    @app.post("/sessions/{session_id}/approve")
    async def approve(session_id: str, actor: Actor = Depends(actor)):
        return _json(service.approve(session_id, actor))

    @app.post("/sessions/{session_id}/export")
    async def export(session_id: str, actor: Actor = Depends(actor)):
        return _json(service.export(session_id, actor))

    @app.post("/sessions/{session_id}/ai-modules/{module_id}")
    async def invoke_ai(session_id: str, module_id: str, actor: Actor = Depends(actor)):
        return _json(service.invoke_ai_module(session_id, module_id, actor))

    @app.get("/sessions/{session_id}/audit")
    async def audit(session_id: str, actor: Actor = Depends(actor)):
        return _json({"events": service.events(session_id)})

    @app.get("/sessions/{session_id}/exports/{which}")
    async def download_export(session_id: str, which: str, actor: Actor = Depends(actor)):
        snapshot = service.snapshot(session_id)
        exports = snapshot.get("exports")
        if which not in ("fhir", "sr") or not exports:
            raise SessionNotFound(f"no {which} export for {session_id}", target=which)
        path = service.store.exports_dir(session_id) / exports[which]
        return Response(content=path.read_bytes(), media_type="application/json")

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
