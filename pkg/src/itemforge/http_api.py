"""The HTTP gateway: every kernel capability behind one endpoint each.

Wire format: JSON envelopes for structure and metadata; outcome documents
and schemas travel as embedded XML text so stored bytes survive the trip
untouched. No endpoint writes around the lifecycle engine.
"""

from __future__ import annotations

import secrets
import time
from pathlib import Path

from fastapi import Body, Depends, FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import query as q
from .bundle import import_bundle
from .config import GatewayConfig
from .errors import (
    ErrAccessDenied,
    ErrBadQuery,
    ErrBadRoute,
    ErrConstraint,
    ErrEmptySlot,
    ErrInvalidTransition,
    ErrMalformedXML,
    ErrNameTaken,
    ErrNoDraft,
    ErrNotFound,
    ErrRange,
    ErrSchemaViolation,
    ErrScriptFailure,
    ErrStorage,
    ErrUnsupportedConstruct,
    ItemforgeError,
)
from .kernel import Kernel
from .schema import form_model

_STATUS = {
    ErrNotFound: 404,
    ErrAccessDenied: 403,
    ErrInvalidTransition: 409,
    ErrConstraint: 409,
    ErrNameTaken: 409,
    ErrNoDraft: 409,
    ErrEmptySlot: 409,
    ErrSchemaViolation: 422,
    ErrMalformedXML: 422,
    ErrUnsupportedConstruct: 422,
    ErrBadQuery: 400,
    ErrRange: 400,
    ErrBadRoute: 500,
    ErrScriptFailure: 500,
    ErrStorage: 503,
}


class SessionStore:
    def __init__(self, ttl: float):
        self.ttl = ttl
        self._sessions: dict[str, tuple[str, float]] = {}

    def issue(self, agent_id: str) -> tuple[str, float]:
        token = secrets.token_urlsafe(32)  # 256 bits
        expiry = time.time() + self.ttl
        self._sessions[token] = (agent_id, expiry)
        return token, expiry

    def resolve(self, token: str) -> str | None:
        entry = self._sessions.get(token)
        if entry is None:
            return None
        agent_id, expiry = entry
        if time.time() > expiry:
            self._sessions.pop(token, None)
            return None
        return agent_id


def build_app(kernel: Kernel, config: GatewayConfig | None = None) -> FastAPI:
    config = config or GatewayConfig()
    app = FastAPI(title="itemforge gateway", version="0.1.0")
    sessions = SessionStore(config.session_ttl)
    app.state.kernel = kernel
    app.state.sessions = sessions

    @app.exception_handler(ItemforgeError)
    def _kernel_error(request: Request, exc: ItemforgeError):
        body = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, ErrSchemaViolation) and exc.violations:
            body["violations"] = [
                {"path": p, "rule": r, "message": m} for p, r, m in exc.violations]
        if isinstance(exc, ErrScriptFailure) and exc.event is not None:
            body["event"] = exc.event.summary()
        return JSONResponse(status_code=_STATUS.get(type(exc), 500), content=body)

    def current_agent(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise _Unauthenticated()
        agent_id = sessions.resolve(authorization[len("Bearer "):])
        if agent_id is None:
            raise _Unauthenticated()
        return agent_id

    class _Unauthenticated(Exception):
        pass

    @app.exception_handler(_Unauthenticated)
    def _unauth(request: Request, exc: _Unauthenticated):
        return JSONResponse(status_code=401,
                            content={"error": "Unauthenticated",
                                     "detail": "missing, invalid or expired session"})

    @app.post("/login")
    def login(body: dict = Body(...)):
        try:
            agent = kernel.agents.verify(str(body.get("name", "")),
                                         str(body.get("password", "")))
        except ErrAccessDenied:
            return JSONResponse(status_code=401,
                                content={"error": "ErrAccessDenied",
                                         "detail": "invalid credentials"})
        token, expiry = sessions.issue(agent.agent_id)
        return {"token": token, "expires_at": expiry,
                "agent": {"agent_id": agent.agent_id, "name": agent.name,
                          "roles": agent.roles}}

    @app.get("/domain/{path:path}")
    def domain(path: str, agent: str = Depends(current_agent)):
        path = "/" + path.strip("/") if path.strip("/") else "/"
        children = kernel.store.list_children(path)
        target = kernel.store.directory.get(path)
        if target is None and not children and path != "/":
            raise ErrNotFound(f"no directory entry at '{path}'")
        return {"path": path, "item": target,
                "children": [{"name": n, "item": t} for n, t in children]}

    @app.get("/items/{uuid}")
    def item_summary(uuid: str, agent: str = Depends(current_agent)):
        return kernel.item_summary(uuid)

    @app.get("/items/{uuid}/history")
    def item_history(uuid: str, cursor: int | None = Query(default=None),
                     size: int = Query(default=100),
                     agent: str = Depends(current_agent)):
        page = q.history(kernel, uuid, cursor=cursor, page_size=size)
        return {"item": page.item, "events": page.events,
                "next_cursor": page.next_cursor}

    @app.get("/items/{uuid}/viewpoints/{schema}/{view}")
    def viewpoint(uuid: str, schema: str, view: str,
                  agent: str = Depends(current_agent)):
        outcome = kernel.resolve_viewpoint(uuid, schema, view)
        return Response(content=outcome.document, media_type="application/xml",
                        headers={"X-Event-Id": str(outcome.event_id),
                                 "X-Schema-Version": str(outcome.schema_version)})

    def _job_dict(job) -> dict:
        # enrich with the activity's pinned outcome schema so data-entry
        # clients can fetch the right form
        record = job.to_dict()
        record["schema"] = None
        try:
            state = kernel.state(job.item)
            activity = state.workflow.activity(job.activity_path)
            if job.transition == "Complete" and activity.schema_ref is not None:
                record["schema"] = list(activity.schema_ref)
        except ItemforgeError:
            pass
        return record

    @app.get("/items/{uuid}/jobs")
    def item_jobs(uuid: str, agent: str = Depends(current_agent)):
        return {"jobs": [_job_dict(j) for j in kernel.compute_jobs(uuid, agent)]}

    @app.post("/items/{uuid}/execute")
    def execute(uuid: str, body: dict = Body(...),
                agent: str = Depends(current_agent)):
        event = kernel.execute(uuid, agent, str(body.get("activity_path", "")),
                               str(body.get("transition", "")),
                               outcome=body.get("outcome"))
        return {"event": event.summary()}

    @app.post("/items/{uuid}/predefined/{step}")
    def predefined(uuid: str, step: str, body: dict = Body(...),
                   agent: str = Depends(current_agent)):
        event = kernel.apply_predefined(uuid, agent, step,
                                        str(body.get("payload", "")))
        return {"event": event.summary()}

    @app.get("/query/items")
    def query_items(prop: str, value: str, under: str | None = None,
                    agent: str = Depends(current_agent)):
        return {"items": q.find_items(kernel, prop, value, under=under)}

    @app.post("/query/outcomes")
    def query_outcomes(body: dict = Body(...), agent: str = Depends(current_agent)):
        results = q.query_outcomes(
            kernel, str(body.get("schema", "")), str(body.get("path", "")),
            str(body.get("comparator", "=")), str(body.get("literal", "")),
            under=body.get("under"))
        return {"results": [{"item": i, "value": v} for i, v in results]}

    @app.post("/descriptions/import")
    async def descriptions_import(request: Request,
                                  agent: str = Depends(current_agent)):
        archive = await request.body()
        tags = import_bundle(kernel, archive, agent)
        return {"versions": [{"version": t.version, "view": t.view_name,
                              "finalized_at": t.finalized_at} for t in tags]}

    @app.get("/items/{uuid}/export")
    def export(uuid: str, agent: str = Depends(current_agent)):
        archive = q.export_trace(kernel, uuid)
        return Response(content=archive, media_type="application/zip",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{uuid}.zip"'})

    @app.get("/schemas/{name}/{version}/form")
    def schema_form(name: str, version: int, agent: str = Depends(current_agent)):
        doc = kernel.registry.get(name, version)
        return {"schema": name, "version": version, "fields": form_model(doc)}

    @app.get("/jobs/poll")
    def jobs_poll(role: str, timeout: float = Query(default=None),
                  agent: str = Depends(current_agent)):
        record = kernel.agents.require(agent)
        if not record.holds(role):
            raise ErrAccessDenied(f"agent '{record.name}' does not hold role '{role}'")
        wait = min(timeout if timeout is not None else config.poll_timeout, 60.0)
        jobs = kernel.jobs.wait_for_role(role, wait)
        return {"jobs": [_job_dict(j) for j in jobs]}

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=config.static_dir, html=True),
                  name="console")

    return app


def serve(config: GatewayConfig):
    """Open the store and run the gateway until terminated."""
    import uvicorn

    from .kernel import KernelConfig

    kernel = Kernel.open(config.store_path,
                         KernelConfig(script_timeout=config.script_timeout,
                                      fsync_mode=config.fsync_mode))
    app = build_app(kernel, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
