"""HTTP surface of the alert service.

Everything the console needs is reachable here: telemetry ingest, the
alert queue, sessions, labeling, threat-repo reads and CURATED curation,
and stats. The three Tier-2 context providers are also exposed as an
MCP-style endpoint (POST /v1/mcp with {tool, arguments}) under their
fixed tool names. Calls authenticate with a static bearer token; TLS
termination is left to the deployment.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import click
import yaml
from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .detector import Detector
from .model import session_to_dict, verdict_to_dict
from .providers import (
    get_policies,
    get_source_code,
    get_threat_framework,
    assess_policy_violations,
    load_policy_store,
    load_source_index,
)
from .reasoning import ProviderSet
from .service import AlertNotFound, AlertService, DetectionWorker, alert_to_dict
from .threat_repo import (
    DuplicateGuidance,
    RepoStore,
    UnknownTechnique,
    repo_to_dict,
)
from .triage import backend_from_config, load_rules
from .model import session_from_dict

logger = logging.getLogger(__name__)


class LabelRequest(BaseModel):
    label: str = Field(pattern="^(TP|TPNM|FP)$")
    analyst_id: str
    note: str = ""


class GuidanceRequest(BaseModel):
    text: str
    analyst_id: str = "analyst"


class McpRequest(BaseModel):
    tool: str
    arguments: dict = Field(default_factory=dict)


def create_app(
    service: AlertService,
    repo_store: RepoStore,
    bearer_token: str,
    provider_set: Optional[ProviderSet] = None,
) -> FastAPI:
    app = FastAPI(title="adr-service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    providers = provider_set or ProviderSet(
        source_index=load_source_index(), policy_store=load_policy_store()
    )

    def authed(request: Request) -> None:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {bearer_token}":
            raise HTTPException(status_code=401, detail="invalid bearer token")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/v1/telemetry/sessions", dependencies=[Depends(authed)])
    def ingest(payload: list[dict]) -> dict:
        receipt = service.ingest_dicts(payload)
        return {
            "accepted": receipt.accepted,
            "duplicates": receipt.duplicates,
            "invalid": receipt.invalid,
        }

    @app.get("/v1/alerts", dependencies=[Depends(authed)])
    def list_alerts(
        state: Optional[str] = Query(default=None),
        severity: Optional[str] = Query(default=None),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ) -> dict:
        alerts, total = service.list_alerts(
            state=state, severity=severity, page=page, page_size=page_size
        )
        return {
            "alerts": [alert_to_dict(a) for a in alerts],
            "page": page,
            "total": total,
        }

    @app.get("/v1/alerts/{alert_id}", dependencies=[Depends(authed)])
    def get_alert(alert_id: str) -> dict:
        try:
            return alert_to_dict(service.get_alert(alert_id))
        except AlertNotFound:
            raise HTTPException(status_code=404, detail=f"no alert {alert_id}")

    @app.post("/v1/alerts/{alert_id}/label", dependencies=[Depends(authed)])
    def label_alert(alert_id: str, body: LabelRequest) -> dict:
        try:
            alert = service.label_alert(alert_id, body.label, body.analyst_id, body.note)
        except AlertNotFound:
            raise HTTPException(status_code=404, detail=f"no alert {alert_id}")
        return alert_to_dict(alert)

    @app.get("/v1/sessions/{session_id}", dependencies=[Depends(authed)])
    def get_session(session_id: str) -> dict:
        try:
            session = service.get_session(session_id)
        except AlertNotFound:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        verdict = service.get_verdict(session_id)
        return {
            "session": session_to_dict(session),
            "verdict": verdict_to_dict(verdict) if verdict else None,
        }

    @app.get("/v1/threat-repo", dependencies=[Depends(authed)])
    def threat_repo() -> dict:
        return repo_to_dict(repo_store.snapshot())

    @app.post("/v1/threat-repo/{technique_id}/guidance", dependencies=[Depends(authed)])
    def publish_guidance(technique_id: str, body: GuidanceRequest) -> dict:
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="guidance text must be non-empty")
        try:
            record = repo_store.publish(
                technique_id, body.text, "CURATED", who=body.analyst_id, source="analyst"
            )
        except UnknownTechnique:
            raise HTTPException(status_code=404, detail=f"no technique {technique_id}")
        except DuplicateGuidance:
            raise HTTPException(status_code=409, detail="exact guidance text already present")
        return record

    @app.get("/v1/stats", dependencies=[Depends(authed)])
    def stats(window: str = Query(default="all")) -> dict:
        return service.stats(window)

    @app.post("/v1/mcp", dependencies=[Depends(authed)])
    def mcp_call(body: McpRequest) -> dict:
        args = body.arguments
        if body.tool == "get_source_code":
            lookup = get_source_code(
                args.get("server_name", ""), args.get("tool_name", ""), providers.source_index
            )
            content = (
                {"source_text": lookup.source_text,
                 "declared_permissions": list(lookup.declared_permissions)}
                if lookup.found
                else {"not_indexed": True}
            )
        elif body.tool == "get_threat_framework":
            content = {
                "techniques": [
                    {"id": s.technique_id, "name": s.name, "match_count": s.match_count}
                    for s in get_threat_framework(args.get("query", ""), repo_store.snapshot())
                ]
            }
        elif body.tool == "get_policies":
            content = {
                "policies": [
                    {
                        "policy_id": p.policy_id,
                        "standard": p.standard,
                        "risk_areas": list(p.risk_areas),
                        "affected_roles": list(p.affected_roles),
                    }
                    for p in get_policies(providers.policy_store)
                ]
            }
        elif body.tool == "assess_policy_violations":
            session = session_from_dict(args["session"])
            content = {
                "violations": [
                    {
                        "policy_id": v.policy_id,
                        "violated_predicate": v.violated_predicate,
                        "event_ref": list(v.event_ref),
                    }
                    for v in assess_policy_violations(session, providers.policy_store)
                ]
            }
        else:
            raise HTTPException(status_code=404, detail=f"unknown tool {body.tool}")
        return {"content": content}

    return app


def build_service(
    store_dir: str | Path,
    repo_path: str | Path,
    *,
    disabled_providers: frozenset = frozenset(),
    config: Optional[dict] = None,
) -> tuple[AlertService, RepoStore]:
    repo_store = RepoStore(repo_path)
    detector = Detector(
        rules=load_rules((config or {}).get("rules_path")),
        providers=ProviderSet(
            source_index=load_source_index((config or {}).get("source_index_path")),
            policy_store=load_policy_store((config or {}).get("policies_path")),
            disabled=disabled_providers,
        ),
        repo_source=repo_store.snapshot,
        triage_backend=backend_from_config(config),
    )
    return AlertService(store_dir, detector), repo_store


@click.command("adr-service")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def main(config_path: str) -> None:
    """Run the alert service over HTTP."""
    import uvicorn

    doc = yaml.safe_load(Path(config_path).read_text("utf-8")) or {}
    store_dir = doc.get("store_dir", "./adr-store")
    repo_path = doc["repo_path"]
    token = doc.get("bearer_token", "dev-token")

    logging.basicConfig(level=logging.INFO)
    service, repo_store = build_service(store_dir, repo_path, config=doc)
    recovered = service.drain()
    if recovered:
        logger.info("recovered %d queued session(s) on startup", recovered)
    service.purge_expired(int(doc.get("retention_days", 396)))

    workers = [
        DetectionWorker(service, poll_interval_s=float(doc.get("poll_interval_s", 0.2)))
        for _ in range(int(doc.get("workers", 1)))
    ]
    for worker in workers:
        worker.start()
    app = create_app(service, repo_store, token)
    try:
        uvicorn.run(app, host=doc.get("host", "127.0.0.1"), port=int(doc.get("port", 8787)))
    finally:
        for worker in workers:
            worker.stop()


if __name__ == "__main__":
    main()
