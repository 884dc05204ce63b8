from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from adr.model import session_to_dict
from adr.service_api import create_app
from adr.service import AlertService
from conftest import flayer_session, make_session

TOKEN = "test-token"
HEADERS = {"Authorization": f"Bearer {TOKEN}"}


@pytest.fixture()
def api(tmp_path, detector, repo_store):
    service = AlertService(tmp_path / "store", detector)
    app = create_app(service, repo_store, TOKEN)
    return TestClient(app), service


def _seed_alert(service, session_id="api-1"):
    session = flayer_session(session_id)
    service.ingest([session])
    return service.process_session(session_id)


def test_health_is_open(api):
    client, _ = api
    assert client.get("/healthz").json() == {"status": "ok"}


def test_all_endpoints_require_bearer_token(api):
    client, _ = api
    checks = [
        ("get", "/v1/alerts", None),
        ("get", "/v1/alerts/x", None),
        ("post", "/v1/alerts/x/label", {"label": "TP", "analyst_id": "a"}),
        ("get", "/v1/sessions/x", None),
        ("get", "/v1/threat-repo", None),
        ("post", "/v1/threat-repo/ADR.T0001/guidance", {"text": "x"}),
        ("get", "/v1/stats", None),
        ("post", "/v1/telemetry/sessions", []),
        ("post", "/v1/mcp", {"tool": "get_policies"}),
    ]
    for method, path, body in checks:
        response = getattr(client, method)(path, json=body) if body is not None else getattr(
            client, method
        )(path)
        assert response.status_code == 401, path


def test_ingest_endpoint_round_trip(api):
    client, service = api
    payload = [session_to_dict(make_session(session_id="ing-1"))]
    response = client.post("/v1/telemetry/sessions", json=payload, headers=HEADERS)
    assert response.json() == {"accepted": 1, "duplicates": 0, "invalid": []}
    again = client.post("/v1/telemetry/sessions", json=payload, headers=HEADERS)
    assert again.json()["duplicates"] == 1


def test_alert_listing_filters_and_detail(api):
    client, service = api
    alert = _seed_alert(service)
    listing = client.get("/v1/alerts", headers=HEADERS).json()
    assert listing["total"] == 1
    row = listing["alerts"][0]
    assert row["severity"] == "critical" and row["state"] == "open"

    filtered = client.get("/v1/alerts?state=labeled", headers=HEADERS).json()
    assert filtered["total"] == 0

    detail = client.get(f"/v1/alerts/{alert.alert_id}", headers=HEADERS).json()
    assert detail["verdict"]["technique_ids"] == ["ADR.T0002"]
    assert client.get("/v1/alerts/alert-ghost", headers=HEADERS).status_code == 404


def test_label_endpoint_round_trip(api):
    client, service = api
    alert = _seed_alert(service)
    response = client.post(
        f"/v1/alerts/{alert.alert_id}/label",
        json={"label": "TPNM", "analyst_id": "ana", "note": "red-team exercise"},
        headers=HEADERS,
    )
    assert response.status_code == 200
    body = response.json()
    assert body["state"] == "labeled"
    assert body["label"]["label"] == "TPNM"
    assert body["label"]["note"] == "red-team exercise"
    # persisted across a reread
    detail = client.get(f"/v1/alerts/{alert.alert_id}", headers=HEADERS).json()
    assert detail["label"]["label"] == "TPNM"


def test_session_endpoint_returns_chain_and_verdict(api):
    client, service = api
    _seed_alert(service, "api-sess")
    body = client.get("/v1/sessions/api-sess", headers=HEADERS).json()
    assert body["session"]["session_id"] == "api-sess"
    assert len(body["session"]["tool_calls"]) == 3
    assert body["verdict"]["decision"] == "malicious"
    assert client.get("/v1/sessions/ghost", headers=HEADERS).status_code == 404


def test_guidance_curation_visible_in_repo(api):
    client, _ = api
    text = "Malicious: Monitor ticket flows that mirror the sandbox replay fixtures."
    response = client.post(
        "/v1/threat-repo/ADR.T0002/guidance",
        json={"text": text, "analyst_id": "ana"},
        headers=HEADERS,
    )
    assert response.status_code == 200
    repo = client.get("/v1/threat-repo", headers=HEADERS).json()
    techniques = [
        t
        for tactic in repo["threat_framework"]["tactics"].values()
        for t in tactic["techniques"]
    ]
    target = next(t for t in techniques if t["id"] == "ADR.T0002")
    assert {"text": text, "tag": "CURATED"} in target["detection_guidance"]
    # unknown technique and duplicates are errors
    assert (
        client.post(
            "/v1/threat-repo/ADR.T9999/guidance",
            json={"text": "x", "analyst_id": "ana"},
            headers=HEADERS,
        ).status_code
        == 404
    )
    assert (
        client.post(
            "/v1/threat-repo/ADR.T0002/guidance",
            json={"text": text, "analyst_id": "ana"},
            headers=HEADERS,
        ).status_code
        == 409
    )


def test_stats_endpoint(api):
    client, service = api
    _seed_alert(service, "api-stats")
    stats = client.get("/v1/stats?window=24h", headers=HEADERS).json()
    assert stats["window"] == "24h"
    assert stats["alerts_total"] == 1


def test_mcp_endpoint_tool_names(api):
    client, _ = api
    source = client.post(
        "/v1/mcp",
        json={"tool": "get_source_code",
              "arguments": {"server_name": "files", "tool_name": "read_file"}},
        headers=HEADERS,
    ).json()
    assert "def read_file" in source["content"]["source_text"]

    threats = client.post(
        "/v1/mcp", json={"tool": "get_threat_framework", "arguments": {"query": "prompt injection"}},
        headers=HEADERS,
    ).json()
    assert any(t["id"] == "ADR.T0002" for t in threats["content"]["techniques"])

    policies = client.post(
        "/v1/mcp", json={"tool": "get_policies", "arguments": {}}, headers=HEADERS
    ).json()
    assert len(policies["content"]["policies"]) == 4

    violations = client.post(
        "/v1/mcp",
        json={
            "tool": "assess_policy_violations",
            "arguments": {"session": session_to_dict(flayer_session("mcp-x"))},
        },
        headers=HEADERS,
    ).json()
    assert violations["content"]["violations"]

    unknown = client.post(
        "/v1/mcp", json={"tool": "made_up", "arguments": {}}, headers=HEADERS
    )
    assert unknown.status_code == 404
