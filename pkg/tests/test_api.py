"""HTTP API: auth, endpoints, error envelopes, export downloads."""

from __future__ import annotations

import json
from decimal import Decimal

import pytest
from fastapi.testclient import TestClient

from radstruct.model.jsonio import loads_decimal
from radstruct.parsing import load_default_lexicons
from radstruct.policy import load_policy
from radstruct.templates import load_default_templates
from radstruct.workflow import Actor, EngineService, SessionStore, TokenAuth
from radstruct.workflow.api import create_app

from conftest import FIXTURES

CT = FIXTURES / "ct_nodule_followup"

RAD = {"Authorization": "Bearer tok-radiologist"}
SONO = {"Authorization": "Bearer tok-sonographer"}
SYS = {"Authorization": "Bearer tok-system"}


@pytest.fixture()
def client(tmp_path):
    service = EngineService(
        SessionStore(tmp_path), load_default_templates(), load_default_lexicons(), load_policy()
    )
    auth = TokenAuth.from_file(FIXTURES / "tokens.json")
    app = create_app(service, auth)
    with TestClient(app) as test_client:
        test_client.service = service
        yield test_client


def _create(client) -> str:
    body = {
        "study": json.loads((CT / "ctx.json").read_text()),
        "evidence_objects": json.loads((CT / "evidence.json").read_text()),
        "lesion_registry": json.loads((CT / "registry.json").read_text()),
    }
    response = client.post("/sessions", json=body, headers=SYS)
    assert response.status_code == 201, response.text
    return loads_decimal(response.text)["session_id"]


def _to_under_review(client, session_id: str) -> None:
    text = (CT / "transcript.txt").read_text()
    assert client.post(
        f"/sessions/{session_id}/transcript", json={"text": text}, headers=SYS
    ).status_code == 200
    assert client.post(
        f"/sessions/{session_id}/comparison-confirmations", headers=RAD
    ).status_code == 200
    assert client.post(f"/sessions/{session_id}/draft", headers=RAD).status_code == 200


def test_missing_token_is_401(client):
    response = client.get("/sessions")
    assert response.status_code == 401
    payload = response.json()
    assert payload["code"] == "unauthorized"


def test_full_http_flow(client):
    session_id = _create(client)
    _to_under_review(client, session_id)

    response = client.get(f"/sessions/{session_id}", headers=RAD)
    snapshot = loads_decimal(response.text)
    assert snapshot["state"] == "under_review"
    assert snapshot["issues"] == []
    # decimal fidelity over the wire
    nodule = snapshot["findings"][0]
    assert nodule["finding"]["attributes"]["size_mm"] == Decimal(7)

    assert client.post(f"/sessions/{session_id}/approve", headers=RAD).status_code == 200
    response = client.post(f"/sessions/{session_id}/export", headers=RAD)
    assert response.status_code == 200
    exported = loads_decimal(response.text)
    assert exported["state"] == "exported"

    fhir = client.get(f"/sessions/{session_id}/exports/fhir", headers=RAD)
    sr = client.get(f"/sessions/{session_id}/exports/sr", headers=RAD)
    assert fhir.status_code == 200 and sr.status_code == 200
    exports_dir = client.service.store.exports_dir(session_id)
    assert fhir.content == (exports_dir / exported["exports"]["fhir"]).read_bytes()
    assert sr.content == (exports_dir / exported["exports"]["sr"]).read_bytes()

    audit = loads_decimal(client.get(f"/sessions/{session_id}/audit", headers=RAD).text)
    kinds = [e["kind"] for e in audit["events"]]
    assert kinds[-2:] == ["approved", "exported"]


def test_export_blocked_before_approval_is_409(client):
    session_id = _create(client)
    response = client.post(f"/sessions/{session_id}/export", headers=RAD)
    assert response.status_code == 409
    assert response.json()["code"] == "export_blocked"


def test_approve_forbidden_for_sonographer(client):
    session_id = _create(client)
    _to_under_review(client, session_id)
    response = client.post(f"/sessions/{session_id}/approve", headers=SONO)
    assert response.status_code == 403


def test_patch_finding_edit_and_issue_refresh(client):
    session_id = _create(client)
    _to_under_review(client, session_id)
    response = client.patch(
        f"/sessions/{session_id}/findings/NODULE-01",
        json={"path": "attributes.size", "value": 9},
        headers=RAD,
    )
    assert response.status_code == 200
    snapshot = loads_decimal(response.text)
    assert any(i["rule_id"] == "C9" for i in snapshot["issues"])


def test_patch_finding_forbidden_for_sonographer(client):
    session_id = _create(client)
    _to_under_review(client, session_id)
    response = client.patch(
        f"/sessions/{session_id}/findings/NODULE-01",
        json={"path": "attributes.size", "value": 9},
        headers=SONO,
    )
    assert response.status_code == 403


def test_review_accept_endpoint(client):
    session_id = _create(client)
    text = (CT / "transcript.txt").read_text()
    client.post(f"/sessions/{session_id}/transcript", json={"text": text}, headers=SYS)
    response = client.patch(
        f"/sessions/{session_id}/findings/EFFUSION-01", json={"review": "accept"}, headers=RAD
    )
    assert response.status_code == 200
    snapshot = loads_decimal(response.text)
    effusion = next(
        f for f in snapshot["findings"] if f["finding"]["finding_id"] == "EFFUSION-01"
    )
    assert effusion["provenance"]["review_status"] == "approved"


def test_evidence_link_endpoint(client):
    session_id = _create(client)
    text = (CT / "transcript.txt").read_text()
    client.post(f"/sessions/{session_id}/transcript", json={"text": text}, headers=SYS)
    response = client.post(
        f"/sessions/{session_id}/evidence-links",
        json={"finding_id": "NODULE-01", "ref": {"kind": "segmentation_object", "object_id": "DICOM_SEG_NODULE_001"}},
        headers=RAD,
    )
    assert response.status_code == 200
    snapshot = loads_decimal(response.text)
    nodule = next(f for f in snapshot["findings"] if f["finding"]["finding_id"] == "NODULE-01")
    assert snapshot["evidence_links"][-1]["ref"]["object_id"] == "DICOM_SEG_NODULE_001"
    assert nodule["evidence"]["segmentation_object"] == "DICOM_SEG_NODULE_001"


def test_unknown_session_404(client):
    response = client.get("/sessions/RS-9999", headers=RAD)
    assert response.status_code == 404
    payload = response.json()
    assert payload["code"] == "not_found"


def test_acknowledgment_endpoint(client):
    session_id = _create(client)
    _to_under_review(client, session_id)
    client.patch(
        f"/sessions/{session_id}/findings/NODULE-01",
        json={"path": "attributes.morphology", "value": None},
        headers=RAD,
    )
    snapshot = loads_decimal(client.get(f"/sessions/{session_id}", headers=RAD).text)
    warning = next(i for i in snapshot["issues"] if i["severity"] == "warning")
    response = client.post(
        f"/sessions/{session_id}/acknowledgments",
        json={"issue_id": warning["issue_id"]},
        headers=RAD,
    )
    assert response.status_code == 200
    assert loads_decimal(response.text)["acknowledgments"][0]["issue_id"] == warning["issue_id"]


def test_duplicate_session_conflict_is_409(client):
    _create(client)
    response = client.post(
        "/sessions", json={"study": json.loads((CT / "ctx.json").read_text())}, headers=SYS
    )
    assert response.status_code == 409
    assert response.json()["code"] == "session_conflict"


def test_ai_module_endpoint(client):
    session_id = _create(client)
    text = (CT / "transcript.txt").read_text()
    client.post(f"/sessions/{session_id}/transcript", json={"text": text}, headers=SYS)
    response = client.post(f"/sessions/{session_id}/ai-modules/segmentation_proposer", headers=SYS)
    assert response.status_code == 200
    response = client.post(f"/sessions/{session_id}/ai-modules/bogus", headers=SYS)
    assert response.status_code == 404
