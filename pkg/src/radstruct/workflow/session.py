"""Session snapshot document, typed adapters, and the event reducer.

The audit log is the source of truth: a session snapshot is nothing but
``fold(reduce_event, events)``, and every mutating operation appends
events whose payloads carry the resulting values (never recomputed at
replay time).  Snapshots are plain JSON documents; typed objects are
projected out of them on demand.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Any, Optional

from radstruct.checks import ConsistencyIssue, Severity
from radstruct.errors import IntegrityError
from radstruct.evidence import EvidenceObject, EvidenceObjectKind, EvidenceStore
from radstruct.model.canonical import finding_from_doc, study_from_doc
from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    ChangeStatus,
    EvidenceKind,
    EvidenceRef,
    Laterality,
    Measurement,
    MeasurementKind,
    Modality,
    Presence,
    PriorStudyRef,
    Provenance,
    ProvenanceSource,
    ReportDocument,
    ReportSection,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    StudyContext,
)
from radstruct.templates.engine import TemplateMatch
from radstruct.tracking import ComparisonRow, LesionPairing, MatchProposal

SESSION_STATES = ("created", "parsed", "under_review", "approved", "exported", "rejected")

EVENT_KINDS = (
    "ingested",
    "template_selected",
    "transcript_submitted",
    "entity_extracted",
    "evidence_linked",
    "finding_edited",
    "suggestion_accepted",
    "suggestion_rejected",
    "issue_acknowledged",
    "approved",
    "exported",
    "ai_module_invoked",
)


@dataclass(frozen=True)
class Actor:
    id: str
    role: ActorRole


# ---------------------------------------------------------------------------
# doc <-> typed adapters for the pieces the canonical codec does not cover
# ---------------------------------------------------------------------------

def evidence_ref_to_doc(ref: EvidenceRef) -> dict:
    doc: dict[str, Any] = {"kind": ref.kind.value}
    if ref.series is not None:
        doc["series"] = ref.series
    if ref.image is not None:
        doc["image"] = ref.image
    if ref.object_id is not None:
        doc["object_id"] = ref.object_id
    if ref.prior:
        doc["prior"] = True
    return doc


def evidence_ref_from_doc(doc: dict) -> EvidenceRef:
    return EvidenceRef(
        EvidenceKind(doc["kind"]),
        series=doc.get("series"),
        image=doc.get("image"),
        object_id=doc.get("object_id"),
        prior=bool(doc.get("prior", False)),
    )


def measurement_to_doc(m: Measurement) -> dict:
    doc: dict[str, Any] = {"value": m.value, "unit": m.unit, "kind": m.kind.value}
    if m.dimensions is not None:
        doc["dimensions"] = list(m.dimensions)
    return doc


def measurement_from_doc(doc: dict) -> Measurement:
    dims = tuple(doc["dimensions"]) if "dimensions" in doc else None
    return Measurement(doc["value"], doc["unit"], MeasurementKind(doc["kind"]), dims)


def template_match_to_doc(match: TemplateMatch) -> dict:
    return {
        "template_id": match.template_id,
        "version": match.version,
        "score": match.score,
        "mismatches": list(match.mismatches),
    }


def template_match_from_doc(doc: dict) -> TemplateMatch:
    return TemplateMatch(doc["template_id"], doc["version"], doc["score"], tuple(doc["mismatches"]))


def issue_to_doc(issue: ConsistencyIssue) -> dict:
    return {
        "rule_id": issue.rule_id,
        "severity": issue.severity.value,
        "target": issue.target,
        "message": issue.message,
        "issue_id": issue.issue_id,
    }


def issue_from_doc(doc: dict) -> ConsistencyIssue:
    return ConsistencyIssue(doc["rule_id"], Severity(doc["severity"]), doc["target"], doc["message"])


def comparison_row_to_doc(row: ComparisonRow) -> dict:
    doc: dict[str, Any] = {
        "lesion_id": row.lesion_id,
        "location": {
            **({"anatomical_site": row.location.anatomical_site} if row.location.anatomical_site else {}),
            "laterality": row.location.laterality.value,
        },
        "status": row.status.value,
        "warnings": list(row.warnings),
        "confirmed": row.confirmed,
        "display": row.display(),
    }
    if row.finding_id is not None:
        doc["finding_id"] = row.finding_id
    if row.current_size is not None:
        doc["current_size"] = measurement_to_doc(row.current_size)
    if row.current_evidence:
        doc["current_evidence"] = [evidence_ref_to_doc(r) for r in row.current_evidence]
    if row.prior_size is not None:
        doc["prior_size"] = measurement_to_doc(row.prior_size)
    if row.prior_evidence:
        doc["prior_evidence"] = [evidence_ref_to_doc(r) for r in row.prior_evidence]
    if row.prior_exam_date is not None:
        doc["prior_exam_date"] = row.prior_exam_date.isoformat()
    return doc


def comparison_row_from_doc(doc: dict) -> ComparisonRow:
    return ComparisonRow(
        lesion_id=doc["lesion_id"],
        location=AnatomicLocation(
            anatomical_site=doc["location"].get("anatomical_site"),
            laterality=Laterality(doc["location"]["laterality"]),
        ),
        status=ChangeStatus(doc["status"]),
        current_size=measurement_from_doc(doc["current_size"]) if "current_size" in doc else None,
        current_evidence=tuple(evidence_ref_from_doc(r) for r in doc.get("current_evidence", [])),
        prior_size=measurement_from_doc(doc["prior_size"]) if "prior_size" in doc else None,
        prior_evidence=tuple(evidence_ref_from_doc(r) for r in doc.get("prior_evidence", [])),
        prior_exam_date=dt.date.fromisoformat(doc["prior_exam_date"]) if "prior_exam_date" in doc else None,
        warnings=tuple(doc.get("warnings", [])),
        finding_id=doc.get("finding_id"),
        confirmed=bool(doc.get("confirmed", False)),
    )


def proposal_to_doc(proposal: MatchProposal) -> dict:
    return {
        "pairings": [
            {
                "finding_id": p.finding_id,
                **({"lesion_id": p.lesion_id} if p.lesion_id is not None else {}),
                "ambiguous": p.ambiguous,
                "confirmed": p.confirmed,
            }
            for p in proposal.pairings
        ],
        "resolved_candidates": list(proposal.resolved_candidates),
    }


def proposal_from_doc(doc: dict) -> MatchProposal:
    return MatchProposal(
        pairings=tuple(
            LesionPairing(
                p["finding_id"], p.get("lesion_id"), bool(p.get("ambiguous", False)), bool(p.get("confirmed", False))
            )
            for p in doc.get("pairings", [])
        ),
        resolved_candidates=tuple(doc.get("resolved_candidates", [])),
    )


def prior_ref_to_doc(ref: PriorStudyRef) -> dict:
    doc: dict[str, Any] = {
        "study_uid": ref.study_uid,
        "exam_date": ref.exam_date.isoformat(),
        "modality": ref.modality.value,
    }
    if ref.protocol is not None:
        doc["protocol"] = ref.protocol
    return doc


def prior_ref_from_doc(doc: dict) -> PriorStudyRef:
    return PriorStudyRef(
        study_uid=doc["study_uid"],
        exam_date=dt.date.fromisoformat(doc["exam_date"]),
        modality=Modality(doc["modality"]),
        protocol=doc.get("protocol"),
    )


def provenance_to_doc(p: Provenance) -> dict:
    doc: dict[str, Any] = {"reviewer_role": p.actor_role.value, "review_status": p.review_status.value}
    if p.source is not None:
        doc["source"] = p.source.value
    if p.timestamp is not None:
        doc["timestamp"] = p.timestamp.isoformat()
    if p.model_version is not None:
        doc["model_version"] = p.model_version
    return doc


def provenance_from_doc(doc: dict) -> Provenance:
    return Provenance(
        actor_role=ActorRole(doc["reviewer_role"]),
        review_status=ReviewStatus(doc["review_status"]),
        source=ProvenanceSource(doc["source"]) if "source" in doc else None,
        timestamp=dt.datetime.fromisoformat(doc["timestamp"]) if "timestamp" in doc else None,
        model_version=doc.get("model_version"),
    )


def evidence_object_to_doc(obj: EvidenceObject) -> dict:
    return {
        "object_id": obj.object_id,
        "kind": obj.kind.value,
        "payload": obj.payload,
        "source": provenance_to_doc(obj.source),
    }


def evidence_object_from_doc(doc: dict) -> EvidenceObject:
    return EvidenceObject(
        object_id=doc["object_id"],
        kind=EvidenceObjectKind(doc["kind"]),
        payload=doc["payload"],
        source=provenance_from_doc(doc["source"]),
    )


# ---------------------------------------------------------------------------
# typed projections of a snapshot document
# ---------------------------------------------------------------------------

def findings_from_snapshot(doc: dict) -> tuple[StructuredFinding, ...]:
    return tuple(finding_from_doc(item, path=f"findings[{i}]") for i, item in enumerate(doc.get("findings", [])))


def study_from_snapshot(doc: dict) -> StudyContext:
    study, _ = study_from_doc(doc["study"])
    return study


def report_from_snapshot(doc: dict) -> ReportDocument:
    sections = tuple(
        ReportSection(SectionName(s["name"]), s["text"]) for s in doc.get("report_sections", [])
    )
    return ReportDocument(sections=sections, structured_findings=findings_from_snapshot(doc))


def rows_from_snapshot(doc: dict) -> tuple[ComparisonRow, ...]:
    return tuple(comparison_row_from_doc(r) for r in doc.get("comparison_rows", []))


def issues_from_snapshot(doc: dict) -> list[ConsistencyIssue]:
    return [issue_from_doc(i) for i in doc.get("issues", [])]


def evidence_store_from_snapshot(doc: dict) -> EvidenceStore:
    store = EvidenceStore()
    for item in doc.get("evidence_objects", []):
        store.ingest(evidence_object_from_doc(item))
    return store


def active_findings(doc: dict) -> tuple[StructuredFinding, ...]:
    """Findings that participate in narrative and export (not rejected)."""
    return tuple(
        f for f in findings_from_snapshot(doc) if f.provenance.review_status is not ReviewStatus.REJECTED
    )


# ---------------------------------------------------------------------------
# the reducer
# ---------------------------------------------------------------------------

def new_event(
    seq: int,
    kind: str,
    actor: Actor,
    payload: dict,
    versions: dict,
    timestamp: Optional[dt.datetime] = None,
) -> dict:
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {kind}")
    return {
        "seq": seq,
        "timestamp": (timestamp or dt.datetime.now(dt.timezone.utc)).isoformat(),
        "actor": {"id": actor.id, "role": actor.role.value},
        "kind": kind,
        "payload": payload,
        "versions": versions,
    }


def reduce_event(doc: Optional[dict], event: dict) -> dict:
    """Apply one audit event to a snapshot document (pure)."""
    kind = event["kind"]
    payload = event["payload"]
    if doc is None:
        if kind != "ingested" or payload.get("what") != "study":
            raise IntegrityError("log must start with a study ingestion event")
        doc = {
            "schema_version": "1.0",
            "session_id": payload["session_id"],
            "state": "created",
            "study": payload["study"],
            "template": None,
            "transcript": None,
            "extraction": None,
            "findings": [],
            "evidence_objects": [],
            "evidence_links": [],
            "proposal": None,
            "comparison_rows": [],
            "confirmed_prior": None,
            "report_sections": [],
            "impression_items": [],
            "issues": [],
            "acknowledgments": [],
            "composition_notes": [],
            "critical_flag": False,
            "exports": None,
            "registry_file": None,
        }
        return doc

    doc = dict(doc)  # shallow copy; replaced keys get fresh values
    if kind == "ingested":
        what = payload.get("what")
        if what == "evidence_object":
            doc["evidence_objects"] = doc["evidence_objects"] + [payload["object"]]
        elif what == "lesion_registry":
            doc["registry_file"] = payload["file"]
        else:
            raise IntegrityError("study can only be ingested once")
    elif kind == "template_selected":
        doc["template"] = payload["match"]
    elif kind == "transcript_submitted":
        doc["transcript"] = payload["text"]
    elif kind == "entity_extracted":
        doc["extraction"] = payload["extraction"]
        doc["findings"] = payload["findings"]
        doc["proposal"] = payload["proposal"]
        doc["comparison_rows"] = payload["comparison_rows"]
        doc["confirmed_prior"] = payload.get("confirmed_prior")
        doc["issues"] = payload["issues"]
        doc["report_sections"] = []
        doc["impression_items"] = []
        doc["acknowledgments"] = []
    elif kind == "evidence_linked":
        doc["findings"] = payload["findings"]
        doc["evidence_links"] = doc["evidence_links"] + [payload["link"]]
        doc["issues"] = payload["issues"]
    elif kind == "finding_edited":
        doc["findings"] = payload["findings"]
        doc["issues"] = payload["issues"]
    elif kind == "suggestion_accepted":
        action = payload["action"]
        if action == "comparison_confirmed":
            doc["findings"] = payload["findings"]
            doc["proposal"] = payload["proposal"]
            doc["comparison_rows"] = payload["comparison_rows"]
            doc["confirmed_prior"] = payload.get("confirmed_prior")
            doc["issues"] = payload["issues"]
        elif action == "draft":
            doc["findings"] = payload["findings"]
            doc["report_sections"] = payload["report_sections"]
            doc["impression_items"] = payload["impression_items"]
            doc["composition_notes"] = payload["composition_notes"]
            doc["issues"] = payload["issues"]
        elif action == "review_finding":
            doc["findings"] = payload["findings"]
            doc["issues"] = payload["issues"]
        else:
            raise IntegrityError(f"unknown suggestion_accepted action {action!r}")
    elif kind == "suggestion_rejected":
        action = payload["action"]
        if action == "review_finding":
            doc["findings"] = payload["findings"]
            doc["issues"] = payload["issues"]
        elif action == "session_rejected":
            pass  # state change applied below
        else:
            raise IntegrityError(f"unknown suggestion_rejected action {action!r}")
    elif kind == "issue_acknowledged":
        doc["acknowledgments"] = doc["acknowledgments"] + [payload["acknowledgment"]]
    elif kind == "approved":
        doc["findings"] = payload["findings"]
        doc["issues"] = payload["issues"]
    elif kind == "exported":
        doc["exports"] = payload["files"]
    elif kind == "ai_module_invoked":
        doc["evidence_objects"] = doc["evidence_objects"] + payload.get("evidence_objects", [])
        doc["findings"] = doc["findings"] + payload.get("candidate_findings", [])
        if "issues" in payload:
            doc["issues"] = payload["issues"]
    else:
        raise IntegrityError(f"unknown event kind {kind!r}")

    if "state_after" in payload:
        doc["state"] = payload["state_after"]
    return doc


def replay(events: list[dict]) -> Optional[dict]:
    """Fold the audit log; seq must be 1..n with no gaps."""
    doc: Optional[dict] = None
    expected = 1
    for event in events:
        if event["seq"] != expected:
            raise IntegrityError(
                f"audit log integrity: expected seq {expected}, found {event['seq']}",
                target=str(event["seq"]),
            )
        expected += 1
        doc = reduce_event(doc, event)
    return doc
