"""SR-measurement-report-shaped content tree export.

The document is a JSON content tree mirroring the DICOM SR measurement
report pattern: a report container holding one measurement group per
measured present finding, each with tracking identifiers, finding and
site codes, numeric items, and referenced images.  No binary encoding.
"""

from __future__ import annotations

import hashlib
from typing import Any

from radstruct.interop.schemas import validate_document
from radstruct.interop.view import ExportView
from radstruct.model.types import (
    CodedConcept,
    CodeSystem,
    EvidenceKind,
    Measurement,
    Presence,
    StructuredFinding,
)

_CODES = {
    "report": {"scheme": "DCM", "code": "126000", "meaning": "Imaging Measurement Report"},
    "measurements": {"scheme": "DCM", "code": "126010", "meaning": "Imaging Measurements"},
    "group": {"scheme": "DCM", "code": "125007", "meaning": "Measurement Group"},
    "tracking_id": {"scheme": "DCM", "code": "112039", "meaning": "Tracking Identifier"},
    "tracking_uid": {"scheme": "DCM", "code": "112040", "meaning": "Tracking Unique Identifier"},
    "finding": {"scheme": "DCM", "code": "121071", "meaning": "Finding"},
    "finding_site": {"scheme": "SRT", "code": "G-C0E3", "meaning": "Finding Site"},
    "laterality": {"scheme": "SRT", "code": "G-C171", "meaning": "Laterality"},
    "image": {"scheme": "local", "code": "referenced_image", "meaning": "Referenced image"},
    "object": {"scheme": "local", "code": "referenced_object", "meaning": "Referenced object"},
}


def tracking_uid(study_uid: str, tracking_identifier: str) -> str:
    """Deterministic UID in the 2.25 arc for a (study, lesion) pair."""
    digest = hashlib.sha256(f"{study_uid}|{tracking_identifier}".encode("utf-8")).hexdigest()
    return f"2.25.{int(digest[:30], 16)}"


def _concept_value(concept: CodedConcept | None, meaning: str) -> dict:
    if concept is None:
        return {"scheme": "local", "code": meaning.replace(" ", "_"), "meaning": meaning}
    scheme = "local" if concept.system is CodeSystem.LOCAL else concept.system.value
    return {"scheme": scheme, "code": concept.code, "meaning": meaning}


def _group(finding: StructuredFinding, view: ExportView) -> dict:
    identifier = view.tracking_id(finding.finding_id)
    children: list[dict[str, Any]] = [
        {"value_type": "TEXT", "concept": _CODES["tracking_id"], "value": identifier},
        {
            "value_type": "UIDREF",
            "concept": _CODES["tracking_uid"],
            "value": tracking_uid(view.ctx.study_uid, identifier),
        },
        {
            "value_type": "CODE",
            "concept": _CODES["finding"],
            "value": _concept_value(finding.terminology.finding_code, finding.type.replace("_", " ")),
        },
    ]
    if finding.location.anatomical_site:
        children.append(
            {
                "value_type": "CODE",
                "concept": _CODES["finding_site"],
                "value": _concept_value(finding.terminology.anatomy_code, finding.location.display()),
                "modifiers": [
                    {
                        "concept": _CODES["laterality"],
                        "value": {
                            "scheme": "local",
                            "code": finding.location.laterality.value,
                            "meaning": finding.location.laterality.value,
                        },
                    }
                ],
            }
        )
    for key in sorted(finding.attributes):
        value = finding.attributes[key]
        if isinstance(value, Measurement):
            children.append(
                {
                    "value_type": "NUM",
                    "concept": {"scheme": "local-attribute", "code": key, "meaning": key.replace("_", " ")},
                    "measured_value": {"value": value.value, "unit": value.unit, "kind": value.kind.value},
                }
            )
    for ref in finding.evidence:
        if ref.kind is EvidenceKind.IMAGE:
            item: dict[str, Any] = {
                "value_type": "IMAGE",
                "concept": _CODES["image"],
                "series": ref.series,
                "image": ref.image,
            }
            if ref.prior:
                item["prior"] = True
            children.append(item)
        else:
            item = {
                "value_type": "COMPOSITE",
                "concept": _CODES["object"],
                "object_id": ref.object_id,
                "kind": ref.kind.value,
            }
            if ref.prior:
                item["prior"] = True
            children.append(item)
    return {"value_type": "CONTAINER", "concept": _CODES["group"], "children": children}


def export_sr(view: ExportView) -> dict:
    """Encode the approved session's measured findings as a content tree."""
    view.require_exportable()
    groups = [
        _group(f, view)
        for f in view.findings
        if f.presence is Presence.PRESENT and f.measurements()
    ]
    doc = {
        "schema_version": "1.0",
        "document": "sr_measurement_report",
        "study_uid": view.ctx.study_uid,
        "content": {
            "value_type": "CONTAINER",
            "concept": _CODES["report"],
            "children": [
                {"value_type": "CONTAINER", "concept": _CODES["measurements"], "children": groups}
            ],
        },
    }
    validate_document(doc, "sr_measurement_report")
    return doc
