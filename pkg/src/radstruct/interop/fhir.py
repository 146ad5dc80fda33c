"""FHIR-R4-shaped export and import.

Resources are built as plain dicts (no FHIR library) against the shipped
structural schema: one DiagnosticReport, one ImagingStudy reference, one
Observation per structured finding.  Output is deterministic and decimal
values are written as exact decimal literals.
"""

from __future__ import annotations

import base64
import datetime as dt
from decimal import Decimal
from typing import Any, Optional

from radstruct.errors import DimensionMismatch, DocumentImportError, UnknownUnit
from radstruct.interop.schemas import validate_document
from radstruct.interop.view import ExportView
from radstruct.model import units
from radstruct.model.types import (
    ActorRole,
    AnatomicLocation,
    ChangeStatus,
    CodedConcept,
    CodeSystem,
    Comparison,
    EvidenceKind,
    EvidenceRef,
    FinalSentence,
    Laterality,
    Measurement,
    MeasurementKind,
    Presence,
    Provenance,
    ProvenanceSource,
    ReportSection,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    TerminologyBinding,
)

UCUM_SYSTEM = "http://unitsofmeasure.org"
_SYSTEM_URIS = {
    CodeSystem.LOCAL: "local",
    CodeSystem.RADLEX: "http://radlex.org",
    CodeSystem.SNOMED_CT: "http://snomed.info/sct",
    CodeSystem.LOINC: "http://loinc.org",
}
_URI_SYSTEMS = {v: k for k, v in _SYSTEM_URIS.items()}

FINDING_TYPE_SYSTEM = "local-finding-type"
SITE_SYSTEM = "local-anatomical-site"
LATERALITY_SYSTEM = "local-laterality"
ATTRIBUTE_SYSTEM = "local-attribute"
KIND_SYSTEM = "local-measurement-kind"
EVIDENCE_SYSTEM = "local-evidence"
TRACKING_SYSTEM = "local-tracking"


def _quantity(m: Measurement) -> dict:
    return {"value": m.value, "unit": m.unit, "system": UCUM_SYSTEM, "code": m.unit}


def _evidence_token(ref: EvidenceRef) -> str:
    if ref.kind is EvidenceKind.IMAGE:
        token = f"image:{ref.series}:{ref.image}"
    else:
        token = f"{ref.kind.value}:{ref.object_id}"
    return token + (":prior" if ref.prior else "")


def _evidence_from_token(token: str, path: str) -> EvidenceRef:
    parts = token.split(":")
    prior = parts[-1] == "prior"
    if prior:
        parts = parts[:-1]
    try:
        if parts[0] == "image":
            return EvidenceRef(EvidenceKind.IMAGE, series=int(parts[1]), image=int(parts[2]), prior=prior)
        return EvidenceRef(EvidenceKind(parts[0]), object_id=":".join(parts[1:]), prior=prior)
    except (ValueError, IndexError):
        raise DocumentImportError(f"bad evidence token {token!r}", target=path)


def _observation(finding: StructuredFinding, tracking_id: str) -> dict:
    code_codings: list[dict] = []
    if finding.terminology.finding_code is not None:
        concept = finding.terminology.finding_code
        code_codings.append({"system": _SYSTEM_URIS[concept.system], "code": concept.code})
    code_codings.append({"system": FINDING_TYPE_SYSTEM, "code": finding.type})
    obs: dict[str, Any] = {
        "resourceType": "Observation",
        "id": finding.finding_id,
        "status": "final",
        "identifier": [{"system": TRACKING_SYSTEM, "value": tracking_id}],
        "code": {"coding": code_codings, "text": finding.type.replace("_", " ")},
    }

    site_codings: list[dict] = []
    if finding.terminology.anatomy_code is not None:
        concept = finding.terminology.anatomy_code
        site_codings.append({"system": _SYSTEM_URIS[concept.system], "code": concept.code})
    if finding.location.anatomical_site:
        site_codings.append({"system": SITE_SYSTEM, "code": finding.location.anatomical_site})
    site_codings.append({"system": LATERALITY_SYSTEM, "code": finding.location.laterality.value})
    obs["bodySite"] = {"coding": site_codings, "text": finding.location.display() or "unspecified"}

    measurements = finding.measurements()
    primary = measurements.get("size") or next(iter(measurements.values()), None)
    if primary is not None:
        obs["valueQuantity"] = _quantity(primary)
    if finding.presence is Presence.ABSENT:
        obs["interpretation"] = [{"coding": [{"system": "local", "code": "absent"}]}]

    components = []
    for key in sorted(finding.attributes):
        value = finding.attributes[key]
        if isinstance(value, Measurement):
            components.append(
                {
                    "code": {
                        "coding": [
                            {"system": ATTRIBUTE_SYSTEM, "code": key},
                            {"system": KIND_SYSTEM, "code": value.kind.value},
                        ]
                    },
                    "valueQuantity": _quantity(value),
                }
            )
        else:
            components.append(
                {"code": {"coding": [{"system": ATTRIBUTE_SYSTEM, "code": key}]}, "valueString": value}
            )
    if finding.comparison is not None:
        components.append(
            {
                "code": {"coding": [{"system": ATTRIBUTE_SYSTEM, "code": "change"}]},
                "valueString": finding.comparison.change.value,
            }
        )
    components.append(
        {
            "code": {"coding": [{"system": ATTRIBUTE_SYSTEM, "code": "review_status"}]},
            "valueString": finding.provenance.review_status.value,
        }
    )
    obs["component"] = components

    if finding.evidence:
        obs["derivedFrom"] = [
            {"display": ref.display(), "identifier": {"system": EVIDENCE_SYSTEM, "value": _evidence_token(ref)}}
            for ref in finding.evidence
        ]
    if finding.final_sentence is not None:
        obs["note"] = [{"text": finding.final_sentence.sentence}]
    return obs


def _imaging_study(view: ExportView) -> dict:
    series_map: dict[int, set[int]] = {}
    for finding in view.findings:
        for ref in finding.evidence:
            if ref.kind is EvidenceKind.IMAGE and not ref.prior:
                series_map.setdefault(ref.series, set()).add(ref.image)
    return {
        "resourceType": "ImagingStudy",
        "id": f"study-{view.document_id()}",
        "status": "available",
        "identifier": [{"system": "urn:dicom:uid", "value": f"urn:oid:{view.ctx.study_uid}"}],
        "started": view.ctx.exam_date.isoformat(),
        "modality": [
            {"system": "http://dicom.nema.org/resources/ontology/DCM", "code": view.ctx.modality.value}
        ],
        "series": [
            {"number": number, "instance": [{"number": i} for i in sorted(instances)]}
            for number, instances in sorted(series_map.items())
        ],
    }


def export_fhir(view: ExportView) -> dict:
    """Encode an approved session as a FHIR-shaped bundle document."""
    view.require_exportable()
    report_id = f"report-{view.document_id()}"
    observations = [_observation(f, view.tracking_id(f.finding_id)) for f in view.findings]
    diagnostic_report: dict[str, Any] = {
        "resourceType": "DiagnosticReport",
        "id": report_id,
        "status": "final",
        "code": {
            "coding": [{"system": "local-template", "code": view.template_id}],
            "text": view.template_name or view.template_id,
        },
        "effectiveDateTime": view.ctx.exam_date.isoformat(),
        "imagingStudy": [{"reference": f"ImagingStudy/study-{view.document_id()}"}],
        "result": [{"reference": f"Observation/{o['id']}"} for o in observations],
        "presentedForm": [
            {
                "contentType": "text/plain",
                "title": section.name.value,
                "data": base64.b64encode(section.text.encode("utf-8")).decode("ascii"),
            }
            for section in view.report.sections
        ],
    }
    if view.critical_flag:
        diagnostic_report["extension"] = [
            {"url": "local-critical-result-flag", "valueBoolean": True}
        ]
    bundle = {
        "resourceType": "Bundle",
        "type": "collection",
        "entry": [{"resource": diagnostic_report}, {"resource": _imaging_study(view)}]
        + [{"resource": o} for o in observations],
    }
    validate_document(bundle, "fhir_bundle")
    return bundle


# ---------------------------------------------------------------------------
# import side
# ---------------------------------------------------------------------------

def _concept_from_coding(coding: dict) -> Optional[CodedConcept]:
    system = _URI_SYSTEMS.get(coding.get("system"))
    if system is None:
        return None
    return CodedConcept(system, coding["code"])


def _coding_value(concept: dict, system: str) -> Optional[str]:
    for coding in concept.get("coding", []):
        if coding.get("system") == system:
            return coding.get("code")
    return None


def _measurement_from_quantity(q: dict, kind: MeasurementKind, path: str) -> Measurement:
    value = q["value"]
    m = Measurement(value if isinstance(value, Decimal) else Decimal(str(value)), q["code"], kind)
    try:
        units.validate_unit(m.unit, m.kind.value)
    except (UnknownUnit, DimensionMismatch) as exc:
        raise DocumentImportError(exc.message, target=path)
    return m


def _finding_from_observation(obs: dict, path: str, at: dt.datetime) -> StructuredFinding:
    attributes: dict[str, Any] = {}
    change = None
    review_status = ReviewStatus.APPROVED
    for i, component in enumerate(obs.get("component", [])):
        attr = _coding_value(component["code"], ATTRIBUTE_SYSTEM)
        if attr is None:
            continue
        if "valueQuantity" in component:
            kind_code = _coding_value(component["code"], KIND_SYSTEM) or "linear"
            attributes[attr] = _measurement_from_quantity(
                component["valueQuantity"], MeasurementKind(kind_code), f"{path}.component[{i}].valueQuantity"
            )
        elif attr == "change":
            change = component.get("valueString")
        elif attr == "review_status":
            review_status = ReviewStatus(component.get("valueString", "approved"))
        else:
            attributes[attr] = component.get("valueString", "")

    presence = Presence.PRESENT
    for interp in obs.get("interpretation", []):
        if _coding_value(interp, "local") == "absent":
            presence = Presence.ABSENT

    site = None
    laterality = Laterality.NOT_APPLICABLE
    anatomy_code = None
    body_site = obs.get("bodySite", {})
    if body_site:
        site = _coding_value(body_site, SITE_SYSTEM)
        laterality_code = _coding_value(body_site, LATERALITY_SYSTEM)
        if laterality_code:
            laterality = Laterality(laterality_code)
        for coding in body_site.get("coding", []):
            concept = _concept_from_coding(coding)
            if concept is not None:
                anatomy_code = concept
                break

    finding_type = _coding_value(obs["code"], FINDING_TYPE_SYSTEM)
    if finding_type is None:
        raise DocumentImportError("observation lacks a finding-type coding", target=f"{path}.code")
    finding_code = None
    for coding in obs["code"].get("coding", []):
        concept = _concept_from_coding(coding)
        if concept is not None:
            finding_code = concept
            break

    evidence = tuple(
        _evidence_from_token(item["identifier"]["value"], f"{path}.derivedFrom[{i}]")
        for i, item in enumerate(obs.get("derivedFrom", []))
    )

    comparison = None
    if change is not None:
        comparison = Comparison(change=ChangeStatus(change), prior_finding_id=obs["id"])

    primary = attributes.get("size") or next(
        (v for v in attributes.values() if isinstance(v, Measurement)), None
    )
    unit = primary.unit if isinstance(primary, Measurement) else "mm"
    final_sentence = None
    if obs.get("note"):
        final_sentence = FinalSentence(obs["note"][0]["text"], SectionName.FINDINGS)
    return StructuredFinding(
        finding_id=obs["id"],
        type=finding_type,
        presence=presence,
        location=AnatomicLocation(site, laterality),
        attributes=attributes,
        comparison=comparison,
        evidence=evidence,
        terminology=TerminologyBinding(unit=unit, finding_code=finding_code, anatomy_code=anatomy_code),
        provenance=Provenance(
            actor_role=ActorRole.RADIOLOGIST
            if review_status in (ReviewStatus.APPROVED, ReviewStatus.EDITED)
            else ActorRole.SYSTEM,
            review_status=review_status,
            source=ProvenanceSource.PRIOR_REPORT_PARSE,
            timestamp=at,
        ),
        final_sentence=final_sentence,
    )


def import_fhir(bundle: dict, at: Optional[dt.datetime] = None):
    """Decode a bundle back into findings and narrative sections."""
    validate_document(bundle, "fhir_bundle")
    at = at or dt.datetime.now(dt.timezone.utc)
    findings: list[StructuredFinding] = []
    sections: list[ReportSection] = []
    for i, entry in enumerate(bundle.get("entry", [])):
        resource = entry["resource"]
        if resource["resourceType"] == "Observation":
            findings.append(_finding_from_observation(resource, f"entry[{i}].resource", at))
        elif resource["resourceType"] == "DiagnosticReport":
            for form in resource.get("presentedForm", []):
                sections.append(
                    ReportSection(
                        SectionName(form["title"]),
                        base64.b64decode(form["data"]).decode("utf-8"),
                    )
                )
    return tuple(findings), tuple(sections)
