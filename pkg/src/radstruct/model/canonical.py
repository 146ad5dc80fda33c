"""Canonical interchange document: serialize and parse.

One document carries one study context, the bound template id, and one
structured finding, laid out as::

    {
      "schema_version": "1.0",
      "study": {...},
      "finding": {...},
      "evidence": {...},
      "terminology": {...},
      "provenance": {...},
      "final_report_text": {...}
    }

Writing is deterministic (fixed key order, exact decimals) and
``parse(serialize(x)) == x`` holds field-for-field.  Parsing rejects
unknown keys and re-validates every model invariant, naming the failing
field path.
"""

from __future__ import annotations

import datetime as dt
from decimal import Decimal
from typing import Any, Optional

from radstruct.errors import ModelValidationError
from radstruct.model import units
from radstruct.model.jsonio import dumps_canonical, loads_decimal
from radstruct.model.types import (
    AnatomicLocation,
    CanonicalFragment,
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
    Modality,
    PartialDate,
    Presence,
    PriorStudyRef,
    Provenance,
    ActorRole,
    ProvenanceSource,
    ReviewStatus,
    SectionName,
    StructuredFinding,
    StudyContext,
    TerminologyBinding,
    Uncertainty,
)

SCHEMA_VERSION = "1.0"

# units that may be folded into an attribute key, e.g. "size_mm": 7
_SUFFIX_UNITS = {
    "mm": MeasurementKind.LINEAR,
    "cm": MeasurementKind.LINEAR,
    "mm2": MeasurementKind.AREA,
    "cm2": MeasurementKind.AREA,
    "mm3": MeasurementKind.VOLUME,
    "cm3": MeasurementKind.VOLUME,
    "mL": MeasurementKind.VOLUME,
}


def _fail(path: str, message: str) -> ModelValidationError:
    return ModelValidationError(f"{path}: {message}", target=path)


def _require_keys(doc: dict, allowed: dict[str, bool], path: str) -> None:
    """Check a block against its schema: reject unknown, require mandatory."""
    for key in doc:
        if key not in allowed:
            raise _fail(f"{path}.{key}", "unknown key")
    for key, required in allowed.items():
        if required and key not in doc:
            raise _fail(f"{path}.{key}", "missing required key")


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise _fail(path, f"expected string, got {type(value).__name__}")
    return value


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, f"expected integer, got {type(value).__name__}")
    return value


def _as_decimal(value, path: str) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, (int, Decimal)):
        raise _fail(path, f"expected number, got {type(value).__name__}")
    return value if isinstance(value, Decimal) else Decimal(value)


def _as_enum(enum_cls, value, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise _fail(path, f"{value!r} is not one of: {allowed}")


# ---------------------------------------------------------------------------
# write side
# ---------------------------------------------------------------------------

def _measurement_entry(name: str, m: Measurement) -> tuple[str, Any]:
    """Render a measurement as a compact suffix key or an explicit object."""
    default_kind = _SUFFIX_UNITS.get(m.unit)
    if default_kind is m.kind and m.dimensions is None:
        return f"{name}_{m.unit}", m.value
    obj: dict[str, Any] = {"value": m.value, "unit": m.unit, "kind": m.kind.value}
    if m.dimensions is not None:
        obj["dimensions"] = list(m.dimensions)
    return name, obj


def _attributes_doc(finding: StructuredFinding) -> dict:
    doc: dict[str, Any] = {}
    ordered = sorted(finding.attributes, key=lambda k: (k != "size", k))
    for key in ordered:
        value = finding.attributes[key]
        if isinstance(value, Measurement):
            name, rendered = _measurement_entry(key, value)
            doc[name] = rendered
        else:
            doc[key] = value
    if finding.comparison is not None:
        doc["change"] = finding.comparison.change.value
    return doc


def _comparison_doc(comparison: Comparison) -> Optional[dict]:
    doc: dict[str, Any] = {}
    if comparison.prior_exam_date is not None:
        doc["prior_exam_date"] = comparison.prior_exam_date.iso()
    if comparison.prior_finding_id is not None:
        doc["prior_finding_id"] = comparison.prior_finding_id
    if comparison.prior_modality is not None:
        doc["prior_modality"] = comparison.prior_modality.value
    if comparison.prior_measurement is not None:
        name, rendered = _measurement_entry("prior_size", comparison.prior_measurement)
        if isinstance(rendered, dict):
            doc["prior_measurement"] = rendered
        else:
            doc[name] = rendered
    return doc or None


def _evidence_doc(finding: StructuredFinding) -> dict:
    slots: dict[str, Any] = {}
    extra: list[EvidenceRef] = []
    for ref in finding.evidence:
        if ref.kind is EvidenceKind.IMAGE and not ref.prior and "current_image_reference" not in slots:
            slots["current_image_reference"] = {"series": ref.series, "image": ref.image}
        elif ref.kind is EvidenceKind.IMAGE and ref.prior and "prior_image_reference" not in slots:
            slots["prior_image_reference"] = {"series": ref.series, "image": ref.image}
        elif ref.kind is EvidenceKind.MEASUREMENT_OBJECT and not ref.prior and "measurement_object" not in slots:
            slots["measurement_object"] = ref.object_id
        elif ref.kind is EvidenceKind.SEGMENTATION_OBJECT and not ref.prior and "segmentation_object" not in slots:
            slots["segmentation_object"] = ref.object_id
        else:
            extra.append(ref)
    doc: dict[str, Any] = {}
    for key in ("current_image_reference", "prior_image_reference", "measurement_object", "segmentation_object"):
        if key in slots:
            doc[key] = slots[key]
    if extra:
        refs = []
        for ref in extra:
            item: dict[str, Any] = {"kind": ref.kind.value}
            if ref.series is not None:
                item["series"] = ref.series
            if ref.image is not None:
                item["image"] = ref.image
            if ref.object_id is not None:
                item["object_id"] = ref.object_id
            if ref.prior:
                item["prior"] = True
            refs.append(item)
        doc["additional_references"] = refs
    return doc


def _concept_doc(concept: CodedConcept):
    if concept.system is CodeSystem.LOCAL:
        return concept.code
    return {"system": concept.system.value, "code": concept.code}


def _provenance_doc(p: Provenance) -> dict:
    doc: dict[str, Any] = {}
    if p.source is not None:
        doc["source"] = p.source.value
    if p.measurement_source is not None:
        doc["measurement_source"] = p.measurement_source
    if p.segmentation_source is not None:
        doc["segmentation_source"] = p.segmentation_source
    if p.comparison_source is not None:
        doc["comparison_source"] = p.comparison_source
    if p.model_version is not None:
        doc["model_version"] = p.model_version
    if p.timestamp is not None:
        doc["timestamp"] = p.timestamp.isoformat()
    doc["review_status"] = p.review_status.value
    doc["reviewer_role"] = p.actor_role.value
    return doc


def study_to_doc(study: StudyContext, template_id: Optional[str]) -> dict:
    doc: dict[str, Any] = {"study_uid": study.study_uid}
    if study.accession is not None:
        doc["accession"] = study.accession
    doc["modality"] = study.modality.value
    if template_id is not None:
        doc["template_id"] = template_id
    if study.body_region is not None:
        doc["body_region"] = study.body_region
    if study.protocol is not None:
        doc["protocol"] = study.protocol
    if study.indication is not None:
        doc["indication"] = study.indication
    doc["exam_date"] = study.exam_date.isoformat()
    if study.follow_up:
        doc["follow_up"] = True
    if study.prior_refs:
        doc["prior_studies"] = [
            {
                "study_uid": ref.study_uid,
                "exam_date": ref.exam_date.isoformat(),
                "modality": ref.modality.value,
                **({"protocol": ref.protocol} if ref.protocol is not None else {}),
            }
            for ref in study.prior_refs
        ]
    return doc


def finding_to_doc(finding: StructuredFinding) -> dict:
    """Finding-level blocks (everything except the study), Listing-1 shaped."""
    finding_block: dict[str, Any] = {
        "finding_id": finding.finding_id,
        "type": finding.type,
        "presence": finding.presence.value,
        "uncertainty": finding.uncertainty.value,
    }
    location: dict[str, Any] = {}
    if finding.location.anatomical_site is not None:
        location["anatomical_site"] = finding.location.anatomical_site
    location["laterality"] = finding.location.laterality.value
    finding_block["location"] = location
    finding_block["attributes"] = _attributes_doc(finding)
    if finding.comparison is not None:
        comparison = _comparison_doc(finding.comparison)
        if comparison:
            finding_block["comparison"] = comparison

    doc: dict[str, Any] = {"finding": finding_block, "evidence": _evidence_doc(finding)}

    terminology: dict[str, Any] = {}
    if finding.terminology.finding_code is not None:
        terminology["finding_code"] = _concept_doc(finding.terminology.finding_code)
    if finding.terminology.anatomy_code is not None:
        terminology["anatomy_code"] = _concept_doc(finding.terminology.anatomy_code)
    terminology["unit"] = finding.terminology.unit
    doc["terminology"] = terminology

    doc["provenance"] = _provenance_doc(finding.provenance)
    if finding.final_sentence is not None:
        doc["final_report_text"] = {
            "sentence": finding.final_sentence.sentence,
            "section": finding.final_sentence.section.value,
        }
    return doc


def serialize_canonical(fragment: CanonicalFragment) -> str:
    """Serialize a validated fragment to canonical UTF-8 JSON text."""
    problems = fragment.validate()
    if problems:
        raise ModelValidationError("; ".join(problems), target=problems[0].split(":")[0])
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    doc["study"] = study_to_doc(fragment.study, fragment.template_id)
    doc.update(finding_to_doc(fragment.finding))
    return dumps_canonical(doc) + "\n"


# ---------------------------------------------------------------------------
# read side
# ---------------------------------------------------------------------------

def _parse_measurement_obj(doc, path: str) -> Measurement:
    if not isinstance(doc, dict):
        raise _fail(path, "expected a measurement object")
    _require_keys(doc, {"value": True, "unit": True, "kind": True, "dimensions": False}, path)
    value = _as_decimal(doc["value"], f"{path}.value")
    unit = _as_str(doc["unit"], f"{path}.unit")
    kind = _as_enum(MeasurementKind, doc["kind"], f"{path}.kind")
    dims = None
    if "dimensions" in doc:
        if not isinstance(doc["dimensions"], list):
            raise _fail(f"{path}.dimensions", "expected a list of numbers")
        dims = tuple(_as_decimal(d, f"{path}.dimensions[{i}]") for i, d in enumerate(doc["dimensions"]))
    try:
        return Measurement(value, unit, kind, dims)
    except ModelValidationError as exc:
        raise _fail(path, exc.message)


def _split_suffix_key(key: str) -> Optional[tuple[str, str, MeasurementKind]]:
    if "_" not in key:
        return None
    name, suffix = key.rsplit("_", 1)
    if suffix in _SUFFIX_UNITS and name:
        return name, suffix, _SUFFIX_UNITS[suffix]
    return None


def _parse_attributes(doc, path: str) -> tuple[dict, Optional[ChangeStatus]]:
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    attributes: dict[str, Any] = {}
    change: Optional[ChangeStatus] = None
    for key, value in doc.items():
        key_path = f"{path}.{key}"
        if key == "change":
            change = _as_enum(ChangeStatus, _as_str(value, key_path), key_path)
            continue
        split = _split_suffix_key(key)
        if split is not None and isinstance(value, (int, Decimal)) and not isinstance(value, bool):
            name, unit, kind = split
            try:
                attributes[name] = Measurement(_as_decimal(value, key_path), unit, kind)
            except ModelValidationError as exc:
                raise _fail(key_path, exc.message)
        elif isinstance(value, dict):
            attributes[key] = _parse_measurement_obj(value, key_path)
        elif isinstance(value, str):
            attributes[key] = value
        else:
            raise _fail(key_path, "expected a token, a measurement object, or a <name>_<unit> number")
    return attributes, change


def _parse_comparison(doc, change: Optional[ChangeStatus], path: str) -> Optional[Comparison]:
    if doc is None:
        if change is None:
            return None
        return Comparison(change=change)
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    if change is None:
        raise _fail(f"{path}", "comparison block requires a change value in attributes")
    allowed = {
        "prior_exam_date": False,
        "prior_finding_id": False,
        "prior_modality": False,
        "prior_measurement": False,
    }
    prior_measurement = None
    stray = [k for k in doc if k not in allowed and _split_suffix_key(k) is None]
    for key in stray:
        raise _fail(f"{path}.{key}", "unknown key")
    for key, value in doc.items():
        split = _split_suffix_key(key)
        if split is not None:
            name, unit, kind = split
            if name != "prior_size":
                raise _fail(f"{path}.{key}", "unknown key")
            if prior_measurement is not None:
                raise _fail(f"{path}.{key}", "duplicate prior measurement")
            prior_measurement = Measurement(_as_decimal(value, f"{path}.{key}"), unit, kind)
    if "prior_measurement" in doc:
        if prior_measurement is not None:
            raise _fail(f"{path}.prior_measurement", "duplicate prior measurement")
        prior_measurement = _parse_measurement_obj(doc["prior_measurement"], f"{path}.prior_measurement")
    prior_date = None
    if "prior_exam_date" in doc:
        prior_date = PartialDate.parse(_as_str(doc["prior_exam_date"], f"{path}.prior_exam_date"))
    prior_modality = None
    if "prior_modality" in doc:
        prior_modality = _as_enum(Modality, doc["prior_modality"], f"{path}.prior_modality")
    prior_finding_id = None
    if "prior_finding_id" in doc:
        prior_finding_id = _as_str(doc["prior_finding_id"], f"{path}.prior_finding_id")
    return Comparison(
        change=change,
        prior_exam_date=prior_date,
        prior_finding_id=prior_finding_id,
        prior_measurement=prior_measurement,
        prior_modality=prior_modality,
    )


def _parse_image_ref(doc, path: str, prior: bool) -> EvidenceRef:
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    _require_keys(doc, {"series": True, "image": True}, path)
    return EvidenceRef(
        EvidenceKind.IMAGE,
        series=_as_int(doc["series"], f"{path}.series"),
        image=_as_int(doc["image"], f"{path}.image"),
        prior=prior,
    )


def _parse_evidence(doc, path: str) -> tuple[EvidenceRef, ...]:
    if doc is None:
        return ()
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    allowed = {
        "current_image_reference": False,
        "prior_image_reference": False,
        "measurement_object": False,
        "segmentation_object": False,
        "additional_references": False,
    }
    _require_keys(doc, allowed, path)
    refs: list[EvidenceRef] = []
    if "current_image_reference" in doc:
        refs.append(_parse_image_ref(doc["current_image_reference"], f"{path}.current_image_reference", False))
    if "prior_image_reference" in doc:
        refs.append(_parse_image_ref(doc["prior_image_reference"], f"{path}.prior_image_reference", True))
    if "measurement_object" in doc:
        refs.append(
            EvidenceRef(
                EvidenceKind.MEASUREMENT_OBJECT,
                object_id=_as_str(doc["measurement_object"], f"{path}.measurement_object"),
            )
        )
    if "segmentation_object" in doc:
        refs.append(
            EvidenceRef(
                EvidenceKind.SEGMENTATION_OBJECT,
                object_id=_as_str(doc["segmentation_object"], f"{path}.segmentation_object"),
            )
        )
    for i, item in enumerate(doc.get("additional_references", [])):
        item_path = f"{path}.additional_references[{i}]"
        if not isinstance(item, dict):
            raise _fail(item_path, "expected an object")
        _require_keys(
            item,
            {"kind": True, "series": False, "image": False, "object_id": False, "prior": False},
            item_path,
        )
        refs.append(
            EvidenceRef(
                _as_enum(EvidenceKind, item["kind"], f"{item_path}.kind"),
                series=_as_int(item["series"], f"{item_path}.series") if "series" in item else None,
                image=_as_int(item["image"], f"{item_path}.image") if "image" in item else None,
                object_id=_as_str(item["object_id"], f"{item_path}.object_id") if "object_id" in item else None,
                prior=bool(item.get("prior", False)),
            )
        )
    return tuple(refs)


def _parse_concept(value, path: str) -> CodedConcept:
    if isinstance(value, str):
        return CodedConcept(CodeSystem.LOCAL, value)
    if isinstance(value, dict):
        _require_keys(value, {"system": True, "code": True}, path)
        return CodedConcept(
            _as_enum(CodeSystem, value["system"], f"{path}.system"),
            _as_str(value["code"], f"{path}.code"),
        )
    raise _fail(path, "expected a code string or a {system, code} object")


def _parse_terminology(doc, path: str) -> TerminologyBinding:
    if doc is None:
        return TerminologyBinding()
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    _require_keys(doc, {"finding_code": False, "anatomy_code": False, "unit": True}, path)
    return TerminologyBinding(
        unit=_as_str(doc["unit"], f"{path}.unit"),
        finding_code=_parse_concept(doc["finding_code"], f"{path}.finding_code") if "finding_code" in doc else None,
        anatomy_code=_parse_concept(doc["anatomy_code"], f"{path}.anatomy_code") if "anatomy_code" in doc else None,
    )


def _parse_provenance(doc, path: str) -> Provenance:
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    allowed = {
        "source": False,
        "measurement_source": False,
        "segmentation_source": False,
        "comparison_source": False,
        "model_version": False,
        "timestamp": False,
        "review_status": True,
        "reviewer_role": True,
    }
    _require_keys(doc, allowed, path)
    timestamp = None
    if "timestamp" in doc:
        try:
            timestamp = dt.datetime.fromisoformat(_as_str(doc["timestamp"], f"{path}.timestamp"))
        except ValueError:
            raise _fail(f"{path}.timestamp", "not an ISO-8601 instant")
    return Provenance(
        actor_role=_as_enum(ActorRole, doc["reviewer_role"], f"{path}.reviewer_role"),
        review_status=_as_enum(ReviewStatus, doc["review_status"], f"{path}.review_status"),
        source=_as_enum(ProvenanceSource, doc["source"], f"{path}.source") if "source" in doc else None,
        timestamp=timestamp,
        model_version=_as_str(doc["model_version"], f"{path}.model_version") if "model_version" in doc else None,
        measurement_source=_as_str(doc["measurement_source"], f"{path}.measurement_source")
        if "measurement_source" in doc
        else None,
        segmentation_source=_as_str(doc["segmentation_source"], f"{path}.segmentation_source")
        if "segmentation_source" in doc
        else None,
        comparison_source=_as_str(doc["comparison_source"], f"{path}.comparison_source")
        if "comparison_source" in doc
        else None,
    )


def _parse_date(value, path: str) -> dt.date:
    try:
        return dt.date.fromisoformat(_as_str(value, path))
    except ValueError:
        raise _fail(path, "not a calendar date (YYYY-MM-DD)")


def study_from_doc(doc, path: str = "study") -> tuple[StudyContext, Optional[str]]:
    if not isinstance(doc, dict):
        raise _fail(path, "expected an object")
    allowed = {
        "study_uid": True,
        "accession": False,
        "modality": True,
        "template_id": False,
        "body_region": False,
        "protocol": False,
        "indication": False,
        "exam_date": True,
        "follow_up": False,
        "prior_studies": False,
    }
    _require_keys(doc, allowed, path)
    priors = []
    for i, item in enumerate(doc.get("prior_studies", [])):
        item_path = f"{path}.prior_studies[{i}]"
        if not isinstance(item, dict):
            raise _fail(item_path, "expected an object")
        _require_keys(item, {"study_uid": True, "exam_date": True, "modality": True, "protocol": False}, item_path)
        priors.append(
            PriorStudyRef(
                study_uid=_as_str(item["study_uid"], f"{item_path}.study_uid"),
                exam_date=_parse_date(item["exam_date"], f"{item_path}.exam_date"),
                modality=_as_enum(Modality, item["modality"], f"{item_path}.modality"),
                protocol=_as_str(item["protocol"], f"{item_path}.protocol") if "protocol" in item else None,
            )
        )
    follow_up = doc.get("follow_up", False)
    if not isinstance(follow_up, bool):
        raise _fail(f"{path}.follow_up", "expected a boolean")
    study = StudyContext(
        study_uid=_as_str(doc["study_uid"], f"{path}.study_uid"),
        modality=_as_enum(Modality, doc["modality"], f"{path}.modality"),
        exam_date=_parse_date(doc["exam_date"], f"{path}.exam_date"),
        accession=_as_str(doc["accession"], f"{path}.accession") if "accession" in doc else None,
        body_region=_as_str(doc["body_region"], f"{path}.body_region") if "body_region" in doc else None,
        protocol=_as_str(doc["protocol"], f"{path}.protocol") if "protocol" in doc else None,
        indication=_as_str(doc["indication"], f"{path}.indication") if "indication" in doc else None,
        follow_up=follow_up,
        prior_refs=tuple(priors),
    )
    template_id = _as_str(doc["template_id"], f"{path}.template_id") if "template_id" in doc else None
    return study, template_id


def finding_from_doc(doc: dict, path: str = "") -> StructuredFinding:
    """Parse the finding-level blocks of a document (no study block)."""
    prefix = f"{path}." if path else ""
    allowed = {
        "finding": True,
        "evidence": False,
        "terminology": False,
        "provenance": True,
        "final_report_text": False,
    }
    for key in doc:
        if key not in allowed:
            raise _fail(f"{prefix}{key}", "unknown key")
    for key, required in allowed.items():
        if required and key not in doc:
            raise _fail(f"{prefix}{key}", "missing required key")

    fdoc = doc["finding"]
    fpath = f"{prefix}finding"
    if not isinstance(fdoc, dict):
        raise _fail(fpath, "expected an object")
    _require_keys(
        fdoc,
        {
            "finding_id": True,
            "type": True,
            "presence": False,
            "uncertainty": False,
            "location": False,
            "attributes": False,
            "comparison": False,
        },
        fpath,
    )
    location = AnatomicLocation()
    if "location" in fdoc:
        ldoc = fdoc["location"]
        lpath = f"{fpath}.location"
        if not isinstance(ldoc, dict):
            raise _fail(lpath, "expected an object")
        _require_keys(ldoc, {"anatomical_site": False, "laterality": True}, lpath)
        location = AnatomicLocation(
            anatomical_site=_as_str(ldoc["anatomical_site"], f"{lpath}.anatomical_site")
            if "anatomical_site" in ldoc
            else None,
            laterality=_as_enum(Laterality, ldoc["laterality"], f"{lpath}.laterality"),
        )
    attributes, change = _parse_attributes(fdoc.get("attributes", {}), f"{fpath}.attributes")
    comparison = _parse_comparison(fdoc.get("comparison"), change, f"{fpath}.comparison")

    final_sentence = None
    if "final_report_text" in doc:
        sdoc = doc["final_report_text"]
        spath = f"{prefix}final_report_text"
        if not isinstance(sdoc, dict):
            raise _fail(spath, "expected an object")
        _require_keys(sdoc, {"sentence": True, "section": True}, spath)
        final_sentence = FinalSentence(
            sentence=_as_str(sdoc["sentence"], f"{spath}.sentence"),
            section=_as_enum(SectionName, sdoc["section"], f"{spath}.section"),
        )

    try:
        finding = StructuredFinding(
            finding_id=_as_str(fdoc["finding_id"], f"{fpath}.finding_id"),
            type=_as_str(fdoc["type"], f"{fpath}.type"),
            presence=_as_enum(Presence, fdoc.get("presence", "present"), f"{fpath}.presence"),
            uncertainty=_as_enum(Uncertainty, fdoc.get("uncertainty", "asserted"), f"{fpath}.uncertainty"),
            location=location,
            attributes=attributes,
            comparison=comparison,
            evidence=_parse_evidence(doc.get("evidence"), f"{prefix}evidence"),
            terminology=_parse_terminology(doc.get("terminology"), f"{prefix}terminology"),
            provenance=_parse_provenance(doc["provenance"], f"{prefix}provenance"),
            final_sentence=final_sentence,
        )
    except ModelValidationError as exc:
        raise _fail(exc.target or fpath, exc.message)
    return finding


def parse_canonical(text: str) -> CanonicalFragment:
    """Parse canonical document text into a validated fragment."""
    doc = loads_decimal(text)
    if not isinstance(doc, dict):
        raise _fail("document", "expected a JSON object")
    allowed = {
        "schema_version": False,
        "study": True,
        "finding": True,
        "evidence": False,
        "terminology": False,
        "provenance": True,
        "final_report_text": False,
    }
    _require_keys(doc, allowed, "document")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise _fail("document.schema_version", f"unsupported version {version!r}")
    study, template_id = study_from_doc(doc["study"])
    finding = finding_from_doc({k: v for k, v in doc.items() if k not in ("schema_version", "study")})
    fragment = CanonicalFragment(study=study, finding=finding, template_id=template_id)
    problems = fragment.validate()
    if problems:
        raise ModelValidationError("; ".join(problems), target=problems[0].split(":")[0])
    return fragment
