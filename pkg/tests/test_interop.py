"""FHIR/SR encoding, parity, import, and the export gate."""

from __future__ import annotations

import base64
import copy
import random
from decimal import Decimal

import pytest

from radstruct.errors import DocumentImportError, ExportBlocked
from radstruct.interop import ExportView, export_fhir, export_sr, import_fhir, parity_check
from radstruct.interop.parity import MismatchKind
from radstruct.interop.schemas import validate_document
from radstruct.model.jsonio import dumps_canonical
from radstruct.model.types import Measurement, Presence

from conftest import clean_check_input, random_export_view


def _view(state="approved") -> ExportView:
    snapshot = clean_check_input()
    return ExportView(
        ctx=snapshot.ctx,
        template_id=snapshot.template.template_id,
        findings=snapshot.findings,
        report=snapshot.report,
        comparison_rows=snapshot.comparison_rows,
        state=state,
        template_name=snapshot.template.name,
    )


def _random_view(rng: random.Random) -> ExportView:
    return random_export_view(rng)


def test_export_blocked_outside_approved():
    for state in ("created", "parsed", "under_review", "rejected"):
        with pytest.raises(ExportBlocked):
            export_fhir(_view(state))
        with pytest.raises(ExportBlocked):
            export_sr(_view(state))


def test_fhir_export_reference_values():
    bundle = export_fhir(_view())
    observations = {
        e["resource"]["id"]: e["resource"]
        for e in bundle["entry"]
        if e["resource"]["resourceType"] == "Observation"
    }
    nodule = observations["NODULE-01"]
    assert nodule["valueQuantity"]["value"] == Decimal(7)
    assert nodule["valueQuantity"]["unit"] == "mm"
    assert nodule["valueQuantity"]["code"] == "mm"
    site_codes = {c["system"]: c["code"] for c in nodule["bodySite"]["coding"]}
    assert site_codes["local-anatomical-site"] == "right_upper_lobe"
    assert site_codes["local-laterality"] == "right"
    tokens = {d["identifier"]["value"] for d in nodule["derivedFrom"]}
    assert "image:3:142" in tokens
    assert "image:2:138:prior" in tokens
    effusion = observations["EFFUSION-01"]
    assert "valueQuantity" not in effusion
    assert effusion["interpretation"][0]["coding"][0]["code"] == "absent"

    report = bundle["entry"][0]["resource"]
    assert report["resourceType"] == "DiagnosticReport"
    assert report["status"] == "final"
    titles = [f["title"] for f in report["presentedForm"]]
    assert titles == ["Indication", "Technique", "Comparison", "Findings", "Impression"]
    findings_text = base64.b64decode(report["presentedForm"][3]["data"]).decode()
    assert "Stable 7 mm solid right upper lobe pulmonary nodule" in findings_text


def test_every_referenced_observation_exists():
    bundle = export_fhir(_view())
    report = bundle["entry"][0]["resource"]
    present = {
        e["resource"]["id"] for e in bundle["entry"] if e["resource"]["resourceType"] == "Observation"
    }
    referenced = {ref["reference"].split("/", 1)[1] for ref in report["result"]}
    assert referenced == present


def test_sr_export_reference_values():
    doc = export_sr(_view())
    groups = doc["content"]["children"][0]["children"]
    assert len(groups) == 1
    children = groups[0]["children"]
    by_type = {}
    for child in children:
        by_type.setdefault(child["value_type"], []).append(child)
    assert by_type["TEXT"][0]["value"] == "NODULE-01"
    assert by_type["UIDREF"][0]["value"].startswith("2.25.")
    nums = {c["concept"]["code"]: c["measured_value"] for c in by_type["NUM"]}
    assert nums["size"]["value"] == Decimal(7)
    assert nums["size"]["unit"] == "mm"
    images = {(c["series"], c["image"], c.get("prior", False)) for c in by_type["IMAGE"]}
    assert (3, 142, False) in images and (2, 138, True) in images


def test_sr_with_only_absent_findings_is_empty_but_valid():
    snapshot = clean_check_input()
    absent_only = tuple(f for f in snapshot.findings if f.presence is Presence.ABSENT)
    view = ExportView(
        ctx=snapshot.ctx,
        template_id=snapshot.template.template_id,
        findings=absent_only,
        report=snapshot.report,
        comparison_rows=(),
        state="approved",
    )
    doc = export_sr(view)
    assert doc["content"]["children"][0]["children"] == []
    validate_document(doc, "sr_measurement_report")


def test_parity_of_same_session_is_clean():
    view = _view()
    assert parity_check(export_fhir(view), export_sr(view)) == []


def test_parity_detects_hand_edited_value():
    view = _view()
    fhir = export_fhir(view)
    sr = copy.deepcopy(export_sr(view))
    for group in sr["content"]["children"][0]["children"]:
        for child in group["children"]:
            if child["value_type"] == "NUM" and child["concept"]["code"] == "size":
                child["measured_value"]["value"] = Decimal(8)
    mismatches = parity_check(fhir, sr)
    assert len(mismatches) == 1
    assert mismatches[0].kind is MismatchKind.VALUE
    assert mismatches[0].target == "NODULE-01/size"


def test_parity_detects_missing_counterpart():
    view = _view()
    fhir = copy.deepcopy(export_fhir(view))
    fhir["entry"] = [
        e
        for e in fhir["entry"]
        if not (e["resource"]["resourceType"] == "Observation" and e["resource"]["id"] == "NODULE-01")
    ]
    fhir["entry"][0]["resource"]["result"] = [
        r for r in fhir["entry"][0]["resource"]["result"] if "NODULE-01" not in r["reference"]
    ]
    mismatches = parity_check(fhir, export_sr(view))
    assert [m.kind for m in mismatches] == [MismatchKind.ABSENT_COUNTERPART]


def test_exports_are_byte_deterministic():
    view = _view()
    assert dumps_canonical(export_fhir(view)) == dumps_canonical(export_fhir(view))
    assert dumps_canonical(export_sr(view)) == dumps_canonical(export_sr(view))


def test_import_round_trip_preserves_clinical_fields():
    rng = random.Random(20260810)
    for _ in range(50):
        view = _random_view(rng)
        bundle = export_fhir(view)
        validate_document(bundle, "fhir_bundle")
        sr = export_sr(view)
        validate_document(sr, "sr_measurement_report")
        assert parity_check(bundle, sr) == []
        findings, sections = import_fhir(bundle)
        assert len(findings) == len(view.findings)
        for original, imported in zip(view.findings, findings):
            assert imported.finding_id == original.finding_id
            assert imported.type == original.type
            assert imported.presence is original.presence
            assert imported.location.anatomical_site == original.location.anatomical_site
            assert imported.location.laterality is original.location.laterality
            assert imported.provenance.review_status is original.provenance.review_status
            for key, m in original.measurements().items():
                back = imported.attributes[key]
                assert isinstance(back, Measurement)
                assert back.value == m.value
                assert back.unit == m.unit
        assert [s.name for s in sections] == [s.name for s in view.report.sections]
        assert [s.text for s in sections] == [s.text for s in view.report.sections]


def test_import_rejects_unit_kind_mismatch():
    bundle = copy.deepcopy(export_fhir(_view()))
    for entry in bundle["entry"]:
        resource = entry["resource"]
        if resource["resourceType"] == "Observation" and resource["id"] == "NODULE-01":
            for component in resource["component"]:
                if "valueQuantity" in component:
                    component["valueQuantity"]["code"] = "mL"
                    component["valueQuantity"]["unit"] = "mL"
    with pytest.raises(DocumentImportError):
        import_fhir(bundle)


def test_import_empty_bundle_gives_empty_fragment():
    view = _view()
    bundle = export_fhir(
        ExportView(
            ctx=view.ctx,
            template_id=view.template_id,
            findings=(),
            report=view.report,
            comparison_rows=(),
            state="approved",
        )
    )
    findings, sections = import_fhir(bundle)
    assert findings == ()
    assert sections


def test_import_rejects_schema_violation():
    bundle = copy.deepcopy(export_fhir(_view()))
    bundle["entry"][0]["resource"]["status"] = "preliminary"
    with pytest.raises(DocumentImportError) as err:
        import_fhir(bundle)
    assert "status" in str(err.value.target) or "status" in str(err.value)
